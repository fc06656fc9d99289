"""Camera poses: rigid extrinsics, normalized intrinsics, and orbit sampling.

Conventions. Extrinsics map world to camera coordinates (OpenCV axes:
x right, y down, z forward). Intrinsics are expressed in normalized image
units, i.e. pixel centers live at ((j + 0.5) / W, (i + 0.5) / H). A pose is
conditioned into the generator as the 25-float vector
``extrinsics.flatten() ++ intrinsics.flatten()`` (row-major).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

POSE_CONDITIONING_DIM = 25

#: Orbit radius placing the camera ring outside the [-1, 1]^3 scene cube.
ORBIT_RADIUS = 3.0

#: Default vertical field of view; a 50 degree frustum at radius 3 keeps the
#: whole cube inside every view of the sampled orbit band.
DEFAULT_FOV_DEGREES = 50.0


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera extrinsics plus normalized pinhole intrinsics."""

    extrinsics: torch.Tensor  # (4, 4)
    intrinsics: torch.Tensor  # (3, 3)

    def __post_init__(self) -> None:
        ex, intr = self.extrinsics, self.intrinsics
        if ex.shape != (4, 4) or intr.shape != (3, 3):
            raise ValueError("extrinsics must be 4x4 and intrinsics 3x3")
        rot = ex[:3, :3]
        eye = torch.eye(3, dtype=rot.dtype)
        if not torch.allclose(rot @ rot.T, eye, atol=1e-6):
            raise ValueError("extrinsic rotation block is not orthonormal")
        if not torch.allclose(ex[3], torch.tensor([0.0, 0.0, 0.0, 1.0], dtype=ex.dtype), atol=1e-6):
            raise ValueError("extrinsics bottom row must be [0, 0, 0, 1]")
        lower = torch.tril(intr, diagonal=-1)
        if not torch.allclose(lower, torch.zeros_like(lower), atol=1e-8):
            raise ValueError("intrinsics must be upper-triangular")
        if not bool((torch.diagonal(intr) > 0).all()):
            raise ValueError("intrinsics diagonal must be positive")

    @property
    def camera_center(self) -> torch.Tensor:
        """Camera position in world coordinates."""
        rot = self.extrinsics[:3, :3]
        t = self.extrinsics[:3, 3]
        return -rot.T @ t

    def conditioning(self) -> torch.Tensor:
        """Flattened 25-float conditioning vector (row-major ext ++ intr)."""
        return torch.cat([self.extrinsics.reshape(-1), self.intrinsics.reshape(-1)])

    def to(self, dtype: torch.dtype) -> "CameraPose":
        return CameraPose(self.extrinsics.to(dtype), self.intrinsics.to(dtype))


def identity_pose(fov_degrees: float = DEFAULT_FOV_DEGREES) -> CameraPose:
    """Camera at the world origin looking along +z."""
    return CameraPose(torch.eye(4, dtype=torch.float32), pinhole_intrinsics(fov_degrees))


def pinhole_intrinsics(fov_degrees: float = DEFAULT_FOV_DEGREES) -> torch.Tensor:
    """Normalized intrinsics for a square image with a centered principal point."""
    focal = 1.0 / (2.0 * math.tan(math.radians(fov_degrees) / 2.0))
    return torch.tensor(
        [[focal, 0.0, 0.5], [0.0, focal, 0.5], [0.0, 0.0, 1.0]], dtype=torch.float32
    )


def orbit_pose(
    yaw: float,
    pitch: float,
    radius: float = ORBIT_RADIUS,
    fov_degrees: float = DEFAULT_FOV_DEGREES,
) -> CameraPose:
    """Camera on a sphere around the origin, looking at the origin.

    yaw rotates about the world y axis (yaw 0, pitch 0 places the camera on
    the +z axis); pitch lifts the camera toward +y. Angles in radians.
    """
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    center = torch.tensor([radius * sy * cp, radius * sp, radius * cy * cp], dtype=torch.float64)

    forward = -center / torch.linalg.vector_norm(center)
    up = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
    right = torch.linalg.cross(forward, up)
    norm = torch.linalg.vector_norm(right)
    if float(norm) < 1e-9:
        raise ValueError("camera forward axis parallel to world up; reduce |pitch|")
    right = right / norm
    down = torch.linalg.cross(forward, right)

    rot = torch.stack([right, down, forward])  # rows: world -> camera
    ext = torch.eye(4, dtype=torch.float64)
    ext[:3, :3] = rot
    ext[:3, 3] = -rot @ center
    return CameraPose(ext.to(torch.float32), pinhole_intrinsics(fov_degrees))


def sample_orbit_poses(
    count: int,
    rng: torch.Generator,
    yaw_range: float = 0.6,
    pitch_range: float = 0.3,
    radius: float = ORBIT_RADIUS,
) -> list[CameraPose]:
    """Uniform yaw/pitch draws on the orbit, one pose per sample."""
    yaws = (torch.rand(count, generator=rng) * 2.0 - 1.0) * yaw_range
    pitches = (torch.rand(count, generator=rng) * 2.0 - 1.0) * pitch_range
    return [orbit_pose(float(y), float(p), radius=radius) for y, p in zip(yaws, pitches)]


def conditioning_batch(poses: list[CameraPose], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Stack pose conditioning vectors into a (B, 25) tensor."""
    return torch.stack([p.conditioning().to(dtype) for p in poses])

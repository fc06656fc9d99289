"""Differentiable ray generation and discrete volume-rendering quadrature.

Rays follow the pinhole model of a :class:`~adapter3d.camera.CameraPose`.
Each ray is integrated with midpoint quadrature over uniform bins between
its near and far bounds: per-bin opacity ``alpha_i = 1 - exp(-sigma_i *
delta_i)``, accumulated transmittance ``T_i = prod_{j<i} (1 - alpha_j)``,
weights ``w_i = T_i * alpha_i``. The rendered feature is ``sum_i w_i c_i``;
depth is the expected termination ``sum_i w_i t_i`` with the residual
transmitted mass assigned to the far bound, so a vacuum ray reports exactly
``t_far``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch

from .camera import CameraPose
from .config import RenderConfig
from .generator import TriPlanes, sample_triplanes

Decoder = Callable[[torch.Tensor], tuple[torch.Tensor, torch.Tensor]]


@dataclass(frozen=True)
class Ray:
    """Single ray with unit direction and positive near/far bounds."""

    origin: torch.Tensor
    direction: torch.Tensor
    t_near: float
    t_far: float

    def __post_init__(self) -> None:
        if self.origin.shape != (3,) or self.direction.shape != (3,):
            raise ValueError("ray origin and direction must be 3-vectors")
        norm = float(torch.linalg.vector_norm(self.direction.detach().double()))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"ray direction must be unit length, |d| = {norm}")
        if not (0.0 < self.t_near < self.t_far):
            raise ValueError("require 0 < t_near < t_far")


def generate_rays(
    pose: CameraPose, resolution: int, dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor]:
    """One ray per pixel center: origins (R, R, 3) and unit directions (R, R, 3).

    Pixel (i, j) maps to normalized image coordinates ((j + 0.5) / R,
    (i + 0.5) / R); directions are back-projected through the intrinsics and
    rotated into world space.
    """
    intr = pose.intrinsics.to(torch.float64)
    ext = pose.extrinsics.to(torch.float64)
    fx, fy = intr[0, 0], intr[1, 1]
    cx, cy = intr[0, 2], intr[1, 2]

    idx = (torch.arange(resolution, dtype=torch.float64) + 0.5) / resolution
    v, u = torch.meshgrid(idx, idx, indexing="ij")
    dirs_cam = torch.stack([(u - cx) / fx, (v - cy) / fy, torch.ones_like(u)], dim=-1)

    rot = ext[:3, :3]
    dirs = dirs_cam @ rot  # row-vector form of rot.T @ d
    dirs = dirs / torch.linalg.vector_norm(dirs, dim=-1, keepdim=True)
    origin = (-rot.T @ ext[:3, 3]).expand(resolution, resolution, 3)
    return origin.to(dtype).contiguous(), dirs.to(dtype)


def _sample_depths(
    n_samples: int,
    t_near: float,
    t_far: float,
    lead_shape: tuple[int, ...],
    stratified: bool,
    rng: torch.Generator | None,
    dtype: torch.dtype,
) -> tuple[torch.Tensor, float]:
    """Per-bin sample depths (midpoints, or jittered when stratified)."""
    delta = (t_far - t_near) / n_samples
    edges = t_near + delta * torch.arange(n_samples, dtype=dtype)
    if stratified:
        jitter = torch.rand(*lead_shape, n_samples, generator=rng, dtype=torch.float32)
        t = edges + delta * jitter.to(dtype)
    else:
        t = (edges + 0.5 * delta).expand(*lead_shape, n_samples)
    return t, delta


def _quadrature(
    color: torch.Tensor,
    density: torch.Tensor,
    t: torch.Tensor,
    delta: float,
    t_far: float,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Accumulate (feature, depth, weight_sum) from per-sample decoder output."""
    alpha = 1.0 - torch.exp(-density * delta)
    trans = torch.cumprod(1.0 - alpha, dim=-1)
    ones = torch.ones_like(alpha[..., :1])
    trans = torch.cat([ones, trans[..., :-1]], dim=-1)
    weights = trans * alpha
    feature = (weights.unsqueeze(-1) * color).sum(dim=-2)
    weight_sum = weights.sum(dim=-1)
    depth = (weights * t).sum(dim=-1) + (1.0 - weight_sum) * t_far
    return feature, depth, weight_sum


def render_rays(
    decoder: Decoder,
    tp: TriPlanes,
    origins: torch.Tensor,
    directions: torch.Tensor,
    cfg: RenderConfig,
    rng: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Quadrature over a bundle of rays with shared near/far bounds.

    ``origins``/``directions`` are (..., 3) with leading dims matching the
    planes' batching. Returns (feature (..., C), depth (...), weight_sum (...)).
    Raises if the decoder emits non-finite values.
    """
    dtype = tp.planes.dtype
    origins = origins.to(dtype)
    directions = directions.to(dtype)
    lead = tuple(origins.shape[:-1])
    t, delta = _sample_depths(
        cfg.n_samples, cfg.t_near, cfg.t_far, lead, cfg.stratified, rng, dtype
    )
    points = origins.unsqueeze(-2) + directions.unsqueeze(-2) * t.unsqueeze(-1)
    features = sample_triplanes(tp, points)
    color, density = decoder(features)
    if not bool(torch.isfinite(color).all()) or not bool(torch.isfinite(density).all()):
        raise ValueError("decoder produced non-finite color or density")
    return _quadrature(color, density, t, delta, cfg.t_far)


def render_ray(
    decoder: Decoder,
    tp: TriPlanes,
    ray: Ray,
    cfg: RenderConfig,
    rng: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Render a single ray: (feature (C,), depth scalar, weight_sum scalar)."""
    if tp.batched:
        raise ValueError("render_ray expects unbatched planes")
    ray_cfg = cfg
    if (ray.t_near, ray.t_far) != (cfg.t_near, cfg.t_far):
        import dataclasses

        ray_cfg = dataclasses.replace(cfg, t_near=ray.t_near, t_far=ray.t_far)
    feature, depth, wsum = render_rays(
        decoder, tp, ray.origin.unsqueeze(0), ray.direction.unsqueeze(0), ray_cfg, rng=rng
    )
    return feature.squeeze(0), depth.squeeze(0), wsum.squeeze(0)


def render_image(
    decoder: Decoder,
    tp: TriPlanes,
    poses: CameraPose | Sequence[CameraPose],
    resolution: int,
    cfg: RenderConfig,
    rng: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-pixel rendering: feature image(s) (…, R, R, C) and depth map(s).

    Accepts a single pose with unbatched planes, or a pose sequence matching
    the plane batch. Deterministic when ``cfg.stratified`` is false.
    """
    dtype = tp.planes.dtype
    if isinstance(poses, CameraPose):
        if tp.batched:
            raise ValueError("single pose requires unbatched planes")
        origins, dirs = generate_rays(poses, resolution, dtype)
        feature, depth, _ = render_rays(decoder, tp, origins, dirs, cfg, rng=rng)
        return feature, depth
    pose_list = list(poses)
    if not tp.batched or tp.planes.shape[0] != len(pose_list):
        raise ValueError("pose count must match the plane batch")
    bundles = [generate_rays(p, resolution, dtype) for p in pose_list]
    origins = torch.stack([b[0] for b in bundles])
    dirs = torch.stack([b[1] for b in bundles])
    feature, depth, _ = render_rays(decoder, tp, origins, dirs, cfg, rng=rng)
    return feature, depth

"""Tri-plane generator: mapping network, plane synthesis, tri-plane decoder,
and the style-modulated super-resolution head, with named parameter
partitioning into the four tunable sets {M, G1, TriD, G2}.

The hybrid 3D representation stores features on three axis-aligned planes;
a point's feature is the sum of its three bilinear plane samples. A small
decoder MLP turns that feature into color features and density for volume
rendering, and the super-resolution head upsamples the rendered feature
image to the final RGB output.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .camera import POSE_CONDITIONING_DIM, CameraPose, conditioning_batch
from .config import ConfigError, GeneratorConfig, RenderConfig
from .util import seeded_generator

PARTITION_NAMES = ("M", "G1", "TriD", "G2")
_PARTITION_PREFIXES = {
    "M": "mapping.",
    "G1": "synthesis.",
    "TriD": "decoder.",
    "G2": "superres.",
}


@dataclass(frozen=True)
class LatentCode:
    """Input latent vector with optional seed provenance."""

    values: torch.Tensor
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.values.ndim != 1:
            raise ConfigError("latent code must be a 1-D vector")
        if not bool(torch.isfinite(self.values).all()):
            raise ValueError("latent code contains non-finite entries")


def latent_from_seed(seed: int, d_z: int, dtype: torch.dtype = torch.float32) -> LatentCode:
    """Standard-normal latent drawn from a dedicated seeded stream."""
    rng = seeded_generator(seed, "latent")
    return LatentCode(torch.randn(d_z, generator=rng, dtype=torch.float32).to(dtype), seed=seed)


@dataclass(frozen=True)
class TriPlanes:
    """Three axis-aligned feature planes, channel-last.

    ``planes`` has shape (3, H, H, M) or batched (B, 3, H, H, M); plane 0
    spans (x, y), plane 1 (x, z), plane 2 (y, z). Entry [v, u] of a plane
    holds the feature at grid coordinates u (first axis of the pair) and v
    (second axis), both on the align-corners lattice over [-1, 1].
    """

    planes: torch.Tensor

    def __post_init__(self) -> None:
        p = self.planes
        if p.ndim not in (4, 5) or p.shape[-4] != 3 or p.shape[-3] != p.shape[-2]:
            raise ValueError(f"expected planes of shape (..., 3, H, H, M), got {tuple(p.shape)}")

    @property
    def resolution(self) -> int:
        return self.planes.shape[-2]

    @property
    def channels(self) -> int:
        return self.planes.shape[-1]

    @property
    def batched(self) -> bool:
        return self.planes.ndim == 5


@dataclass(frozen=True)
class PointSample:
    """Decoded point: aggregated plane feature, color feature, density."""

    feature: torch.Tensor
    color_feature: torch.Tensor
    density: torch.Tensor


@dataclass
class ParamPartition:
    """Disjoint, exhaustive split of generator parameters into named sets."""

    sets: dict[str, list[tuple[str, tuple[int, ...]]]]
    trainable: frozenset[str]

    def count(self, name: str) -> int:
        total = 0
        for _, shape in self.sets[name]:
            n = 1
            for s in shape:
                n *= s
            total += n
        return total

    @property
    def total(self) -> int:
        return sum(self.count(name) for name in self.sets)


def partition_name_for(param_name: str) -> str:
    """Map a dotted parameter name to its partition set; fail loudly otherwise."""
    for name, prefix in _PARTITION_PREFIXES.items():
        if param_name.startswith(prefix):
            return name
    raise RuntimeError(f"parameter {param_name!r} is not covered by any partition set")


class MappingNetwork(nn.Module):
    """Two leaky-ReLU layers mapping (latent ++ pose conditioning) to style space."""

    def __init__(self, d_z: int, d_w: int):
        super().__init__()
        self.fc0 = nn.Linear(d_z + POSE_CONDITIONING_DIM, d_w)
        self.fc1 = nn.Linear(d_w, d_w)

    def forward(self, z: torch.Tensor, pose_cond: torch.Tensor) -> torch.Tensor:
        h = torch.cat([z, pose_cond], dim=-1)
        h = F.leaky_relu(self.fc0(h), 0.2)
        return F.leaky_relu(self.fc1(h), 0.2)


class ModulatedConv2d(nn.Module):
    """StyleGAN2-style conv: per-sample input-channel modulation from the
    style vector, optional weight demodulation, grouped-conv evaluation."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, d_w: int, demodulate: bool = True):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.demodulate = demodulate
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.empty(out_ch))
        self.affine = nn.Linear(d_w, in_ch)

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        batch = x.shape[0]
        styles = self.affine(w)  # (B, in_ch)
        weight = self.weight.unsqueeze(0) * styles[:, None, :, None, None]
        if self.demodulate:
            denom = torch.sqrt(weight.pow(2).sum(dim=(2, 3, 4)) + 1e-8)
            weight = weight / denom[:, :, None, None, None]
        weight = weight.reshape(batch * self.out_ch, self.in_ch, self.kernel, self.kernel)
        out = F.conv2d(
            x.reshape(1, batch * self.in_ch, *x.shape[2:]),
            weight,
            padding=self.kernel // 2,
            groups=batch,
        )
        out = out.reshape(batch, self.out_ch, *out.shape[2:])
        return out + self.bias[None, :, None, None]


class PlaneSynthesis(nn.Module):
    """Style-conditioned synthesis of the stacked feature planes (G1).

    A learned constant at a quarter of the plane resolution runs through two
    upsample + modulated-conv stages, then a 1x1 modulated projection to the
    3 * M plane channels.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        base = cfg.plane_resolution // 4
        ch = cfg.synthesis_channels
        self.const = nn.Parameter(torch.empty(ch, base, base))
        self.conv0 = ModulatedConv2d(ch, ch, 3, cfg.d_w)
        self.conv1 = ModulatedConv2d(ch, ch, 3, cfg.d_w)
        self.to_planes = ModulatedConv2d(ch, 3 * cfg.plane_channels, 1, cfg.d_w, demodulate=False)

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        batch = w.shape[0]
        h = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        h = F.leaky_relu(self.conv0(h, w), 0.2)
        h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        h = F.leaky_relu(self.conv1(h, w), 0.2)
        return self.to_planes(h, w)  # (B, 3M, H_f, H_f)


class TriplaneDecoder(nn.Module):
    """Single-hidden-layer softplus MLP mapping an aggregated plane feature
    to color features plus a softplus-activated (hence non-negative) density."""

    def __init__(self, in_ch: int, hidden: int, color_ch: int):
        super().__init__()
        self.hidden = nn.Linear(in_ch, hidden)
        self.out = nn.Linear(hidden, color_ch + 1)
        self.color_ch = color_ch

    def forward(self, feature: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = F.softplus(self.hidden(feature))
        raw = self.out(h)
        density = F.softplus(raw[..., 0])
        return raw[..., 1:], density


class SuperResolver(nn.Module):
    """Style-modulated two-stage x2 upsampler (G2); the first three feature
    channels act as a skip/base image added to the refined output."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        ch = cfg.render_channels
        self.conv0 = ModulatedConv2d(ch, ch, 3, cfg.d_w)
        self.conv1 = ModulatedConv2d(ch, ch, 3, cfg.d_w)
        self.to_rgb = ModulatedConv2d(ch, 3, 1, cfg.d_w, demodulate=False)

    def forward(self, feature_image: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        # feature_image: (B, R, R, C) channel-last -> conv layout.
        x = feature_image.permute(0, 3, 1, 2)
        base = x[:, :3]
        h = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        h = F.leaky_relu(self.conv0(h, w), 0.2)
        h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        h = F.leaky_relu(self.conv1(h, w), 0.2)
        rgb = self.to_rgb(h, w)
        rgb = rgb + F.interpolate(base, scale_factor=4, mode="bilinear", align_corners=False)
        return rgb.permute(0, 2, 3, 1)  # (B, 4R, 4R, 3)


def split_raw_planes(raw: torch.Tensor, plane_channels: int) -> TriPlanes:
    """Split a (…, 3M, H, H) synthesis output channel-wise into the three
    planes: channels [0, M) -> XY, [M, 2M) -> XZ, [2M, 3M) -> YZ."""
    cl = raw.movedim(-3, -1)  # (..., H, H, 3M)
    m = plane_channels
    stacked = torch.stack([cl[..., 0:m], cl[..., m : 2 * m], cl[..., 2 * m : 3 * m]], dim=-4)
    return TriPlanes(stacked)


def sample_triplanes(tp: TriPlanes, points: torch.Tensor) -> torch.Tensor:
    """Aggregate bilinear plane samples at 3D points in [-1, 1]^3.

    The XY plane is read at (x, y), XZ at (x, z), YZ at (y, z); the three
    interpolated features are summed. Coordinate c maps to grid position
    (c + 1) / 2 * (H - 1) (align-corners lattice); points outside the cube
    are clamped to its surface. Accepts points of shape (..., 3) matching
    the planes' batching: a (B, 3, H, H, M) plane stack expects (B, ..., 3)
    points.

    Differentiable in both plane values and point coordinates.
    """
    planes = tp.planes
    squeeze = False
    if planes.ndim == 4:
        planes = planes.unsqueeze(0)
        points = points.unsqueeze(0)
        squeeze = True
    batch, _, res, _, ch = planes.shape
    pts = points.reshape(batch, -1, 3).clamp(-1.0, 1.0)
    n = pts.shape[1]
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    # (u, v) lookup coordinates per plane; u indexes the second array axis
    u = torch.stack([x, x, y], dim=1)
    v = torch.stack([y, z, z], dim=1)
    grid = torch.stack([u, v], dim=-1).reshape(batch * 3, n, 1, 2)

    chw = planes.permute(0, 1, 4, 2, 3).reshape(batch * 3, ch, res, res)
    sampled = F.grid_sample(chw, grid, mode="bilinear", align_corners=True, padding_mode="border")
    out = sampled.reshape(batch, 3, ch, n).sum(dim=1).transpose(1, 2)
    out = out.reshape(*points.shape[:-1], ch)
    return out.squeeze(0) if squeeze else out


class TriplaneGenerator(nn.Module):
    """Full generator pipeline with named, partitionable parameter sets.

    Submodule names fix the partition: ``mapping`` -> M, ``synthesis`` -> G1,
    ``decoder`` -> TriD, ``superres`` -> G2. All parameters are initialized
    from a seeded normal stream (scale ``init_scale``), filled in sorted
    parameter-name order so golden values are reproducible.
    """

    def __init__(self, config: GeneratorConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config or GeneratorConfig()
        self.mapping = MappingNetwork(self.config.d_z, self.config.d_w)
        self.synthesis = PlaneSynthesis(self.config)
        self.decoder = TriplaneDecoder(
            self.config.plane_channels, self.config.decoder_hidden, self.config.render_channels
        )
        self.superres = SuperResolver(self.config)
        self._seed_parameters()
        if dtype != torch.float32:
            self.to(dtype)
        self._dtype = dtype

    @property
    def dtype(self) -> torch.dtype:
        return self._dtype

    def _seed_parameters(self) -> None:
        """Seeded init, filled in sorted parameter-name order.

        Weight tensors use fan-in scaling and the synthesis constant is unit
        normal; a flat small-scale init leaves the rendered output constant
        to within float32 resolution, which defeats every downstream
        contract that depends on pose or latent variation. Biases stay at
        ``init_scale`` noise, and style-affine biases center on 1 so the
        modulation starts near identity.
        """
        rng = seeded_generator(self.config.init_seed, "generator-init")
        with torch.no_grad():
            for name, param in sorted(self.named_parameters(), key=lambda kv: kv[0]):
                base = torch.randn(param.shape, generator=rng)
                if name.endswith("affine.bias"):
                    values = 1.0 + base * self.config.init_scale
                elif name.endswith("const"):
                    values = base
                elif name.endswith(".bias"):
                    values = base * self.config.init_scale
                else:
                    fan_in = max(1, param.shape[1:].numel())
                    values = base / fan_in**0.5
                param.copy_(values)

    # -- partition control -------------------------------------------------

    def partition_parameters(self) -> ParamPartition:
        sets: dict[str, list[tuple[str, tuple[int, ...]]]] = {n: [] for n in PARTITION_NAMES}
        flags: dict[str, set[bool]] = {n: set() for n in PARTITION_NAMES}
        for pname, param in self.named_parameters():
            set_name = partition_name_for(pname)
            sets[set_name].append((pname, tuple(param.shape)))
            flags[set_name].add(param.requires_grad)
        for name, seen in flags.items():
            if len(seen) > 1:
                raise RuntimeError(f"partition set {name} has mixed requires_grad flags")
        trainable = frozenset(n for n in PARTITION_NAMES if flags[n] == {True})
        return ParamPartition(sets=sets, trainable=trainable)

    def set_trainable(self, names: Iterable[str]) -> None:
        """Unfreeze exactly the named sets; every other set is frozen."""
        wanted = set(names)
        unknown = wanted - set(PARTITION_NAMES)
        if unknown:
            raise ConfigError(f"unknown partition sets: {sorted(unknown)}")
        for pname, param in self.named_parameters():
            param.requires_grad_(partition_name_for(pname) in wanted)

    def parameters_of(self, name: str) -> list[nn.Parameter]:
        prefix = _PARTITION_PREFIXES[name]
        return [p for n, p in self.named_parameters() if n.startswith(prefix)]

    def clone(self) -> "TriplaneGenerator":
        """Deep copy with identical parameters and flags."""
        return copy.deepcopy(self)

    # -- forward ops --------------------------------------------------------

    def _as_latent_batch(self, z: torch.Tensor | LatentCode) -> torch.Tensor:
        values = z.values if isinstance(z, LatentCode) else z
        if values.ndim == 1:
            values = values.unsqueeze(0)
        if values.shape[-1] != self.config.d_z:
            raise ConfigError(
                f"latent dimension {values.shape[-1]} != configured d_z {self.config.d_z}"
            )
        if not bool(torch.isfinite(values).all()):
            raise ValueError("latent code contains non-finite entries")
        return values.to(self._dtype)

    def _as_pose_batch(self, pose: CameraPose | Sequence[CameraPose], batch: int) -> torch.Tensor:
        poses = [pose] * batch if isinstance(pose, CameraPose) else list(pose)
        if len(poses) != batch:
            raise ConfigError(f"got {len(poses)} poses for a batch of {batch}")
        return conditioning_batch(poses, dtype=self._dtype)

    def map_latent(
        self, z: torch.Tensor | LatentCode, pose: CameraPose | Sequence[CameraPose]
    ) -> torch.Tensor:
        """Style vector(s) for latent(s) conditioned on the flattened pose."""
        zb = self._as_latent_batch(z)
        cond = self._as_pose_batch(pose, zb.shape[0])
        w = self.mapping(zb, cond)
        single = isinstance(z, LatentCode) or (not isinstance(z, LatentCode) and z.ndim == 1)
        return w.squeeze(0) if single else w

    def synthesize_triplanes(self, w: torch.Tensor) -> TriPlanes:
        """Stacked feature planes for style vector(s) w."""
        single = w.ndim == 1
        wb = w.unsqueeze(0) if single else w
        if wb.shape[-1] != self.config.d_w:
            raise ConfigError(f"style dimension {wb.shape[-1]} != configured d_w {self.config.d_w}")
        raw = self.synthesis(wb)
        if not bool(torch.isfinite(raw).all()):
            raise ValueError("plane synthesis produced non-finite values")
        tp = split_raw_planes(raw, self.config.plane_channels)
        return TriPlanes(tp.planes.squeeze(0)) if single else tp

    def decode_point(self, feature: torch.Tensor) -> PointSample:
        """Decode one aggregated plane feature vector."""
        if not bool(torch.isfinite(feature).all()):
            raise ValueError("decoder input contains non-finite entries")
        color, density = self.decoder(feature)
        return PointSample(feature=feature, color_feature=color, density=density)

    def super_resolve(self, feature_image: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        """Upsample and refine a rendered feature image into the RGB output."""
        single = feature_image.ndim == 3
        fb = feature_image.unsqueeze(0) if single else feature_image
        wb = w.unsqueeze(0) if w.ndim == 1 else w
        if fb.shape[-1] != self.config.render_channels:
            raise ConfigError(
                f"feature image has {fb.shape[-1]} channels, expected {self.config.render_channels}"
            )
        if fb.shape[1] != self.config.render_resolution:
            raise ConfigError(
                f"feature image resolution {fb.shape[1]} != configured "
                f"{self.config.render_resolution}"
            )
        rgb = self.superres(fb, wb)
        return rgb.squeeze(0) if single else rgb

    def generate_from_styles(
        self,
        w: torch.Tensor,
        pose: CameraPose | Sequence[CameraPose],
        render_config: RenderConfig | None = None,
        rng: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Render RGB, feature image and depth from style vector(s)."""
        from .rendering import render_image  # local import breaks the module cycle

        cfg = render_config or RenderConfig()
        single = w.ndim == 1
        wb = w.unsqueeze(0) if single else w
        poses = [pose] * wb.shape[0] if isinstance(pose, CameraPose) else list(pose)
        tp = self.synthesize_triplanes(wb)
        feature, depth = render_image(
            self.decoder, tp, poses, self.config.render_resolution, cfg, rng=rng
        )
        rgb = self.super_resolve(feature, wb)
        if single:
            return rgb.squeeze(0), feature.squeeze(0), depth.squeeze(0)
        return rgb, feature, depth

    def generate(
        self,
        z: torch.Tensor | LatentCode,
        pose: CameraPose | Sequence[CameraPose],
        render_config: RenderConfig | None = None,
        rng: torch.Generator | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Full pipeline: latent -> style -> planes -> render -> RGB.

        Returns (rgb, feature_image, depth); channel-last, batched iff the
        latent input is batched. Pure function of (parameters, z, pose) when
        stratified jitter is off.
        """
        w = self.map_latent(z, pose)
        return self.generate_from_styles(w, pose, render_config, rng=rng)

    def named_parameter_arrays(self) -> dict[str, torch.Tensor]:
        """Detached parameter tensors keyed by dotted name (insertion order)."""
        return {name: p.detach().clone() for name, p in self.named_parameters()}

    def load_parameter_arrays(self, arrays: Mapping[str, torch.Tensor]) -> None:
        """Overwrite parameters from name -> tensor, requiring exact cover."""
        own = dict(self.named_parameters())
        missing = set(own) - set(arrays)
        extra = set(arrays) - set(own)
        if missing or extra:
            raise ConfigError(
                f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        with torch.no_grad():
            for name, param in own.items():
                src = torch.as_tensor(arrays[name])
                if tuple(src.shape) != tuple(param.shape):
                    raise ConfigError(
                        f"shape mismatch for {name}: {tuple(src.shape)} vs {tuple(param.shape)}"
                    )
                param.copy_(src.to(param.dtype))

"""adapter3d: one-shot and zero-shot domain adaptation for tri-plane
3D-aware generators, with the underlying volume-rendering generator,
adaptation losses, progressive fine-tuning schedules, and consistency
metrics."""

from .camera import CameraPose, identity_pose, orbit_pose, sample_orbit_poses
from .config import (
    AdaptationConfig,
    ConfigError,
    EncoderSpec,
    GeneratorConfig,
    MetricsConfig,
    RenderConfig,
    RunConfig,
    ablation_table_preset,
    dump_run_config,
    eval_render_config,
    load_run_config,
)
from .encoders import (
    StubImageEncoder,
    StubTextEncoder,
    TokenSequence,
    build_encoders,
    load_source_prompts,
    mean_source_embedding,
    mean_text_embedding,
)
from .generator import (
    LatentCode,
    ParamPartition,
    PointSample,
    TriPlanes,
    TriplaneGenerator,
    latent_from_seed,
    sample_triplanes,
)
from .losses import (
    DegenerateDirectionError,
    DomainDirection,
    cross_correlation_map,
    direction_loss,
    domain_direction,
    feature_structure_loss,
    image_structure_loss,
    remd_loss,
    self_correlation_map,
    text_direction_loss,
)
from .rendering import Ray, generate_rays, render_image, render_ray, render_rays

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig",
    "CameraPose",
    "ConfigError",
    "DegenerateDirectionError",
    "DomainDirection",
    "EncoderSpec",
    "GeneratorConfig",
    "LatentCode",
    "MetricsConfig",
    "ParamPartition",
    "PointSample",
    "Ray",
    "RenderConfig",
    "RunConfig",
    "StubImageEncoder",
    "StubTextEncoder",
    "TokenSequence",
    "TriPlanes",
    "TriplaneGenerator",
    "ablation_table_preset",
    "build_encoders",
    "cross_correlation_map",
    "direction_loss",
    "domain_direction",
    "dump_run_config",
    "eval_render_config",
    "feature_structure_loss",
    "generate_rays",
    "identity_pose",
    "image_structure_loss",
    "latent_from_seed",
    "load_run_config",
    "load_source_prompts",
    "mean_source_embedding",
    "mean_text_embedding",
    "orbit_pose",
    "remd_loss",
    "render_image",
    "render_ray",
    "render_rays",
    "sample_orbit_poses",
    "sample_triplanes",
    "self_correlation_map",
    "text_direction_loss",
]

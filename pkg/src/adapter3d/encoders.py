"""Pluggable image/text encoders: global embeddings, intermediate token
sequences, and text embeddings.

The deterministic stub encoder backs every test and desk-scale run. It
resizes the input to a 32x32 canvas (bilinearly, so gradients flow), splits
it into 8x8 patches, and projects each flattened patch with a fixed seeded
matrix per layer -- four layers deep, 16-dimensional tokens. The global
image embedding is the L2-normalized mean of the deepest layer's tokens.
Text is hashed wordwise into rows of a seeded matrix and summed. Real
encoder weights can be plugged in behind the same three-method surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable, Protocol, runtime_checkable

import hashlib

import torch
import torch.nn.functional as F

from .config import EncoderSpec
from .util import seeded_generator

STUB_INPUT_SIZE = 32
STUB_PATCH_SIZE = 8
STUB_LAYERS = 4
STUB_DIM = 16
_TEXT_BUCKETS = 4096


@dataclass(frozen=True)
class TokenSequence:
    """Ordered intermediate tokens from one encoder layer.

    ``tokens`` is (n, d) or batched (B, n, d); every token must be nonzero
    so cosine distances stay defined downstream.
    """

    tokens: torch.Tensor
    layer: int

    def __post_init__(self) -> None:
        if self.tokens.ndim not in (2, 3) or self.tokens.shape[-2] < 1:
            raise ValueError("tokens must be (n, d) or (B, n, d) with n >= 1")
        if self.layer < 1:
            raise ValueError("layer index must be >= 1")
        norms = torch.linalg.vector_norm(self.tokens.detach(), dim=-1)
        if bool((norms == 0).any()):
            raise ValueError("token sequence contains an exactly-zero token")

    @property
    def count(self) -> int:
        return self.tokens.shape[-2]

    @property
    def dim(self) -> int:
        return self.tokens.shape[-1]


@runtime_checkable
class ImageEncoder(Protocol):
    embed_dim: int
    layer_count: int

    def encode_image(self, image: torch.Tensor) -> torch.Tensor: ...

    def encode_image_tokens(self, image: torch.Tensor, layer: int) -> TokenSequence: ...


@runtime_checkable
class TextEncoder(Protocol):
    embed_dim: int

    def encode_text(self, text: str) -> torch.Tensor: ...


def _check_image(image: torch.Tensor) -> torch.Tensor:
    if image.ndim == 3:
        batched = False
    elif image.ndim == 4:
        batched = True
    else:
        raise ValueError("image must be (H, W, 3) or (B, H, W, 3)")
    if image.shape[-1] != 3:
        raise ValueError("image must be channel-last RGB")
    if not bool(torch.isfinite(image).all()):
        raise ValueError("image contains non-finite pixels")
    return image if batched else image.unsqueeze(0)


class StubImageEncoder:
    """Seeded patchwise-linear image encoder; pure function of (seed, input)."""

    def __init__(self, seed: int = 0, token_layer: int = 3):
        self.seed = seed
        self.token_layer = token_layer
        self.embed_dim = STUB_DIM
        self.layer_count = STUB_LAYERS
        self.input_size = STUB_INPUT_SIZE
        patch_dim = STUB_PATCH_SIZE * STUB_PATCH_SIZE * 3
        rng = seeded_generator(seed, "stub-image-encoder")
        self._proj = torch.randn(STUB_LAYERS, STUB_DIM, patch_dim, generator=rng) / patch_dim**0.5
        self._bias = torch.randn(STUB_LAYERS, STUB_DIM, generator=rng) * 0.5

    def _patch_tokens(self, image: torch.Tensor, layer: int) -> torch.Tensor:
        img = _check_image(image)
        dtype = img.dtype
        x = img.permute(0, 3, 1, 2)
        if x.shape[-2:] != (self.input_size, self.input_size):
            x = F.interpolate(
                x, size=(self.input_size, self.input_size), mode="bilinear", align_corners=False
            )
        p = STUB_PATCH_SIZE
        n_side = self.input_size // p
        # (B, 3, ny, p, nx, p) -> (B, ny*nx, 3*p*p), patches in row-major order
        x = x.reshape(-1, 3, n_side, p, n_side, p)
        patches = x.permute(0, 2, 4, 1, 3, 5).reshape(-1, n_side * n_side, 3 * p * p)
        proj = self._proj[layer - 1].to(dtype)
        bias = self._bias[layer - 1].to(dtype)
        return patches @ proj.T + bias

    def encode_image_tokens(self, image: torch.Tensor, layer: int | None = None) -> TokenSequence:
        layer = self.token_layer if layer is None else layer
        if not (1 <= layer <= self.layer_count):
            raise ValueError(f"layer {layer} out of range 1..{self.layer_count}")
        tokens = self._patch_tokens(image, layer)
        if image.ndim == 3:
            tokens = tokens.squeeze(0)
        return TokenSequence(tokens=tokens, layer=layer)

    def encode_image(self, image: torch.Tensor) -> torch.Tensor:
        tokens = self._patch_tokens(image, self.layer_count)
        mean = tokens.mean(dim=-2)
        out = mean / torch.linalg.vector_norm(mean, dim=-1, keepdim=True)
        return out.squeeze(0) if image.ndim == 3 else out


class StubTextEncoder:
    """Seeded hashed bag-of-words text encoder."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.embed_dim = STUB_DIM
        rng = seeded_generator(seed, "stub-text-encoder")
        self._table = torch.randn(_TEXT_BUCKETS, STUB_DIM, generator=rng)

    @staticmethod
    def _bucket(word: str) -> int:
        digest = hashlib.sha256(word.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little") % _TEXT_BUCKETS

    def encode_text(self, text: str) -> torch.Tensor:
        words = text.lower().split()
        if not words:
            raise ValueError("text must contain at least one word")
        total = torch.zeros(self.embed_dim)
        for word in words:
            total = total + self._table[self._bucket(word)]
        return total / torch.linalg.vector_norm(total)


def build_encoders(spec: EncoderSpec) -> tuple[StubImageEncoder, StubTextEncoder]:
    """Construct the encoder pair described by an :class:`EncoderSpec`."""
    if spec.kind == "external":
        raise NotImplementedError(
            "external encoders are a plug-in: provide objects satisfying the "
            "ImageEncoder/TextEncoder protocols directly"
        )
    return StubImageEncoder(seed=spec.seed, token_layer=spec.token_layer), StubTextEncoder(
        seed=spec.seed
    )


def mean_source_embedding(
    encoder: ImageEncoder,
    sample_images: Callable[[int], torch.Tensor],
    n: int,
    batch_size: int = 32,
) -> torch.Tensor:
    """Arithmetic mean of n per-image embeddings, computed in batches.

    The mean is taken before any renormalization and stored unnormalized; a
    near-zero result is flagged as degenerate by the direction machinery
    downstream. ``sample_images(count)`` must yield (count, H, W, 3) batches
    deterministically.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    total: torch.Tensor | None = None
    remaining = n
    while remaining > 0:
        count = min(batch_size, remaining)
        images = sample_images(count)
        emb = encoder.encode_image(images)
        batch_sum = emb.sum(dim=0)
        total = batch_sum if total is None else total + batch_sum
        remaining -= count
    assert total is not None
    return total / n


def mean_text_embedding(encoder: TextEncoder, words: list[str]) -> torch.Tensor:
    """Arithmetic mean of per-word embeddings (unnormalized)."""
    if not words:
        raise ValueError("word list must be non-empty")
    total = torch.zeros(encoder.embed_dim)
    for word in words:
        total = total + encoder.encode_text(word)
    return total / len(words)


def load_source_prompts() -> list[str]:
    """The packaged 50-entry source-domain prompt list, one word per line."""
    text = resources.files("adapter3d.resources").joinpath("source_prompts.txt").read_text("utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]

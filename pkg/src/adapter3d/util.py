"""Shared helpers: deterministic seeding streams and digests."""

from __future__ import annotations

import hashlib
import json
from typing import Any

import torch


def stream_seed(seed: int, stream: str) -> int:
    """Derive a stable 63-bit seed for a named random stream.

    Independent streams ("latents", "poses", ...) derived from one run seed
    must not collide or correlate; hashing the pair gives that without any
    global RNG state.
    """
    digest = hashlib.sha256(f"{seed}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def seeded_generator(seed: int, stream: str) -> torch.Generator:
    """A torch CPU generator seeded from (seed, stream)."""
    gen = torch.Generator(device="cpu")
    gen.manual_seed(stream_seed(seed, stream))
    return gen


def json_digest(payload: Any) -> str:
    """SHA-256 hex digest of a canonical JSON encoding of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def tensor_digest(t: torch.Tensor) -> str:
    """SHA-256 hex digest of a tensor's float32 little-endian bytes."""
    import numpy as np

    arr = t.detach().to(torch.float32).contiguous().numpy()
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f4").tobytes()).hexdigest()

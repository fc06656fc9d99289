"""Adaptation losses: domain-direction alignment, relaxed earth mover's
distance over token sets, token self-similarity structure matching, and
channel-wise feature-image structure matching.

All operations are pure, differentiable functions of their tensor inputs.
Cosines are computed without epsilon smoothing; zero vectors violate the
preconditions and raise instead of being clamped, so a collapsed embedding
or token is always visible to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .encoders import TokenSequence

#: Directions with norm below this are considered collapsed.
DEGENERATE_NORM = 1e-8


class DegenerateDirectionError(ValueError):
    """An embedding-space direction collapsed to (near) zero."""


@dataclass(frozen=True)
class DomainDirection:
    """Fixed embedding-space compass from source domain to target domain."""

    values: torch.Tensor
    degenerate: bool

    @property
    def dim(self) -> int:
        return self.values.shape[-1]


def domain_direction(v_tar: torch.Tensor, v_sou: torch.Tensor) -> DomainDirection:
    """Difference of target and source embeddings, flagged if near zero."""
    if v_tar.shape != v_sou.shape:
        raise ValueError(f"embedding shapes differ: {tuple(v_tar.shape)} vs {tuple(v_sou.shape)}")
    values = v_tar - v_sou
    norm = float(torch.linalg.vector_norm(values.detach().double()))
    return DomainDirection(values=values, degenerate=norm < DEGENERATE_NORM)


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a * b).sum(dim=-1) / (
        torch.linalg.vector_norm(a, dim=-1) * torch.linalg.vector_norm(b, dim=-1)
    )


def _direction_values(direction: DomainDirection | torch.Tensor, side: str) -> torch.Tensor:
    if isinstance(direction, DomainDirection):
        if direction.degenerate:
            raise DegenerateDirectionError(f"{side} direction is degenerate (near-zero norm)")
        return direction.values
    norm = float(torch.linalg.vector_norm(direction.detach().double()))
    if norm < DEGENERATE_NORM:
        raise DegenerateDirectionError(f"{side} direction is degenerate (near-zero norm)")
    return direction


def direction_loss(
    v_B: torch.Tensor,
    v_A: torch.Tensor,
    dv_dom: DomainDirection | torch.Tensor,
) -> torch.Tensor:
    """One minus the cosine between the sample direction (v_B - v_A) and the
    domain direction; range [0, 2].

    Raises :class:`DegenerateDirectionError` naming whichever side collapsed.
    """
    dom = _direction_values(dv_dom, "domain")
    if v_B.shape != v_A.shape or v_B.shape != dom.shape:
        raise ValueError("embedding dimensions of v_B, v_A and the domain direction must match")
    dv_samp = v_B - v_A
    samp_norm = float(torch.linalg.vector_norm(dv_samp.detach().double()))
    if samp_norm < DEGENERATE_NORM:
        raise DegenerateDirectionError("sample direction is degenerate (v_B ~ v_A)")
    return 1.0 - _cosine(dv_samp, dom)


def text_direction_loss(
    v_B: torch.Tensor,
    v_A: torch.Tensor,
    dv_dom_txt: DomainDirection | torch.Tensor,
) -> torch.Tensor:
    """Direction loss against a text-derived domain direction (same contract)."""
    return direction_loss(v_B, v_A, dv_dom_txt)


def _token_matrix(tokens: TokenSequence | torch.Tensor, name: str) -> torch.Tensor:
    mat = tokens.tokens if isinstance(tokens, TokenSequence) else tokens
    if mat.ndim != 2:
        raise ValueError(f"{name} must be a (n, d) token matrix, got {tuple(mat.shape)}")
    norms = torch.linalg.vector_norm(mat.detach(), dim=-1)
    if bool((norms == 0).any()):
        raise ValueError(f"{name} contains a zero token; cosine distance undefined")
    return mat


def cross_correlation_map(
    t_B: TokenSequence | torch.Tensor, t_tar: TokenSequence | torch.Tensor
) -> torch.Tensor:
    """Pairwise cosine distances 1 - cos(t_B[i], t_tar[j]); shape (n, m)."""
    a = _token_matrix(t_B, "t_B")
    b = _token_matrix(t_tar, "t_tar")
    if a.shape[-1] != b.shape[-1]:
        raise ValueError("token dimensions must match")
    an = a / torch.linalg.vector_norm(a, dim=-1, keepdim=True)
    bn = b / torch.linalg.vector_norm(b, dim=-1, keepdim=True)
    return 1.0 - an @ bn.T


def remd_loss(
    t_B: TokenSequence | torch.Tensor, t_tar: TokenSequence | torch.Tensor
) -> torch.Tensor:
    """Relaxed earth mover's distance between two token sets.

    The larger of the two one-sided relaxations: mean over rows of the
    per-row minimum cosine distance, and the column-wise counterpart.
    Range [0, 2]; symmetric in its arguments.
    """
    cost = cross_correlation_map(t_B, t_tar)
    row_side = cost.min(dim=1).values.mean()
    col_side = cost.min(dim=0).values.mean()
    return torch.maximum(row_side, col_side)


def self_correlation_map(tokens: TokenSequence | torch.Tensor) -> torch.Tensor:
    """Pairwise token cosine similarities; symmetric with unit diagonal."""
    mat = _token_matrix(tokens, "tokens")
    normed = mat / torch.linalg.vector_norm(mat, dim=-1, keepdim=True)
    return normed @ normed.T


def image_structure_loss(
    t_B: TokenSequence | torch.Tensor, t_A: TokenSequence | torch.Tensor
) -> torch.Tensor:
    """Frobenius norm of the difference of the two self-similarity maps.

    Requires equal token counts (the sequences describe the same patch
    grid). Range [0, 2n]. Invariant to per-token positive rescaling.
    """
    a = _token_matrix(t_B, "t_B")
    b = _token_matrix(t_A, "t_A")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"token counts differ: {a.shape[0]} vs {b.shape[0]}")
    m_b = self_correlation_map(a)
    m_a = self_correlation_map(b)
    # vector_norm has a zero subgradient at 0, so coincident inputs stay finite
    return torch.linalg.vector_norm(m_a - m_b)


def feature_structure_loss(f_B: torch.Tensor, f_A: torch.Tensor, t: int) -> torch.Tensor:
    """Mean of the smallest channel-matching cosine distances.

    Each channel of ``f_B`` (channel-last (H, W, C) feature images) is
    flattened and matched to its nearest channel of ``f_A`` by cosine
    distance, giving one score per channel; the loss averages the
    min(t, C) smallest scores. Ties are broken toward the lower channel
    index. Invariant to channel permutations of ``f_A`` and per-channel
    positive rescaling of either image.
    """
    if f_B.shape != f_A.shape:
        raise ValueError(f"feature image shapes differ: {tuple(f_B.shape)} vs {tuple(f_A.shape)}")
    if f_B.ndim != 3:
        raise ValueError("feature images must be (H, W, C)")
    if t < 1:
        raise ValueError("t must be >= 1")
    channels = f_B.shape[-1]
    xb = f_B.reshape(-1, channels).T  # (C, HW)
    xa = f_A.reshape(-1, channels).T
    nb = torch.linalg.vector_norm(xb.detach(), dim=-1)
    na = torch.linalg.vector_norm(xa.detach(), dim=-1)
    if bool((nb == 0).any()) or bool((na == 0).any()):
        raise ValueError("feature image has a zero-norm channel; cosine distance undefined")
    xbn = xb / torch.linalg.vector_norm(xb, dim=-1, keepdim=True)
    xan = xa / torch.linalg.vector_norm(xa, dim=-1, keepdim=True)
    cost = 1.0 - xbn @ xan.T
    h = cost.min(dim=1).values
    keep = min(t, channels)
    order = torch.argsort(h, stable=True)  # stable: equal scores keep channel order
    return h[order[:keep]].mean()

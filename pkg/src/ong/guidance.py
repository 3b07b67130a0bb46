"""Negative guidance applied to image-to-text attention outputs.

The negative branch recomputes joint attention with its own text-side
queries/keys/values while reusing the positive branch's image-side features,
so the guidance signal stays anchored to the same spatial representation.
Only the image-to-text output component is steered: the component of the
negative branch's ``z_i2t`` orthogonal to the positive ``z_i2t`` is scaled
by ``alpha`` and subtracted, independently per token row and per head. The
component parallel to the positive feature is untouched.

Modes:
  * ``orthogonal`` - subtract the orthogonal rejection (the method);
  * ``plain``      - subtract the whole negative output (ablation);
  * ``none``       - leave the positive branch unmodified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .attention import QKV, AttentionDecomposition, block_attention
from .errors import DimensionError

__all__ = [
    "GUIDANCE_MODES",
    "GuidanceConfig",
    "BranchOutputs",
    "mixed_negative_qkv",
    "negative_branch_i2t",
    "orthogonal_guide",
    "plain_guide",
    "apply_guidance",
    "assemble_positive_output",
]

GUIDANCE_MODES = ("orthogonal", "plain", "none")


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance strength, gating, and ablation switches.

    alpha: guidance scale (>= 0).
    tau: first sampler step index at which guidance applies.
    mode: one of ``GUIDANCE_MODES``.
    share_image_features: negative branch reuses the positive branch's
        image-side Q/K/V (and latent). False reproduces the ablation where
        the negative branch keeps an independent image latent.
    eps: squared-norm threshold below which a positive row counts as zero;
        such rows get the full negative row subtracted.
    block_mask: optional per-block booleans restricting which blocks apply
        guidance (None means all blocks). Exposed for experimentation only.
    neg_token_limit: optionally use only the first k negative text tokens.
    """

    alpha: float
    tau: int = 0
    mode: str = "orthogonal"
    share_image_features: bool = True
    eps: float = linalg.DEFAULT_EPS
    block_mask: tuple[bool, ...] | None = None
    neg_token_limit: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.mode not in GUIDANCE_MODES:
            raise ValueError(f"mode must be one of {GUIDANCE_MODES}, got {self.mode!r}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.neg_token_limit is not None and self.neg_token_limit < 1:
            raise ValueError(f"neg_token_limit must be >= 1, got {self.neg_token_limit}")

    def active_at(self, step: int, block: int = 0) -> bool:
        """Whether guidance fires at this sampler step and block index."""
        if self.mode == "none" or step < self.tau:
            return False
        if self.block_mask is not None:
            return bool(self.block_mask[block])
        return True


@dataclass(frozen=True)
class BranchOutputs:
    """Positive-branch decomposition plus the negative branch's i2t output."""

    positive: AttentionDecomposition
    negative_i2t: np.ndarray  # (heads, N_I, d_v)

    def __post_init__(self):
        if self.negative_i2t.shape != self.positive.z_i2t.shape:
            raise DimensionError(
                f"negative i2t shape {self.negative_i2t.shape} does not match "
                f"positive z_i2t shape {self.positive.z_i2t.shape}"
            )


def mixed_negative_qkv(neg_text_qkv: QKV, image_qkv: QKV) -> QKV:
    """Assemble the negative branch's QKV: negative text side, given image side.

    Pass the positive branch's QKV as ``image_qkv`` for image-side feature
    sharing, or the negative branch's own image QKV for the unshared ablation.
    """
    if neg_text_qkv.heads != image_qkv.heads:
        raise DimensionError(
            f"branch head counts differ: {neg_text_qkv.heads} vs {image_qkv.heads}"
        )
    if neg_text_qkv.d_k != image_qkv.d_k or neg_text_qkv.d_v != image_qkv.d_v:
        raise DimensionError(
            f"branch dims differ: d_k {neg_text_qkv.d_k} vs {image_qkv.d_k}, "
            f"d_v {neg_text_qkv.d_v} vs {image_qkv.d_v}"
        )
    return QKV(
        q_text=neg_text_qkv.q_text,
        k_text=neg_text_qkv.k_text,
        v_text=neg_text_qkv.v_text,
        q_image=image_qkv.q_image,
        k_image=image_qkv.k_image,
        v_image=image_qkv.v_image,
    )


def negative_branch_i2t(
    neg_text_qkv: QKV, image_qkv: QKV, compute_full: bool = False
) -> np.ndarray:
    """Image-to-text attention output of the negative branch, per head.

    The attention map is computed jointly over the negative text keys and the
    supplied image keys; the returned stack is ``A_i2t @ V_text(negative)``.
    The branch's remaining outputs exist but feed nothing downstream; by
    default only the image-query rows are computed, which yields bit-identical
    results (softmax is per row). ``compute_full=True`` evaluates the whole
    branch anyway.
    """
    mixed = mixed_negative_qkv(neg_text_qkv, image_qkv)
    decomp = block_attention(mixed, image_rows_only=not compute_full)
    return decomp.z_i2t


def _guide_per_head(z_pos, z_neg, fn) -> np.ndarray:
    z_pos = np.asarray(z_pos, dtype=np.float64)
    z_neg = np.asarray(z_neg, dtype=np.float64)
    if z_pos.shape != z_neg.shape:
        raise DimensionError(
            f"guidance operands must share a shape, got {z_pos.shape} and {z_neg.shape}"
        )
    if z_pos.ndim == 2:
        return fn(z_pos, z_neg)
    if z_pos.ndim == 3:
        return np.stack([fn(z_pos[h], z_neg[h]) for h in range(z_pos.shape[0])])
    raise DimensionError(f"expected a matrix or head stack, got shape {z_pos.shape}")


def orthogonal_guide(z_pos, z_neg, cfg: GuidanceConfig) -> np.ndarray:
    """``z_pos - alpha * reject(z_neg, z_pos)``, per token row and head.

    Accepts a single (N_I, d_v) matrix or a (heads, N_I, d_v) stack. Rows of
    ``z_pos`` with squared norm at or below ``cfg.eps`` have no direction to
    preserve, so the full negative row is subtracted there.
    """
    if cfg.mode != "orthogonal":
        raise ValueError(f"orthogonal_guide requires mode='orthogonal', got {cfg.mode!r}")
    return _guide_per_head(
        z_pos, z_neg, lambda p, n: p - cfg.alpha * linalg.row_reject(n, p, cfg.eps)
    )


def plain_guide(z_pos, z_neg, cfg: GuidanceConfig) -> np.ndarray:
    """Ablation without orthogonalisation: ``z_pos - alpha * z_neg``."""
    if cfg.mode != "plain":
        raise ValueError(f"plain_guide requires mode='plain', got {cfg.mode!r}")
    return _guide_per_head(z_pos, z_neg, lambda p, n: p - cfg.alpha * n)


def apply_guidance(z_pos, z_neg, cfg: GuidanceConfig) -> np.ndarray:
    """Dispatch on ``cfg.mode``; mode ``none`` returns ``z_pos`` unchanged."""
    if cfg.mode == "orthogonal":
        return orthogonal_guide(z_pos, z_neg, cfg)
    if cfg.mode == "plain":
        return plain_guide(z_pos, z_neg, cfg)
    return np.asarray(z_pos, dtype=np.float64)


def assemble_positive_output(
    guided_i2t: np.ndarray, decomp: AttentionDecomposition
) -> tuple[np.ndarray, np.ndarray]:
    """Rebuild the block's outputs with the guided i2t component.

    Returns ``(z_text, z_image_hat)`` where ``z_image_hat = guided_i2t + z_i2i``
    and the text output is the untouched ``z_t2t + z_t2i``.
    """
    guided_i2t = np.asarray(guided_i2t, dtype=np.float64)
    if guided_i2t.shape != decomp.z_i2t.shape:
        raise DimensionError(
            f"guided i2t shape {guided_i2t.shape} does not match z_i2t shape {decomp.z_i2t.shape}"
        )
    return decomp.z_text, guided_i2t + decomp.z_i2i

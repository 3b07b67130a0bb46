"""Joint text-image attention for one multimodal transformer block.

Text and image tokens are projected per modality, concatenated along the
token axis, and attended jointly: one softmax per query row over all keys.
``block_attention`` computes the same quantity through the block-partitioned
form and exposes the four attention sub-blocks and four output components.

Per-head matrices are stored explicitly as (heads, tokens, dim) stacks and
each head is computed independently. No positional encodings are applied;
the block equations are agnostic to them and their absence keeps the
block/monolithic equivalence exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionError

__all__ = [
    "ModalityFeatures",
    "BlockWeights",
    "QKV",
    "AttentionDecomposition",
    "compute_qkv",
    "joint_attention",
    "block_attention",
]


@dataclass(frozen=True)
class ModalityFeatures:
    """Text (N_T x d_model) and image (N_I x d_model) tokens entering a block."""

    text: np.ndarray
    image: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "text", linalg.as_matrix(self.text, "text features"))
        object.__setattr__(self, "image", linalg.as_matrix(self.image, "image features"))
        if self.text.shape[1] != self.image.shape[1]:
            raise DimensionError(
                f"text and image features disagree on d_model: "
                f"{self.text.shape[1]} vs {self.image.shape[1]}"
            )
        if self.text.shape[0] < 1 or self.image.shape[0] < 1:
            raise DimensionError("each modality needs at least one token")

    @property
    def d_model(self) -> int:
        return self.text.shape[1]


@dataclass(frozen=True)
class BlockWeights:
    """Per-head projection weights, separate for the text and image modalities.

    Query/key weights are (heads, d_model, d_k); value weights are
    (heads, d_model, d_v). All heads share d_k and d_v.
    """

    w_q_text: np.ndarray
    w_k_text: np.ndarray
    w_v_text: np.ndarray
    w_q_image: np.ndarray
    w_k_image: np.ndarray
    w_v_image: np.ndarray

    def __post_init__(self):
        for name in ("w_q_text", "w_k_text", "w_v_text", "w_q_image", "w_k_image", "w_v_image"):
            object.__setattr__(self, name, linalg.as_head_stack(getattr(self, name), name))
        h, d_model, d_k = self.w_q_text.shape
        for name in ("w_k_text", "w_q_image", "w_k_image"):
            if getattr(self, name).shape != (h, d_model, d_k):
                raise DimensionError(
                    f"{name} has shape {getattr(self, name).shape}, expected {(h, d_model, d_k)}"
                )
        d_v = self.w_v_text.shape[2]
        for name in ("w_v_text", "w_v_image"):
            if getattr(self, name).shape != (h, d_model, d_v):
                raise DimensionError(
                    f"{name} has shape {getattr(self, name).shape}, expected {(h, d_model, d_v)}"
                )

    @property
    def heads(self) -> int:
        return self.w_q_text.shape[0]

    @property
    def d_model(self) -> int:
        return self.w_q_text.shape[1]

    @property
    def d_k(self) -> int:
        return self.w_q_text.shape[2]

    @property
    def d_v(self) -> int:
        return self.w_v_text.shape[2]


@dataclass(frozen=True)
class QKV:
    """Per-head query/key/value stacks for both modalities.

    Shapes: q/k are (heads, N, d_k), v is (heads, N, d_v), with N the token
    count of the owning modality.
    """

    q_text: np.ndarray
    k_text: np.ndarray
    v_text: np.ndarray
    q_image: np.ndarray
    k_image: np.ndarray
    v_image: np.ndarray

    def __post_init__(self):
        for name in ("q_text", "k_text", "v_text", "q_image", "k_image", "v_image"):
            object.__setattr__(self, name, linalg.as_head_stack(getattr(self, name), name))
        h, n_text, d_k = self.q_text.shape
        n_image = self.q_image.shape[1]
        d_v = self.v_text.shape[2]
        expect = {
            "k_text": (h, n_text, d_k),
            "v_text": (h, n_text, d_v),
            "q_image": (h, n_image, d_k),
            "k_image": (h, n_image, d_k),
            "v_image": (h, n_image, d_v),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def heads(self) -> int:
        return self.q_text.shape[0]

    @property
    def n_text(self) -> int:
        return self.q_text.shape[1]

    @property
    def n_image(self) -> int:
        return self.q_image.shape[1]

    @property
    def d_k(self) -> int:
        return self.q_text.shape[2]

    @property
    def d_v(self) -> int:
        return self.v_text.shape[2]


@dataclass(frozen=True)
class AttentionDecomposition:
    """Block-partitioned attention maps and output components, per head.

    The four ``a_*`` stacks are slices of one jointly normalised attention
    matrix: for every query row the corresponding segments sum to 1 together.
    ``z_text = z_t2t + z_t2i`` and ``z_image = z_i2t + z_i2i`` reproduce the
    monolithic attention outputs.
    """

    a_t2t: np.ndarray
    a_t2i: np.ndarray
    a_i2t: np.ndarray
    a_i2i: np.ndarray
    z_t2t: np.ndarray
    z_t2i: np.ndarray
    z_i2t: np.ndarray
    z_i2i: np.ndarray

    @property
    def z_text(self) -> np.ndarray:
        return self.z_t2t + self.z_t2i

    @property
    def z_image(self) -> np.ndarray:
        return self.z_i2t + self.z_i2i


def compute_qkv(features: ModalityFeatures, weights: BlockWeights) -> QKV:
    """Project each modality into per-head queries, keys, and values."""
    if features.d_model != weights.d_model:
        raise DimensionError(
            f"features have d_model={features.d_model} but weights expect d_model={weights.d_model}"
        )

    def project(x, w, modality, kind):
        try:
            return np.stack([linalg.matmul(x, w[h]) for h in range(w.shape[0])])
        except DimensionError as exc:
            raise DimensionError(f"{kind} projection failed for {modality} modality: {exc}") from exc

    return QKV(
        q_text=project(features.text, weights.w_q_text, "text", "query"),
        k_text=project(features.text, weights.w_k_text, "text", "key"),
        v_text=project(features.text, weights.w_v_text, "text", "value"),
        q_image=project(features.image, weights.w_q_image, "image", "query"),
        k_image=project(features.image, weights.w_k_image, "image", "key"),
        v_image=project(features.image, weights.w_v_image, "image", "value"),
    )


def joint_attention(qkv: QKV) -> tuple[np.ndarray, np.ndarray]:
    """Monolithic joint attention over the concatenated token set.

    Per head: concatenate text and image Q/K/V along tokens, form one
    softmax(Q K^T / sqrt(d_k)) over all keys, multiply by V, and split the
    output back into (z_text, z_image) stacks.
    """
    scale = 1.0 / math.sqrt(qkv.d_k)
    n_text = qkv.n_text
    z_text, z_image = [], []
    for h in range(qkv.heads):
        q = np.concatenate([qkv.q_text[h], qkv.q_image[h]], axis=0)
        k = np.concatenate([qkv.k_text[h], qkv.k_image[h]], axis=0)
        v = np.concatenate([qkv.v_text[h], qkv.v_image[h]], axis=0)
        a = linalg.softmax_rows(linalg.matmul(q, k.T), scale)
        z = linalg.matmul(a, v)
        z_text.append(z[:n_text])
        z_image.append(z[n_text:])
    return np.stack(z_text), np.stack(z_image)


def block_attention(qkv: QKV, image_rows_only: bool = False) -> AttentionDecomposition:
    """Block-partitioned joint attention.

    Assembles the four blocks of similarity scores, applies one softmax per
    query row over the concatenated key set, and only then slices the map
    into T2T/T2I/I2T/I2I. Normalising each sub-block on its own would be a
    different (and wrong) operation: the four blocks share one normalisation.

    With ``image_rows_only`` the text-query rows are skipped; their outputs
    come back as empty stacks. Softmax is per row, so the image rows are
    unchanged by the omission.
    """
    scale = 1.0 / math.sqrt(qkv.d_k)
    n_text, n_image = qkv.n_text, qkv.n_image
    a_t2t, a_t2i, a_i2t, a_i2i = [], [], [], []
    z_t2t, z_t2i, z_i2t, z_i2i = [], [], [], []
    for h in range(qkv.heads):
        scores_i = np.concatenate(
            [linalg.matmul(qkv.q_image[h], qkv.k_text[h].T),
             linalg.matmul(qkv.q_image[h], qkv.k_image[h].T)],
            axis=1,
        )
        a_image = linalg.softmax_rows(scores_i, scale)
        a_i2t.append(a_image[:, :n_text])
        a_i2i.append(a_image[:, n_text:])
        z_i2t.append(linalg.matmul(a_image[:, :n_text], qkv.v_text[h]))
        z_i2i.append(linalg.matmul(a_image[:, n_text:], qkv.v_image[h]))
        if image_rows_only:
            continue
        scores_t = np.concatenate(
            [linalg.matmul(qkv.q_text[h], qkv.k_text[h].T),
             linalg.matmul(qkv.q_text[h], qkv.k_image[h].T)],
            axis=1,
        )
        a_text = linalg.softmax_rows(scores_t, scale)
        a_t2t.append(a_text[:, :n_text])
        a_t2i.append(a_text[:, n_text:])
        z_t2t.append(linalg.matmul(a_text[:, :n_text], qkv.v_text[h]))
        z_t2i.append(linalg.matmul(a_text[:, n_text:], qkv.v_image[h]))

    if image_rows_only:
        empty_a_t = np.zeros((qkv.heads, 0, n_text))
        empty_a_i = np.zeros((qkv.heads, 0, n_image))
        empty_z = np.zeros((qkv.heads, 0, qkv.d_v))
        return AttentionDecomposition(
            a_t2t=empty_a_t, a_t2i=empty_a_i,
            a_i2t=np.stack(a_i2t), a_i2i=np.stack(a_i2i),
            z_t2t=empty_z, z_t2i=empty_z,
            z_i2t=np.stack(z_i2t), z_i2i=np.stack(z_i2i),
        )
    return AttentionDecomposition(
        a_t2t=np.stack(a_t2t), a_t2i=np.stack(a_t2i),
        a_i2t=np.stack(a_i2t), a_i2i=np.stack(a_i2i),
        z_t2t=np.stack(z_t2t), z_t2i=np.stack(z_t2i),
        z_i2t=np.stack(z_i2t), z_i2i=np.stack(z_i2i),
    )

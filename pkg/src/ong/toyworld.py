"""A synthetic concept world in which suppression is measurable.

Concepts are fixed orthonormal directions in the d_model embedding space.
Prompts are stacks of jittered concept directions; a seeded toy backbone
propagates them into the image latent; linear probes measure how strongly a
concept direction is present in the output tokens. Probes are a feature-space
stand-in for judging concept presence in rendered images, and are documented
as such: no claim is made that toy suppression ratios predict full-scale
behaviour.

The backbone builder is deterministic in its seed (PCG64 via
``numpy.random.default_rng``) and draws weights in a fixed order: per block
the text-side then image-side Q/K/V stacks, then the output head, then the
velocity head. Weights are seeded noise around direction-preserving bases:
value and output heads carry coordinate-slice components that let each head
read and write a slice of the embedding space (so concept directions survive
propagation instead of being scrambled), and the velocity head is a noisy
negative identity, which contracts the noise toward prompt-informed content
and keeps Euler integration stable. Pure zero-mean weights were measured to
scramble concept directions so thoroughly that probes see almost nothing;
the structured bases exist to make the probe signal real while every matrix
stays seeded and noisy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .attention import BlockWeights
from .errors import DimensionError, ValidationError
from .sampler import ModelDims, ToyBackbone

__all__ = [
    "ConceptLibrary",
    "ProbeReport",
    "build_concept_library",
    "build_toy_model",
    "embed_prompt",
    "concept_probe",
    "probe_concepts",
    "suppression_report",
    "write_pixmap",
    "DEFAULT_CONCEPTS",
]

# Weight-noise amplitude around the structured bases, and the contraction
# rate of the velocity head. Fixed so that a (seed, dims) pair fully
# determines the backbone.
WEIGHT_NOISE = 0.1
VELOCITY_CONTRACTION = 1.0

DEFAULT_JITTER = 0.02

DEFAULT_CONCEPTS = (
    "bathroom",
    "bathtub",
    "meadow",
    "clouds",
    "piano",
    "sheet_music",
    "doctor",
    "stethoscope",
)


@dataclass(frozen=True)
class ConceptLibrary:
    """Named unit directions in embedding space, pairwise near-orthogonal."""

    names: tuple[str, ...]
    vectors: np.ndarray  # (n_concepts, d_model)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "vectors", linalg.as_matrix(self.vectors, "concept vectors"))
        if len(self.names) != self.vectors.shape[0]:
            raise DimensionError(
                f"{len(self.names)} names for {self.vectors.shape[0]} vectors"
            )
        if len(set(self.names)) != len(self.names):
            raise ValidationError("concept names must be unique")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.abs(norms - 1.0).max() > 1e-9:
            raise ValidationError("concept vectors must be unit-norm within 1e-9")
        gram = self.vectors @ self.vectors.T
        off = gram - np.diag(np.diag(gram))
        if np.abs(off).max() > 0.1:
            raise ValidationError("concept vectors must satisfy |<ci,cj>| <= 0.1 for i != j")

    @property
    def d_model(self) -> int:
        return self.vectors.shape[1]

    def get(self, name: str) -> np.ndarray:
        try:
            return self.vectors[self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown concept {name!r}; library has {self.names}") from None


@dataclass(frozen=True)
class ProbeReport:
    """Per-concept probe values for a guided run and its unguided baseline.

    ``ratios`` maps concept name to probe(guided) / probe(unguided); a ratio
    is only defined where the unguided probe exceeds 1e-9.
    """

    guided: dict[str, float]
    unguided: dict[str, float]

    @property
    def ratios(self) -> dict[str, float]:
        return {
            name: self.guided[name] / base
            for name, base in self.unguided.items()
            if base > 1e-9
        }


def build_concept_library(
    seed: int, d_model: int, names: tuple[str, ...] = DEFAULT_CONCEPTS
) -> ConceptLibrary:
    """Seeded orthonormal concept directions (QR of a Gaussian matrix)."""
    if len(names) > d_model:
        raise ValidationError(
            f"cannot fit {len(names)} orthonormal concepts in d_model={d_model}"
        )
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d_model, len(names))))
    return ConceptLibrary(names=tuple(names), vectors=q.T.copy())


def _slice_basis(d_model: int, d_v: int, heads: int) -> list[np.ndarray]:
    # Head h reads the coordinate slice starting at h * (d_model // heads),
    # wrapping around; together the heads cover each coordinate
    # heads * d_v / d_model times.
    stride = max(1, d_model // heads)
    bases = []
    for h in range(heads):
        e = np.zeros((d_model, d_v))
        for j in range(d_v):
            e[(h * stride + j) % d_model, j] = 1.0
        bases.append(e)
    return bases


def build_toy_model(seed: int, dims: ModelDims) -> ToyBackbone:
    """Deterministic toy backbone for the given seed and dimensions.

    Query/key weights are pure seeded noise at a scale that keeps attention
    logits O(1) for unit-variance latent entries. Value weights are the
    per-head slice bases (scaled per modality to its token norm) plus noise;
    the output head stacks the transposed bases so the residual update
    approximately reconstructs embedding-space directions. The velocity head
    is a contractive noisy negative identity.
    """
    if dims.heads * dims.d_k > 4096:
        raise ValidationError(
            f"heads*d_k = {dims.heads * dims.d_k} exceeds the toy budget of 4096"
        )
    rng = np.random.default_rng(seed)
    d, d_k, d_v, heads = dims.d_model, dims.d_k, dims.d_v, dims.heads
    bases = _slice_basis(d, d_v, heads)
    coverage = heads * d_v / d

    blocks = []
    for _ in range(dims.blocks):
        w_q_text = rng.standard_normal((heads, d, d_k)) / d
        w_k_text = rng.standard_normal((heads, d, d_k)) / d
        # text tokens are unit-norm directions; image tokens have unit-variance
        # entries (norm ~ sqrt(d)), so the image side is scaled down to match
        w_v_text = np.stack(
            [bases[h] + WEIGHT_NOISE * rng.standard_normal((d, d_v)) / math.sqrt(d)
             for h in range(heads)]
        )
        w_q_image = rng.standard_normal((heads, d, d_k)) / d
        w_k_image = rng.standard_normal((heads, d, d_k)) / d
        w_v_image = np.stack(
            [bases[h] / math.sqrt(d) + WEIGHT_NOISE * rng.standard_normal((d, d_v)) / d
             for h in range(heads)]
        )
        blocks.append(
            BlockWeights(
                w_q_text=w_q_text,
                w_k_text=w_k_text,
                w_v_text=w_v_text,
                w_q_image=w_q_image,
                w_k_image=w_k_image,
                w_v_image=w_v_image,
            )
        )
    output_head = (
        np.concatenate([b.T for b in bases], axis=0) / coverage
        + WEIGHT_NOISE * rng.standard_normal((heads * d_v, d)) / math.sqrt(heads * d_v)
    )
    velocity_head = -VELOCITY_CONTRACTION * (
        np.eye(d) + WEIGHT_NOISE * rng.standard_normal((d, d)) / math.sqrt(d)
    )
    return ToyBackbone(blocks=tuple(blocks), output_head=output_head, velocity_head=velocity_head)


def embed_prompt(
    concepts,
    library: ConceptLibrary,
    tokens_per_concept: int,
    seed: int | np.random.Generator = 0,
    jitter: float = DEFAULT_JITTER,
) -> np.ndarray:
    """Stack each listed concept's direction ``tokens_per_concept`` times.

    Every token row is the concept direction plus small seeded Gaussian
    jitter. An empty concept list yields a (0, d_model) matrix, which is a
    valid prompt only where guidance never fires.
    """
    if tokens_per_concept < 1:
        raise ValidationError(f"tokens_per_concept must be >= 1, got {tokens_per_concept}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rows = []
    for name in concepts:
        direction = library.get(name)
        noise = jitter * rng.standard_normal((tokens_per_concept, library.d_model))
        rows.append(np.tile(direction, (tokens_per_concept, 1)) + noise)
    if not rows:
        return np.zeros((0, library.d_model))
    return np.concatenate(rows, axis=0)


def concept_probe(image_tokens, concept) -> float:
    """Mean absolute alignment of token rows with a concept direction."""
    image_tokens = linalg.as_matrix(image_tokens, "image tokens")
    concept = np.asarray(concept, dtype=np.float64)
    if concept.ndim != 1 or concept.shape[0] != image_tokens.shape[1]:
        raise DimensionError(
            f"concept has shape {concept.shape}, tokens have width {image_tokens.shape[1]}"
        )
    return float(np.abs(image_tokens @ concept).mean())


def probe_concepts(image_tokens, library: ConceptLibrary, names) -> dict[str, float]:
    """Probe several named concepts at once."""
    return {name: concept_probe(image_tokens, library.get(name)) for name in names}


def suppression_report(guided_tokens, unguided_tokens, library, names) -> ProbeReport:
    """Probe both runs and pair them into a :class:`ProbeReport`."""
    return ProbeReport(
        guided=probe_concepts(guided_tokens, library, names),
        unguided=probe_concepts(unguided_tokens, library, names),
    )


def write_pixmap(path, image_tokens) -> None:
    """Render image tokens to a binary P6 pixmap for eyeballing only.

    Tokens are laid out row-major on a square grid (the token count must be
    a perfect square) and the first three feature coordinates are min-max
    mapped to RGB.
    """
    tokens = linalg.as_matrix(image_tokens, "image tokens")
    n, d = tokens.shape
    side = math.isqrt(n)
    if side * side != n:
        raise ValidationError(f"need a square token count for the pixmap grid, got {n}")
    if d < 3:
        raise ValidationError(f"need at least 3 feature coordinates for RGB, got {d}")
    channels = tokens[:, :3]
    lo = channels.min(axis=0, keepdims=True)
    hi = channels.max(axis=0, keepdims=True)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    rgb = np.clip((channels - lo) / span * 255.0, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{side} {side}\n255\n".encode("ascii"))
        fh.write(rgb.reshape(side, side, 3).tobytes())

"""Rectified-flow Euler sampler with step-gated attention guidance.

One explicit Euler step per sampler step: the toy backbone maps the current
image latent (plus prompt text tokens) through its attention blocks and a
velocity head, and the latent advances by ``schedule[t] * velocity``. From
step ``tau`` onward (and unless the mode is ``none``) each block's
image-to-text output is steered by the negative branch before the block's
residual update.

With image-side feature sharing (the default) the negative branch consumes
the positive branch's image Q/K/V and has no state of its own; its text
tokens are the raw negative prompt embeddings at every block and step. With
sharing disabled the negative branch runs as an independent, unguided
denoising trajectory from the same initial noise, and its per-block
image-to-text outputs feed the positive branch's guidance.

Everything is deterministic given the seed and configs; the initial latent
is standard normal from ``numpy.random.default_rng(seed)`` (PCG64).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .attention import BlockWeights, ModalityFeatures, QKV, block_attention, compute_qkv
from .errors import DimensionError, DivergenceError, NonFiniteInputError, ValidationError
from .guidance import (
    GUIDANCE_MODES,
    GuidanceConfig,
    apply_guidance,
    assemble_positive_output,
    negative_branch_i2t,
)

__all__ = [
    "SamplerConfig",
    "LatentState",
    "ToyBackbone",
    "ModelDims",
    "RunDescriptor",
    "parse_run_descriptor",
    "load_run_descriptor",
    "euler_integrate",
    "denoise",
    "cfg_baseline_velocity",
    "denoise_cfg_baseline",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Step count, guidance start step, seed, and step-size schedule.

    ``schedule`` defaults to ``steps`` uniform sizes over [0, 1] and must sum
    to 1 within 1e-9. ``tau`` counts discrete sampler steps from 0;
    ``tau == steps`` means guidance never fires.
    """

    steps: int
    tau: int = 0
    seed: int = 0
    schedule: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 0 <= self.tau <= self.steps:
            raise ValueError(f"tau must be in [0, steps={self.steps}], got {self.tau}")
        if self.schedule is None:
            object.__setattr__(self, "schedule", tuple([1.0 / self.steps] * self.steps))
        else:
            object.__setattr__(self, "schedule", tuple(float(s) for s in self.schedule))
        if len(self.schedule) != self.steps:
            raise ValueError(
                f"schedule has {len(self.schedule)} entries for {self.steps} steps"
            )
        total = math.fsum(self.schedule)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"schedule must sum to 1 within 1e-9, got {total!r}")


@dataclass(frozen=True)
class LatentState:
    """Image-token latent after ``step`` sampler steps.

    ``trajectory`` (present when recording was requested) holds the latent
    after every step, starting with the initial noise.
    """

    image: np.ndarray
    step: int
    trajectory: tuple[np.ndarray, ...] | None = None


@dataclass(frozen=True)
class ToyBackbone:
    """An ordered stack of attention blocks plus output and velocity heads.

    ``output_head`` maps concatenated per-head attention outputs
    (heads * d_v) back to d_model for the residual update; ``velocity_head``
    maps final image features to a latent velocity.
    """

    blocks: tuple[BlockWeights, ...]
    output_head: np.ndarray
    velocity_head: np.ndarray

    def __post_init__(self):
        if not self.blocks:
            raise DimensionError("backbone needs at least one block")
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "output_head", linalg.as_matrix(self.output_head, "output_head"))
        object.__setattr__(
            self, "velocity_head", linalg.as_matrix(self.velocity_head, "velocity_head")
        )
        first = self.blocks[0]
        for i, blk in enumerate(self.blocks):
            if (blk.heads, blk.d_model, blk.d_k, blk.d_v) != (
                first.heads, first.d_model, first.d_k, first.d_v,
            ):
                raise DimensionError(f"block {i} dimensions disagree with block 0")
        if self.output_head.shape != (first.heads * first.d_v, first.d_model):
            raise DimensionError(
                f"output_head shape {self.output_head.shape} does not match "
                f"(heads*d_v, d_model) = {(first.heads * first.d_v, first.d_model)}"
            )
        if self.velocity_head.shape != (first.d_model, first.d_model):
            raise DimensionError(
                f"velocity_head shape {self.velocity_head.shape} must be "
                f"(d_model, d_model) = {(first.d_model, first.d_model)}"
            )

    @property
    def d_model(self) -> int:
        return self.blocks[0].d_model

    @property
    def heads(self) -> int:
        return self.blocks[0].heads

    @property
    def d_v(self) -> int:
        return self.blocks[0].d_v

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class ModelDims:
    """Toy instance dimensions; ``n_text`` is tokens per prompt concept."""

    d_model: int
    d_k: int
    d_v: int
    heads: int
    blocks: int
    n_text: int
    n_image: int

    def __post_init__(self):
        for name in ("d_model", "d_k", "d_v", "heads", "blocks", "n_text", "n_image"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValidationError(
                    f"dims.{name} must be a positive integer, got {value!r}",
                    field=f"dims.{name}",
                )


def _heads_to_features(z_stack: np.ndarray) -> np.ndarray:
    # (H, N, d_v) -> (N, H * d_v), head-major within each row
    h, n, d_v = z_stack.shape
    return z_stack.transpose(1, 0, 2).reshape(n, h * d_v)


def _residual_update(x: np.ndarray, z_stack: np.ndarray, output_head: np.ndarray) -> np.ndarray:
    return x + linalg.matmul(_heads_to_features(z_stack), output_head)


def euler_integrate(z0, schedule, velocity_fn, record: bool = False) -> LatentState:
    """Explicit Euler integration of ``velocity_fn(z, step_index)``.

    Raises :class:`DivergenceError` naming the step at which the state first
    went non-finite.
    """
    z = np.array(z0, dtype=np.float64)
    trajectory = [z.copy()] if record else None
    for t, h in enumerate(schedule):
        try:
            v = velocity_fn(z, t)
        except NonFiniteInputError as exc:
            raise DivergenceError(t) from exc
        z = z + h * v
        if not np.isfinite(z).all():
            raise DivergenceError(t)
        if record:
            trajectory.append(z.copy())
    return LatentState(
        image=z,
        step=len(tuple(schedule)),
        trajectory=tuple(trajectory) if record else None,
    )


def _forward_unguided(model: ToyBackbone, text: np.ndarray, image: np.ndarray):
    """One unguided pass through all blocks; returns features and per-block i2t."""
    x_t, x_i = text, image
    i2t_per_block = []
    for weights in model.blocks:
        qkv = compute_qkv(ModalityFeatures(text=x_t, image=x_i), weights)
        decomp = block_attention(qkv)
        i2t_per_block.append(decomp.z_i2t)
        x_t = _residual_update(x_t, decomp.z_text, model.output_head)
        x_i = _residual_update(x_i, decomp.z_image, model.output_head)
    return x_t, x_i, i2t_per_block


def _negative_text_qkv(weights: BlockWeights, neg_tokens: np.ndarray, image_side: QKV) -> QKV:
    """Negative branch QKV: its own text projections, the given image side."""

    def project(w):
        return np.stack([linalg.matmul(neg_tokens, w[h]) for h in range(w.shape[0])])

    return QKV(
        q_text=project(weights.w_q_text),
        k_text=project(weights.w_k_text),
        v_text=project(weights.w_v_text),
        q_image=image_side.q_image,
        k_image=image_side.k_image,
        v_image=image_side.v_image,
    )


def _forward_guided(
    model: ToyBackbone,
    pos_text: np.ndarray,
    image: np.ndarray,
    neg_text: np.ndarray | None,
    gcfg: GuidanceConfig,
    step: int,
    neg_image: np.ndarray | None,
):
    """One positive-branch pass with per-block guidance where active.

    ``neg_image`` carries the negative branch's own image features for the
    unshared ablation; with sharing it is None and the positive branch's
    image-side QKV is reused.
    """
    x_t, x_i = pos_text, image
    for b, weights in enumerate(model.blocks):
        qkv = compute_qkv(ModalityFeatures(text=x_t, image=x_i), weights)
        decomp = block_attention(qkv)
        z_image = decomp.z_image
        if gcfg.active_at(step, b):
            neg_tokens = neg_text
            if gcfg.neg_token_limit is not None:
                neg_tokens = neg_tokens[: gcfg.neg_token_limit]
            if neg_image is None:
                neg_qkv = _negative_text_qkv(weights, neg_tokens, qkv)
                z_neg_i2t = negative_branch_i2t(neg_qkv, qkv)
            else:
                neg_qkv = compute_qkv(
                    ModalityFeatures(text=neg_tokens, image=neg_image[b]), weights
                )
                z_neg_i2t = negative_branch_i2t(neg_qkv, neg_qkv)
            guided = apply_guidance(decomp.z_i2t, z_neg_i2t, gcfg)
            _, z_image = assemble_positive_output(guided, decomp)
        x_t = _residual_update(x_t, decomp.z_text, model.output_head)
        x_i = _residual_update(x_i, z_image, model.output_head)
    return x_t, x_i


def denoise(
    cfg: SamplerConfig,
    gcfg: GuidanceConfig,
    model: ToyBackbone,
    pos_text: np.ndarray,
    neg_text: np.ndarray | None,
    n_image: int,
    record_trajectory: bool = False,
) -> LatentState:
    """Run the full guided denoising loop and return the final latent.

    The initial latent is ``default_rng(cfg.seed).standard_normal`` of shape
    ``(n_image, d_model)``. The negative prompt may be ``None`` or empty
    whenever guidance can never fire.
    """
    pos_text = linalg.as_matrix(pos_text, "positive text")
    if pos_text.shape[1] != model.d_model:
        raise DimensionError(
            f"positive text d_model {pos_text.shape[1]} != model d_model {model.d_model}"
        )
    guidance_possible = gcfg.mode != "none" and gcfg.tau < cfg.steps
    if guidance_possible:
        if neg_text is None or np.asarray(neg_text).size == 0:
            raise ValidationError(
                "negative text is required when guidance can fire "
                f"(mode={gcfg.mode!r}, tau={gcfg.tau} < steps={cfg.steps})"
            )
        neg_text = linalg.as_matrix(neg_text, "negative text")
        if neg_text.shape[1] != model.d_model:
            raise DimensionError(
                f"negative text d_model {neg_text.shape[1]} != model d_model {model.d_model}"
            )
    else:
        neg_text = None
    if gcfg.block_mask is not None and len(gcfg.block_mask) != model.n_blocks:
        raise ValidationError(
            f"block_mask has {len(gcfg.block_mask)} entries for {model.n_blocks} blocks"
        )

    rng = np.random.default_rng(cfg.seed)
    z = rng.standard_normal((n_image, model.d_model))
    # Independent negative trajectory only exists for the unshared ablation.
    run_negative_branch = guidance_possible and not gcfg.share_image_features
    z_neg = z.copy() if run_negative_branch else None

    trajectory = [z.copy()] if record_trajectory else None
    for t in range(cfg.steps):
        h = cfg.schedule[t]
        try:
            neg_block_features = None
            if run_negative_branch:
                # Unguided lockstep run of the negative branch on its own
                # latent; collect its image features entering each block.
                x_nt, x_ni = neg_text, z_neg
                neg_block_features = []
                for weights in model.blocks:
                    neg_block_features.append(x_ni)
                    nqkv = compute_qkv(ModalityFeatures(text=x_nt, image=x_ni), weights)
                    ndecomp = block_attention(nqkv)
                    x_nt = _residual_update(x_nt, ndecomp.z_text, model.output_head)
                    x_ni = _residual_update(x_ni, ndecomp.z_image, model.output_head)
                v_neg = linalg.matmul(x_ni, model.velocity_head)

            _, x_i = _forward_guided(model, pos_text, z, neg_text, gcfg, t, neg_block_features)
            v = linalg.matmul(x_i, model.velocity_head)
        except NonFiniteInputError as exc:
            # an overflow inside a block is divergence of this step
            raise DivergenceError(t) from exc
        z = z + h * v
        if not np.isfinite(z).all():
            raise DivergenceError(t)
        if run_negative_branch:
            z_neg = z_neg + h * v_neg
            if not np.isfinite(z_neg).all():
                raise DivergenceError(t)
        if record_trajectory:
            trajectory.append(z.copy())
    return LatentState(
        image=z, step=cfg.steps, trajectory=tuple(trajectory) if record_trajectory else None
    )


def cfg_baseline_velocity(v_pos, v_neg, scale: float) -> np.ndarray:
    """Output-space guidance: ``v_neg + scale * (v_pos - v_neg)``.

    Classifier-free guidance with the unconditional branch replaced by the
    negative-conditioned branch. ``scale == 1`` returns the positive
    prediction unchanged.
    """
    v_pos = linalg.as_matrix(v_pos, "v_pos")
    v_neg = linalg.as_matrix(v_neg, "v_neg")
    if v_pos.shape != v_neg.shape:
        raise DimensionError(
            f"velocity shapes differ: {v_pos.shape} vs {v_neg.shape}"
        )
    return v_neg + float(scale) * (v_pos - v_neg)


def denoise_cfg_baseline(
    cfg: SamplerConfig,
    model: ToyBackbone,
    pos_text: np.ndarray,
    neg_text: np.ndarray,
    scale: float,
    n_image: int,
    record_trajectory: bool = False,
) -> LatentState:
    """Baseline sampler mixing branch velocities in output space.

    Both branches see the same latent each step; no attention features are
    modified.
    """
    pos_text = linalg.as_matrix(pos_text, "positive text")
    neg_text = linalg.as_matrix(neg_text, "negative text")
    rng = np.random.default_rng(cfg.seed)
    z0 = rng.standard_normal((n_image, model.d_model))

    def velocity(z, _t):
        _, x_pos, _ = _forward_unguided(model, pos_text, z)
        _, x_neg, _ = _forward_unguided(model, neg_text, z)
        return cfg_baseline_velocity(
            linalg.matmul(x_pos, model.velocity_head),
            linalg.matmul(x_neg, model.velocity_head),
            scale,
        )

    return euler_integrate(z0, cfg.schedule, velocity, record=record_trajectory)


# --- run descriptor -------------------------------------------------------
#
# JSON document consumed by the command-line front end:
# {steps, tau, alpha, mode, share_image_features, seed, model_seed,
#  dims{d_model,d_k,d_v,heads,blocks,n_text,n_image},
#  positive_concepts[], negative_concepts[]}

_DIMS_FIELDS = ("d_model", "d_k", "d_v", "heads", "blocks", "n_text", "n_image")


@dataclass(frozen=True)
class RunDescriptor:
    """A fully seeded, self-contained description of one toy generation run."""

    steps: int
    tau: int
    alpha: float
    mode: str
    share_image_features: bool
    seed: int
    model_seed: int
    dims: ModelDims
    positive_concepts: tuple[str, ...]
    negative_concepts: tuple[str, ...] = field(default_factory=tuple)

    def sampler_config(self, seed: int | None = None) -> SamplerConfig:
        return SamplerConfig(
            steps=self.steps, tau=self.tau, seed=self.seed if seed is None else seed
        )

    def guidance_config(self, alpha: float | None = None, mode: str | None = None) -> GuidanceConfig:
        return GuidanceConfig(
            alpha=self.alpha if alpha is None else alpha,
            tau=self.tau,
            mode=self.mode if mode is None else mode,
            share_image_features=self.share_image_features,
        )

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "tau": self.tau,
            "alpha": self.alpha,
            "mode": self.mode,
            "share_image_features": self.share_image_features,
            "seed": self.seed,
            "model_seed": self.model_seed,
            "dims": {name: getattr(self.dims, name) for name in _DIMS_FIELDS},
            "positive_concepts": list(self.positive_concepts),
            "negative_concepts": list(self.negative_concepts),
        }


def _require(data: dict, name: str, kinds, path: str = ""):
    where = f"{path}.{name}" if path else name
    if name not in data:
        raise ValidationError(f"missing field: {where}", field=where)
    value = data[name]
    if kinds is bool:
        if not isinstance(value, bool):
            raise ValidationError(f"{where} must be a boolean, got {value!r}", field=where)
    elif kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{where} must be an integer, got {value!r}", field=where)
    elif kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where} must be a number, got {value!r}", field=where)
        value = float(value)
    elif kinds is str:
        if not isinstance(value, str):
            raise ValidationError(f"{where} must be a string, got {value!r}", field=where)
    elif kinds is dict:
        if not isinstance(value, dict):
            raise ValidationError(f"{where} must be an object, got {value!r}", field=where)
    elif kinds is list:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ValidationError(f"{where} must be a list of strings, got {value!r}", field=where)
    return value


def parse_run_descriptor(data: dict) -> RunDescriptor:
    """Validate a descriptor dict, raising :class:`ValidationError` with the
    offending field path."""
    if not isinstance(data, dict):
        raise ValidationError(f"descriptor must be a JSON object, got {type(data).__name__}")
    steps = _require(data, "steps", int)
    tau = _require(data, "tau", int)
    alpha = _require(data, "alpha", float)
    mode = _require(data, "mode", str)
    share = _require(data, "share_image_features", bool)
    seed = _require(data, "seed", int)
    model_seed = _require(data, "model_seed", int)
    dims_raw = _require(data, "dims", dict)
    dims_kwargs = {name: _require(dims_raw, name, int, path="dims") for name in _DIMS_FIELDS}
    for extra in set(dims_raw) - set(_DIMS_FIELDS):
        raise ValidationError(f"unknown field: dims.{extra}", field=f"dims.{extra}")
    positive = _require(data, "positive_concepts", list)
    negative = _require(data, "negative_concepts", list)

    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}", field="steps")
    if not 0 <= tau <= steps:
        raise ValidationError(f"tau must be in [0, steps={steps}], got {tau}", field="tau")
    if not math.isfinite(alpha) or alpha < 0:
        raise ValidationError(f"alpha must be finite and >= 0, got {alpha}", field="alpha")
    if mode not in GUIDANCE_MODES:
        raise ValidationError(
            f"mode must be one of {GUIDANCE_MODES}, got {mode!r}", field="mode"
        )
    if not positive:
        raise ValidationError("positive_concepts must be non-empty", field="positive_concepts")
    if mode != "none" and tau < steps and not negative:
        raise ValidationError(
            "negative_concepts must be non-empty when guidance can fire",
            field="negative_concepts",
        )
    return RunDescriptor(
        steps=steps,
        tau=tau,
        alpha=alpha,
        mode=mode,
        share_image_features=share,
        seed=seed,
        model_seed=model_seed,
        dims=ModelDims(**dims_kwargs),
        positive_concepts=tuple(positive),
        negative_concepts=tuple(negative),
    )


def load_run_descriptor(path) -> RunDescriptor:
    """Parse a descriptor JSON file; see :func:`parse_run_descriptor`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"descriptor is not valid JSON: {exc}") from exc
    return parse_run_descriptor(data)

"""Orthogonal negative guidance in attention feature space, at desk scale.

A multimodal attention block computes one joint softmax over text and image
tokens; partitioning it by modality isolates the image-to-text output
component, which carries the cross-modal semantics. Negative guidance runs a
second branch conditioned on a negative prompt (sharing the positive
branch's image-side features), rejects the part of its image-to-text output
that is orthogonal to the positive one, and subtracts that rejection, scaled
by ``alpha``, from step ``tau`` of the sampling loop onward. The component
aligned with the positive features is preserved exactly.

The package provides the attention and guidance math on plain float64
numpy arrays, a seeded toy rectified-flow world in which suppression is
measurable by linear probes, the scenario dataset and verification rule of
the concept-suppression benchmark, and a batch CLI (``ong``).
"""

__version__ = "0.1.0"

from . import attention, benchdata, guidance, linalg, sampler, toyworld
from .attention import (
    AttentionDecomposition,
    BlockWeights,
    ModalityFeatures,
    QKV,
    block_attention,
    compute_qkv,
    joint_attention,
)
from .errors import DimensionError, DivergenceError, NonFiniteInputError, ValidationError
from .guidance import (
    GuidanceConfig,
    apply_guidance,
    assemble_positive_output,
    negative_branch_i2t,
    orthogonal_guide,
    plain_guide,
)
from .sampler import (
    LatentState,
    ModelDims,
    RunDescriptor,
    SamplerConfig,
    ToyBackbone,
    cfg_baseline_velocity,
    denoise,
    denoise_cfg_baseline,
    euler_integrate,
    load_run_descriptor,
    parse_run_descriptor,
)
from .toyworld import (
    ConceptLibrary,
    ProbeReport,
    build_concept_library,
    build_toy_model,
    concept_probe,
    embed_prompt,
)

__all__ = [
    "__version__",
    "attention",
    "benchdata",
    "guidance",
    "linalg",
    "sampler",
    "toyworld",
    "AttentionDecomposition",
    "BlockWeights",
    "ModalityFeatures",
    "QKV",
    "block_attention",
    "compute_qkv",
    "joint_attention",
    "DimensionError",
    "DivergenceError",
    "NonFiniteInputError",
    "ValidationError",
    "GuidanceConfig",
    "apply_guidance",
    "assemble_positive_output",
    "negative_branch_i2t",
    "orthogonal_guide",
    "plain_guide",
    "LatentState",
    "ModelDims",
    "RunDescriptor",
    "SamplerConfig",
    "ToyBackbone",
    "cfg_baseline_velocity",
    "denoise",
    "denoise_cfg_baseline",
    "euler_integrate",
    "load_run_descriptor",
    "parse_run_descriptor",
    "ConceptLibrary",
    "ProbeReport",
    "build_concept_library",
    "build_toy_model",
    "concept_probe",
    "embed_prompt",
]

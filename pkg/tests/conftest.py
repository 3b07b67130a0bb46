import json
from pathlib import Path

import numpy as np
import pytest

from ong.sampler import ModelDims, parse_run_descriptor
from ong.toyworld import build_concept_library, build_toy_model

REPO_ROOT = Path(__file__).resolve().parent.parent
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"

REFERENCE_FAST = REPO_ROOT / "configs" / "reference_fast.json"
REFERENCE_FULL = REPO_ROOT / "configs" / "reference_full.json"

# Small dimensions for tests that loop over many sampler runs.
SMALL_DIMS = ModelDims(d_model=8, d_k=4, d_v=4, heads=2, blocks=2, n_text=2, n_image=9)


@pytest.fixture(scope="session")
def reference_descriptor():
    return parse_run_descriptor(json.loads(REFERENCE_FAST.read_text()))


@pytest.fixture(scope="session")
def reference_model(reference_descriptor):
    return build_toy_model(reference_descriptor.model_seed, reference_descriptor.dims)


@pytest.fixture(scope="session")
def reference_library(reference_descriptor):
    return build_concept_library(
        reference_descriptor.model_seed, reference_descriptor.dims.d_model
    )


@pytest.fixture(scope="session")
def small_model():
    return build_toy_model(11, SMALL_DIMS)


@pytest.fixture(scope="session")
def small_library():
    return build_concept_library(11, SMALL_DIMS.d_model, names=("alpha", "beta", "gamma"))


def random_qkv(rng, heads=None, n_text=None, n_image=None, d_k=None, d_v=None):
    """A random valid QKV instance with dimensions drawn when not pinned."""
    from ong.attention import QKV

    heads = heads if heads is not None else int(rng.integers(1, 9))
    n_text = n_text if n_text is not None else int(rng.integers(1, 17))
    n_image = n_image if n_image is not None else int(rng.integers(1, 65))
    d_k = d_k if d_k is not None else int(rng.integers(1, 17))
    d_v = d_v if d_v is not None else int(rng.integers(1, 17))
    return QKV(
        q_text=rng.standard_normal((heads, n_text, d_k)),
        k_text=rng.standard_normal((heads, n_text, d_k)),
        v_text=rng.standard_normal((heads, n_text, d_v)),
        q_image=rng.standard_normal((heads, n_image, d_k)),
        k_image=rng.standard_normal((heads, n_image, d_k)),
        v_image=rng.standard_normal((heads, n_image, d_v)),
    )


def assert_bit_identical(a: np.ndarray, b: np.ndarray, context: str = ""):
    assert a.shape == b.shape and a.tobytes() == b.tobytes(), (
        f"arrays are not bit-identical {context}: max abs diff "
        f"{np.max(np.abs(a - b)) if a.shape == b.shape else 'shape mismatch'}"
    )

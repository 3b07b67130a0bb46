import numpy as np
import pytest

from ong.errors import DimensionError, ValidationError
from ong.guidance import GuidanceConfig
from ong.sampler import ModelDims, SamplerConfig, denoise
from ong.toyworld import (
    ConceptLibrary,
    build_concept_library,
    build_toy_model,
    concept_probe,
    embed_prompt,
    probe_concepts,
    suppression_report,
    write_pixmap,
)

from conftest import SMALL_DIMS, assert_bit_identical

REF_DIMS = ModelDims(d_model=32, d_k=16, d_v=16, heads=4, blocks=4, n_text=4, n_image=64)


class TestConceptLibrary:
    def test_unit_norm_and_near_orthogonal(self):
        lib = build_concept_library(5, 32)
        norms = np.linalg.norm(lib.vectors, axis=1)
        assert np.abs(norms - 1.0).max() <= 1e-9
        gram = lib.vectors @ lib.vectors.T
        off_diag = gram - np.diag(np.diag(gram))
        assert np.abs(off_diag).max() <= 0.1

    def test_deterministic(self):
        a = build_concept_library(5, 16, names=("x", "y"))
        b = build_concept_library(5, 16, names=("x", "y"))
        assert_bit_identical(a.vectors, b.vectors)

    def test_lookup(self):
        lib = build_concept_library(5, 16, names=("x", "y"))
        assert np.array_equal(lib.get("y"), lib.vectors[1])
        with pytest.raises(KeyError, match="unknown concept"):
            lib.get("zebra")

    def test_too_many_concepts_rejected(self):
        with pytest.raises(ValidationError):
            build_concept_library(5, 4, names=("a", "b", "c", "d", "e"))

    def test_invariants_validated_on_construction(self):
        import math

        with pytest.raises(ValidationError):
            ConceptLibrary(names=("a",), vectors=np.array([[2.0, 0.0]]))
        with pytest.raises(ValidationError):
            # unit vectors but far from orthogonal
            ConceptLibrary(
                names=("a", "b"),
                vectors=np.array([[1.0, 0.0], [math.sqrt(0.96), 0.2]]),
            )


class TestBuildToyModel:
    def test_same_seed_identical(self):
        a = build_toy_model(9, SMALL_DIMS)
        b = build_toy_model(9, SMALL_DIMS)
        assert_bit_identical(a.output_head, b.output_head)
        assert_bit_identical(a.velocity_head, b.velocity_head)
        for blk_a, blk_b in zip(a.blocks, b.blocks):
            assert_bit_identical(blk_a.w_v_text, blk_b.w_v_text)

    def test_different_seeds_differ(self):
        a = build_toy_model(9, SMALL_DIMS)
        b = build_toy_model(10, SMALL_DIMS)
        assert a.output_head.tobytes() != b.output_head.tobytes()

    def test_block_count_and_dims(self):
        model = build_toy_model(9, REF_DIMS)
        assert model.n_blocks == 4
        assert model.heads == 4
        assert model.d_model == 32
        assert model.output_head.shape == (4 * 16, 32)
        assert model.velocity_head.shape == (32, 32)

    def test_activations_after_one_block_are_calibrated(self):
        # features after one block's residual update, on unit-norm input rows
        from ong.attention import ModalityFeatures, block_attention, compute_qkv

        model = build_toy_model(9, REF_DIMS)
        rng = np.random.default_rng(0)
        text = rng.standard_normal((8, 32))
        text /= np.linalg.norm(text, axis=1, keepdims=True)
        image = rng.standard_normal((64, 32))
        image /= np.linalg.norm(image, axis=1, keepdims=True)
        qkv = compute_qkv(ModalityFeatures(text=text, image=image), model.blocks[0])
        decomp = block_attention(qkv)

        def update(x, stack):
            h, n, d_v = stack.shape
            return x + stack.transpose(1, 0, 2).reshape(n, h * d_v) @ model.output_head

        for x, stack in ((text, decomp.z_text), (image, decomp.z_image)):
            rms = float(np.sqrt((update(x, stack) ** 2).mean()))
            assert 0.1 <= rms <= 10.0

    def test_parameter_budget_guard(self):
        with pytest.raises(ValidationError):
            build_toy_model(
                0,
                ModelDims(
                    d_model=64, d_k=1024, d_v=16, heads=8, blocks=1, n_text=1, n_image=1
                ),
            )


class TestEmbedPrompt:
    def test_empty_list_gives_zero_rows(self, small_library):
        out = embed_prompt([], small_library, 3)
        assert out.shape == (0, SMALL_DIMS.d_model)

    def test_single_concept_rows_near_direction(self, small_library):
        out = embed_prompt(["alpha"], small_library, 3, seed=4, jitter=0.02)
        assert out.shape == (3, SMALL_DIMS.d_model)
        direction = small_library.get("alpha")
        distances = np.linalg.norm(out - direction, axis=1)
        assert np.all(distances > 0)
        assert np.all(distances <= 0.02 * 8)

    def test_two_concepts_stack(self, small_library):
        out = embed_prompt(["alpha", "beta"], small_library, 4, seed=4)
        assert out.shape == (8, SMALL_DIMS.d_model)

    def test_deterministic_per_seed(self, small_library):
        a = embed_prompt(["alpha"], small_library, 2, seed=7)
        b = embed_prompt(["alpha"], small_library, 2, seed=7)
        c = embed_prompt(["alpha"], small_library, 2, seed=8)
        assert_bit_identical(a, b)
        assert a.tobytes() != c.tobytes()

    def test_unknown_concept(self, small_library):
        with pytest.raises(KeyError):
            embed_prompt(["nope"], small_library, 2)

    def test_bad_token_count(self, small_library):
        with pytest.raises(ValidationError):
            embed_prompt(["alpha"], small_library, 0)


class TestConceptProbe:
    def test_zero_tokens_give_zero(self):
        assert concept_probe(np.zeros((5, 4)), np.array([1.0, 0, 0, 0])) == 0.0

    def test_aligned_tokens_give_one(self):
        c = np.zeros(6)
        c[2] = 1.0
        tokens = np.tile(c, (7, 1))
        assert concept_probe(tokens, c) == pytest.approx(1.0, abs=1e-15)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(50)
        tokens = rng.standard_normal((20, 8))
        c = rng.standard_normal(8)
        c /= np.linalg.norm(c)
        expected = sum(abs(float(tokens[i] @ c)) for i in range(20)) / 20
        assert concept_probe(tokens, c) == pytest.approx(expected, rel=1e-12)

    def test_probe_linearity_in_token_scale(self):
        rng = np.random.default_rng(51)
        tokens = rng.standard_normal((10, 6))
        c = rng.standard_normal(6)
        c /= np.linalg.norm(c)
        for factor in (-3.0, 0.5, 2.0):
            assert concept_probe(factor * tokens, c) == pytest.approx(
                abs(factor) * concept_probe(tokens, c), rel=1e-12
            )

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            concept_probe(np.zeros((3, 4)), np.zeros(5))

    def test_probe_concepts_and_report(self, small_library):
        rng = np.random.default_rng(52)
        guided = rng.standard_normal((6, SMALL_DIMS.d_model))
        unguided = rng.standard_normal((6, SMALL_DIMS.d_model))
        report = suppression_report(guided, unguided, small_library, ("alpha", "beta"))
        probes = probe_concepts(guided, small_library, ("alpha", "beta"))
        assert report.guided == probes
        for name, ratio in report.ratios.items():
            assert ratio == pytest.approx(report.guided[name] / report.unguided[name])


class TestPipelineDeterminism:
    def test_whole_pipeline_deterministic(self, small_model, small_library):
        pos = embed_prompt(["alpha", "beta"], small_library, 2, seed=1)
        neg = embed_prompt(["beta"], small_library, 2, seed=2)
        scfg = SamplerConfig(steps=3, tau=0, seed=0)
        gcfg = GuidanceConfig(alpha=2.0, tau=0, mode="orthogonal")
        a = denoise(scfg, gcfg, small_model, pos, neg, SMALL_DIMS.n_image)
        b = denoise(scfg, gcfg, small_model, pos, neg, SMALL_DIMS.n_image)
        assert_bit_identical(a.image, b.image)
        assert concept_probe(a.image, small_library.get("beta")) == concept_probe(
            b.image, small_library.get("beta")
        )


class TestPixmap:
    def test_p6_layout(self, tmp_path):
        rng = np.random.default_rng(53)
        tokens = rng.standard_normal((9, 5))
        path = tmp_path / "toy.ppm"
        write_pixmap(path, tokens)
        blob = path.read_bytes()
        assert blob.startswith(b"P6\n3 3\n255\n")
        assert len(blob) == len(b"P6\n3 3\n255\n") + 9 * 3

    def test_requires_square_grid(self, tmp_path):
        with pytest.raises(ValidationError):
            write_pixmap(tmp_path / "x.ppm", np.zeros((8, 5)))

    def test_requires_three_channels(self, tmp_path):
        with pytest.raises(ValidationError):
            write_pixmap(tmp_path / "x.ppm", np.zeros((4, 2)))

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(54)
        tokens = rng.standard_normal((16, 4))
        p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
        write_pixmap(p1, tokens)
        write_pixmap(p2, tokens)
        assert p1.read_bytes() == p2.read_bytes()

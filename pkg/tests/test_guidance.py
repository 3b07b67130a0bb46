import numpy as np
import pytest

from ong.attention import QKV, block_attention
from ong.errors import DimensionError
from ong.guidance import (
    BranchOutputs,
    GuidanceConfig,
    apply_guidance,
    assemble_positive_output,
    mixed_negative_qkv,
    negative_branch_i2t,
    orthogonal_guide,
    plain_guide,
)

from conftest import random_qkv


def cfg(alpha, mode="orthogonal", **kw):
    return GuidanceConfig(alpha=alpha, mode=mode, **kw)


class TestNegativeBranch:
    def test_identical_prompts_reproduce_positive_output(self):
        rng = np.random.default_rng(300)
        pos = random_qkv(rng, heads=2, n_text=3, n_image=5)
        z_neg = negative_branch_i2t(pos, pos)
        z_pos = block_attention(pos).z_i2t
        assert z_neg.tobytes() == z_pos.tobytes()

    def test_zero_negative_values_zero_output(self):
        rng = np.random.default_rng(301)
        pos = random_qkv(rng, heads=2, n_text=3, n_image=4)
        neg = random_qkv(rng, heads=2, n_text=2, n_image=4, d_k=pos.d_k, d_v=pos.d_v)
        neg = QKV(
            q_text=neg.q_text, k_text=neg.k_text, v_text=np.zeros_like(neg.v_text),
            q_image=neg.q_image, k_image=neg.k_image, v_image=neg.v_image,
        )
        z = negative_branch_i2t(neg, pos)
        assert np.array_equal(z, np.zeros_like(z))

    def test_matches_hand_assembled_mixed_qkv(self):
        rng = np.random.default_rng(302)
        pos = random_qkv(rng, heads=3, n_text=4, n_image=6)
        neg = random_qkv(rng, heads=3, n_text=2, n_image=6, d_k=pos.d_k, d_v=pos.d_v)
        expected = block_attention(
            QKV(
                q_text=neg.q_text, k_text=neg.k_text, v_text=neg.v_text,
                q_image=pos.q_image, k_image=pos.k_image, v_image=pos.v_image,
            )
        ).z_i2t
        got = negative_branch_i2t(neg, pos)
        assert got.tobytes() == expected.tobytes()

    def test_compute_full_matches_fast_path(self):
        rng = np.random.default_rng(303)
        pos = random_qkv(rng, heads=2, n_text=3, n_image=5)
        neg = random_qkv(rng, heads=2, n_text=4, n_image=5, d_k=pos.d_k, d_v=pos.d_v)
        fast = negative_branch_i2t(neg, pos, compute_full=False)
        full = negative_branch_i2t(neg, pos, compute_full=True)
        assert fast.tobytes() == full.tobytes()

    def test_branch_compatibility_errors(self):
        rng = np.random.default_rng(304)
        pos = random_qkv(rng, heads=2, n_text=3, n_image=5, d_k=4, d_v=4)
        neg = random_qkv(rng, heads=3, n_text=3, n_image=5, d_k=4, d_v=4)
        with pytest.raises(DimensionError, match="head"):
            mixed_negative_qkv(neg, pos)
        neg2 = random_qkv(rng, heads=2, n_text=3, n_image=5, d_k=5, d_v=4)
        with pytest.raises(DimensionError, match="d_k"):
            mixed_negative_qkv(neg2, pos)

    def test_branch_outputs_shape_check(self):
        rng = np.random.default_rng(305)
        pos = random_qkv(rng, heads=2, n_text=3, n_image=5, d_v=4)
        decomp = block_attention(pos)
        with pytest.raises(DimensionError):
            BranchOutputs(positive=decomp, negative_i2t=np.zeros((2, 5, 3)))


class TestOrthogonalGuide:
    def test_alpha_zero_is_identity_bitwise(self):
        rng = np.random.default_rng(306)
        z_pos = rng.standard_normal((4, 6))
        z_neg = rng.standard_normal((4, 6))
        out = orthogonal_guide(z_pos, z_neg, cfg(0.0))
        assert out.tobytes() == z_pos.tobytes()

    def test_parallel_negative_changes_nothing(self):
        rng = np.random.default_rng(307)
        z_pos = rng.standard_normal((5, 4))
        out = orthogonal_guide(z_pos, 2.5 * z_pos, cfg(1.7))
        assert np.abs(out - z_pos).max() <= 1e-12

    def test_hand_computed_example(self):
        # reject((1,1),(1,0)) = (0,1); (1,0) - 1*(0,1) = (1,-1)
        out = orthogonal_guide([[1.0, 0.0]], [[1.0, 1.0]], cfg(1.0))
        assert np.array_equal(out, [[1.0, -1.0]])

    def test_zero_positive_row_subtracts_full_negative(self):
        z_pos = np.zeros((1, 3))
        z_neg = np.array([[1.0, 2.0, 3.0]])
        out = orthogonal_guide(z_pos, z_neg, cfg(2.0))
        assert np.array_equal(out, [[-2.0, -4.0, -6.0]])

    def test_head_stack_matches_per_head(self):
        rng = np.random.default_rng(308)
        z_pos = rng.standard_normal((3, 5, 4))
        z_neg = rng.standard_normal((3, 5, 4))
        c = cfg(1.3)
        stacked = orthogonal_guide(z_pos, z_neg, c)
        for h in range(3):
            assert stacked[h].tobytes() == orthogonal_guide(z_pos[h], z_neg[h], c).tobytes()

    def test_requires_matching_shapes_and_mode(self):
        with pytest.raises(DimensionError):
            orthogonal_guide(np.ones((2, 3)), np.ones((3, 3)), cfg(1.0))
        with pytest.raises(ValueError):
            orthogonal_guide(np.ones((2, 3)), np.ones((2, 3)), cfg(1.0, mode="plain"))


class TestPlainGuide:
    def test_alpha_zero(self):
        rng = np.random.default_rng(309)
        z_pos = rng.standard_normal((4, 4))
        out = plain_guide(z_pos, rng.standard_normal((4, 4)), cfg(0.0, mode="plain"))
        assert out.tobytes() == z_pos.tobytes()

    def test_full_cancellation(self):
        rng = np.random.default_rng(310)
        z = rng.standard_normal((4, 4))
        out = plain_guide(z, z, cfg(1.0, mode="plain"))
        assert np.abs(out).max() == 0.0

    def test_plain_deviates_at_least_as_much(self):
        rng = np.random.default_rng(311)
        for _ in range(30):
            z_pos = rng.standard_normal((6, 5))
            z_neg = rng.standard_normal((6, 5))
            alpha = float(rng.uniform(0, 4))
            d_orth = orthogonal_guide(z_pos, z_neg, cfg(alpha)) - z_pos
            d_plain = plain_guide(z_pos, z_neg, cfg(alpha, mode="plain")) - z_pos
            assert np.all(
                np.linalg.norm(d_orth, axis=1)
                <= np.linalg.norm(d_plain, axis=1) + 1e-12
            )


class TestInvariants:
    def test_orthogonality_and_projection_preservation(self):
        rng = np.random.default_rng(312)
        for _ in range(50):
            z_pos = rng.standard_normal((8, 6))
            z_neg = rng.standard_normal((8, 6))
            alpha = float(rng.uniform(0.1, 5))
            guided = orthogonal_guide(z_pos, z_neg, cfg(alpha))
            delta = guided - z_pos
            tol = 1e-9 * alpha * np.linalg.norm(z_neg, axis=1) * np.linalg.norm(z_pos, axis=1)
            # the subtracted vector is orthogonal to the positive feature
            assert np.all(np.abs((delta * z_pos).sum(axis=1)) <= tol)
            # the positive-aligned component is untouched
            pres = (guided * z_pos).sum(axis=1) - (z_pos * z_pos).sum(axis=1)
            assert np.all(np.abs(pres) <= tol)

    def test_scale_linearity(self):
        rng = np.random.default_rng(313)
        z_pos = rng.standard_normal((5, 7))
        z_neg = rng.standard_normal((5, 7))
        d1 = orthogonal_guide(z_pos, z_neg, cfg(1.5)) - z_pos
        d2 = orthogonal_guide(z_pos, z_neg, cfg(3.0)) - z_pos
        assert np.allclose(d2, 2.0 * d1, atol=1e-12)

    def test_mode_none_is_identity(self):
        rng = np.random.default_rng(314)
        z_pos = rng.standard_normal((4, 4))
        out = apply_guidance(z_pos, rng.standard_normal((4, 4)), cfg(2.0, mode="none"))
        assert out.tobytes() == z_pos.tobytes()


class TestAssemble:
    def test_zero_guided_leaves_i2i(self):
        rng = np.random.default_rng(315)
        decomp = block_attention(random_qkv(rng, heads=2, n_text=3, n_image=4))
        z_text, z_image = assemble_positive_output(np.zeros_like(decomp.z_i2t), decomp)
        assert np.array_equal(z_image, decomp.z_i2i)
        assert z_text.tobytes() == decomp.z_text.tobytes()

    def test_unguided_assembly_reproduces_z_image(self):
        rng = np.random.default_rng(316)
        decomp = block_attention(random_qkv(rng, heads=2, n_text=2, n_image=5))
        _, z_image = assemble_positive_output(decomp.z_i2t, decomp)
        assert z_image.tobytes() == decomp.z_image.tobytes()

    def test_algebraic_oracle(self):
        from ong import linalg

        rng = np.random.default_rng(317)
        pos = random_qkv(rng, heads=2, n_text=3, n_image=6)
        neg = random_qkv(rng, heads=2, n_text=2, n_image=6, d_k=pos.d_k, d_v=pos.d_v)
        decomp = block_attention(pos)
        z_neg = negative_branch_i2t(neg, pos)
        c = cfg(1.9)
        _, z_image = assemble_positive_output(
            orthogonal_guide(decomp.z_i2t, z_neg, c), decomp
        )
        for h in range(2):
            expected = decomp.z_image[h] - c.alpha * linalg.row_reject(
                z_neg[h], decomp.z_i2t[h]
            )
            assert np.abs(z_image[h] - expected).max() <= 1e-12

    def test_shape_mismatch(self):
        rng = np.random.default_rng(318)
        decomp = block_attention(random_qkv(rng, heads=2, n_text=2, n_image=3))
        with pytest.raises(DimensionError):
            assemble_positive_output(np.zeros((2, 3, 99)), decomp)


class TestConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            GuidanceConfig(alpha=-1.0)
        with pytest.raises(ValueError):
            GuidanceConfig(alpha=float("nan"))
        with pytest.raises(ValueError):
            GuidanceConfig(alpha=1.0, mode="sideways")
        with pytest.raises(ValueError):
            GuidanceConfig(alpha=1.0, tau=-1)
        with pytest.raises(ValueError):
            GuidanceConfig(alpha=1.0, neg_token_limit=0)

    def test_active_at_gating(self):
        c = GuidanceConfig(alpha=1.0, tau=3, mode="orthogonal")
        assert not c.active_at(2)
        assert c.active_at(3)
        none = GuidanceConfig(alpha=1.0, tau=0, mode="none")
        assert not none.active_at(10)
        masked = GuidanceConfig(alpha=1.0, tau=0, block_mask=(True, False))
        assert masked.active_at(0, block=0)
        assert not masked.active_at(0, block=1)

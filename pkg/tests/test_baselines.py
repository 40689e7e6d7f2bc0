import numpy as np
import pytest

from ckmsr.baselines import (
    UpsampleMethod,
    bicubic_upsample,
    bicubic_upsample_array,
    cubic_kernel,
    nn_upsample,
    nn_upsample_array,
    upsample,
)
from ckmsr.core import ChannelKind, CKMGrid


def brute_force_bicubic(src, k, a=-0.5):
    """Direct summation over the 4x4 support at every output location."""
    h, w = src.shape
    out = np.zeros((h * k, w * k))
    for i in range(h * k):
        for j in range(w * k):
            ur = (i + 0.5) / k - 0.5
            uc = (j + 0.5) / k - 0.5
            br, bc = int(np.floor(ur)), int(np.floor(uc))
            acc = 0.0
            for r in range(br - 1, br + 3):
                for c in range(bc - 1, bc + 3):
                    wr = float(cubic_kernel(np.float64(ur - r), a))
                    wc = float(cubic_kernel(np.float64(uc - c), a))
                    acc += src[min(max(r, 0), h - 1), min(max(c, 0), w - 1)] * wr * wc
            out[i, j] = acc
    return out


class TestNearest:
    def test_block_replication(self):
        out = nn_upsample_array(np.array([[1.0, 2.0], [3.0, 4.0]]), 2)
        expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        assert out.tolist() == expected

    def test_identity_at_one(self):
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(nn_upsample_array(a, 1), a)

    def test_constant_stays_constant(self):
        out = nn_upsample_array(np.full((3, 3), 7.25), 5)
        assert (out == 7.25).all()

    def test_grid_mask_replicated(self):
        mask = np.array([[True, False]])
        g = CKMGrid(ChannelKind.PATH_LOSS, np.zeros((1, 2)), mask)
        out = nn_upsample(g, 3)
        assert out.mask[:, :3].all() and not out.mask[:, 3:].any()

    def test_invalid_factor(self):
        with pytest.raises(ValueError):
            nn_upsample_array(np.zeros((2, 2)), 0)


class TestCubicKernel:
    def test_interpolating_property(self):
        assert cubic_kernel(np.float64(0.0)) == 1.0
        assert cubic_kernel(np.array([1.0, 2.0, 2.5])).tolist() == [0.0, 0.0, 0.0]

    def test_partition_of_unity(self):
        t = np.linspace(0, 1, 33)
        total = sum(cubic_kernel(t - j) for j in (-1, 0, 1, 2))
        np.testing.assert_allclose(total, 1.0, atol=1e-14)


class TestBicubic:
    def test_constant_preserved(self):
        out = bicubic_upsample_array(np.full((4, 5), -3.5), 3)
        np.testing.assert_allclose(out, -3.5, atol=1e-12)

    def test_ramp_interior_is_exact(self):
        # 4x1 column ramp, k=2: interior outputs sit at source coords 1.25 and 1.75
        out = bicubic_upsample_array(np.array([[0.0], [10.0], [20.0], [30.0]]), 2)
        assert out.shape == (8, 2)
        np.testing.assert_allclose(out[3], 12.5, atol=1e-12)
        np.testing.assert_allclose(out[4], 17.5, atol=1e-12)

    def test_affine_surface_interior_exact(self):
        rows, cols = np.meshgrid(np.arange(8.0), np.arange(8.0), indexing="ij")
        surface = 3.0 * rows - 2.0 * cols + 0.5
        k = 4
        out = bicubic_upsample_array(surface, k)
        u = (np.arange(8 * k) + 0.5) / k - 0.5
        interior = (u >= 1.0) & (u <= 6.0)  # 4-tap support stays off the replicated edges
        expected = 3.0 * u[:, None] - 2.0 * u[None, :] + 0.5
        np.testing.assert_allclose(
            out[np.ix_(interior, interior)], expected[np.ix_(interior, interior)], atol=1e-9
        )

    @pytest.mark.parametrize("k", [2, 4])
    @pytest.mark.parametrize("a", [-0.5, -0.75])
    def test_matches_brute_force_oracle(self, k, a):
        rng = np.random.default_rng(11)
        src = rng.uniform(-150.0, -50.0, (8, 8))
        fast = bicubic_upsample_array(src, k, a)
        slow = brute_force_bicubic(src, k, a)
        np.testing.assert_allclose(fast, slow, rtol=1e-9)

    def test_identity_at_one(self):
        a = np.random.default_rng(1).normal(size=(3, 4))
        np.testing.assert_array_equal(bicubic_upsample_array(a, 1), a)

    def test_commutes_with_affine_map(self):
        rng = np.random.default_rng(12)
        g = rng.normal(size=(6, 6))
        alpha, beta = 2.5, -40.0
        direct = bicubic_upsample_array(alpha * g + beta, 4)
        composed = alpha * bicubic_upsample_array(g, 4) + beta
        np.testing.assert_allclose(direct, composed, rtol=1e-12, atol=1e-9)
        np.testing.assert_allclose(
            nn_upsample_array(alpha * g + beta, 4), alpha * nn_upsample_array(g, 4) + beta
        )

    def test_domain_clamp_limits_overshoot(self):
        values = np.full((6, 6), -60.0)
        values[3, 3] = -47.0  # spike induces ringing below the plateau
        g = CKMGrid(ChannelKind.PATH_LOSS, values)
        out = bicubic_upsample(g, 4, domain=(-60.0, -47.0))
        assert out.values.min() >= -60.0 and out.values.max() <= -47.0
        unclamped = bicubic_upsample(g, 4)
        assert unclamped.values.min() < -60.0

    def test_non_finite_kernel_parameter_rejected(self):
        with pytest.raises(ValueError):
            bicubic_upsample_array(np.zeros((2, 2)), 2, a=np.nan)


def test_upsample_dispatch():
    g = CKMGrid(ChannelKind.PATH_LOSS, np.arange(4.0).reshape(2, 2))
    nn = upsample(g, 2, UpsampleMethod.NEAREST)
    bc = upsample(g, 2, UpsampleMethod.BICUBIC)
    assert nn.values.shape == bc.values.shape == (4, 4)
    assert not np.array_equal(nn.values, bc.values)

"""Interpolation kernel tests: both backends, bit-for-bit agreement."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import usrn.kernels as kernels
from usrn.kernels import reference

BACKENDS = [reference]
try:
    from usrn.kernels import _fastcore

    BACKENDS.append(_fastcore)
except ImportError:
    _fastcore = None

needs_compiled = pytest.mark.skipif(
    _fastcore is None, reason="compiled backend not built"
)


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param


def random_coords(n, seed=0):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, (n, 3))


class TestTrilinearCorners:
    def test_weights_partition_of_unity(self, backend):
        _, w = backend.trilinear_corners(5, 6, 7, random_coords(200))
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        assert (w >= 0).all()

    def test_vertex_coordinate_hits_single_corner(self, backend):
        # vertex (1, 2, 3) of a 4x5x6 grid
        p = np.array(
            [[-1 + 2 * 1 / 3, -1 + 2 * 2 / 4, -1 + 2 * 3 / 5]], dtype=np.float64
        )
        idx, w = backend.trilinear_corners(4, 5, 6, p)
        flat = 1 + 4 * (2 + 5 * 3)
        k = int(np.argmax(w[0]))
        assert idx[0, k] == flat
        assert w[0, k] == pytest.approx(1.0, abs=1e-12)

    def test_cell_center_weights_uniform(self, backend):
        # center of the first cell of a 2-point axis grid
        p = np.zeros((1, 3))
        idx, w = backend.trilinear_corners(2, 2, 2, p)
        np.testing.assert_allclose(w[0], 0.125)
        assert sorted(idx[0].tolist()) == list(range(8))

    def test_x_fastest_flat_indices(self, backend):
        p = np.array([[-1.0, -1.0, -1.0]])
        idx, w = backend.trilinear_corners(3, 4, 5, p)
        # corners of cell (0,0,0): offsets in x-fastest order
        expected = [
            dx + 3 * (dy + 4 * dz)
            for dz in (0, 1)
            for dy in (0, 1)
            for dx in (0, 1)
        ]
        assert idx[0].tolist() == expected
        assert w[0, 0] == 1.0

    def test_out_of_domain_raises(self, backend):
        p = np.array([[0.0, 0.0, 1.2]])
        with pytest.raises(ValueError):
            backend.trilinear_corners(4, 4, 4, p)

    def test_boundary_fuzz_is_clamped(self, backend):
        p = np.array([[1.0 + 5e-10, -1.0 - 5e-10, 0.0]])
        idx, w = backend.trilinear_corners(4, 4, 4, p)
        assert np.isfinite(w).all()
        np.testing.assert_allclose(w.sum(), 1.0, atol=1e-12)

    def test_degenerate_grid_raises(self, backend):
        with pytest.raises(ValueError):
            backend.trilinear_corners(1, 4, 4, random_coords(3))

    def test_bad_shape_raises(self, backend):
        with pytest.raises(ValueError):
            backend.trilinear_corners(4, 4, 4, np.zeros((5, 2)))


class TestHashCorners:
    def test_direct_indexing_small_level(self, backend):
        # (4+1)^3 = 125 <= 2^14: collision-free direct indexing
        idx, w = backend.hash_corners(4, 14, random_coords(100))
        assert idx.max() < 125
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_hashed_indices_masked_to_table(self, backend):
        # (64+1)^3 > 2^14: spatial hash, masked
        idx, _ = backend.hash_corners(64, 14, random_coords(500))
        assert idx.min() >= 0
        assert idx.max() < 2**14

    def test_hash_formula_matches_manual(self, backend):
        # corner (1, 2, 3) hashed by xor of prime-multiplied components
        res, t = 64, 10
        p = np.array(
            [[-1 + 2 * 1.0 / res, -1 + 2 * 2.0 / res, -1 + 2 * 3.0 / res]]
        )
        idx, w = backend.hash_corners(res, t, p)
        k = int(np.argmax(w[0]))
        expected = (
            np.uint64(1)
            ^ (np.uint64(2) * np.uint64(reference.HASH_PRIME_Y))
            ^ (np.uint64(3) * np.uint64(reference.HASH_PRIME_Z))
        ) & np.uint64(2**t - 1)
        assert idx[0, k] == int(expected)

    def test_resolution_one_valid(self, backend):
        idx, w = backend.hash_corners(1, 14, random_coords(10))
        assert idx.max() < 8

    def test_zero_resolution_raises(self, backend):
        with pytest.raises(ValueError):
            backend.hash_corners(0, 14, random_coords(3))


class TestGatherScatter:
    def test_gather_constant_table(self, backend):
        table = np.full((4**3, 3), 7.5)
        idx, w = backend.trilinear_corners(4, 4, 4, random_coords(50))
        out = backend.weighted_gather(table, idx, w)
        np.testing.assert_allclose(out, 7.5, atol=1e-12)

    def test_scatter_is_gather_adjoint(self, backend, rng):
        # <gather(T), U> == <T, scatter(U)> for random T, U
        table = rng.normal(size=(5**3, 4))
        idx, w = backend.trilinear_corners(5, 5, 5, random_coords(64, seed=1))
        upstream = rng.normal(size=(64, 4))
        lhs = float((backend.weighted_gather(table, idx, w) * upstream).sum())
        grad = np.zeros_like(table)
        backend.weighted_scatter_add(grad, idx, w, upstream)
        rhs = float((table * grad).sum())
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_scatter_cell_center_splits_evenly(self, backend):
        p = np.zeros((1, 3))
        idx, w = backend.trilinear_corners(2, 2, 2, p)
        grad = np.zeros((8, 1))
        backend.weighted_scatter_add(grad, idx, w, np.ones((1, 1)))
        np.testing.assert_allclose(grad, 0.125)

    def test_gather_accepts_readonly_table(self, backend):
        table = np.ones((4**3, 2))
        table.flags.writeable = False
        idx, w = backend.trilinear_corners(4, 4, 4, random_coords(8))
        out = backend.weighted_gather(table, idx, w)
        np.testing.assert_allclose(out, 1.0)


@needs_compiled
class TestBackendParity:
    """The compiled backend must agree with the reference bit for bit."""

    def test_trilinear_bitwise(self):
        p = random_coords(2000, seed=5)
        i1, w1 = reference.trilinear_corners(9, 7, 5, p)
        i2, w2 = _fastcore.trilinear_corners(9, 7, 5, p)
        assert np.array_equal(i1, i2)
        assert np.array_equal(w1, w2)

    def test_hash_bitwise(self):
        p = random_coords(2000, seed=6)
        for res in (1, 4, 33, 64):
            i1, w1 = reference.hash_corners(res, 14, p)
            i2, w2 = _fastcore.hash_corners(res, 14, p)
            assert np.array_equal(i1, i2)
            assert np.array_equal(w1, w2)

    def test_gather_bitwise(self, rng):
        table = rng.normal(size=(9 * 7 * 5, 8))
        p = random_coords(1000, seed=7)
        idx, w = reference.trilinear_corners(9, 7, 5, p)
        g1 = reference.weighted_gather(table, idx, w)
        g2 = _fastcore.weighted_gather(table, idx, w)
        assert np.array_equal(g1, g2)

    def test_scatter_bitwise(self, rng):
        table_shape = (9 * 7 * 5, 8)
        p = random_coords(1000, seed=8)
        idx, w = reference.trilinear_corners(9, 7, 5, p)
        up = rng.normal(size=(1000, 8))
        o1 = np.zeros(table_shape)
        o2 = np.zeros(table_shape)
        reference.weighted_scatter_add(o1, idx, w, up)
        _fastcore.weighted_scatter_add(o2, idx, w, up)
        assert np.array_equal(o1, o2)

    @settings(max_examples=30, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        nx=st.integers(2, 9),
        ny=st.integers(2, 9),
        nz=st.integers(2, 9),
    )
    def test_trilinear_bitwise_property(self, seed, nx, ny, nz):
        p = np.random.default_rng(seed).uniform(-1, 1, (64, 3))
        i1, w1 = reference.trilinear_corners(nx, ny, nz, p)
        i2, w2 = _fastcore.trilinear_corners(nx, ny, nz, p)
        assert np.array_equal(i1, i2) and np.array_equal(w1, w2)


class TestBackendSelection:
    def test_active_backend_exposes_kernels(self):
        assert kernels.BACKEND in ("compiled", "reference")
        for name in (
            "trilinear_corners",
            "hash_corners",
            "weighted_gather",
            "weighted_scatter_add",
        ):
            assert callable(getattr(kernels, name))

    def test_env_var_forces_reference(self):
        import os
        import subprocess
        import sys

        out = subprocess.run(
            [sys.executable, "-c", "import usrn.kernels as k; print(k.BACKEND)"],
            env={**os.environ, "USRN_PURE_PYTHON": "1"},
            capture_output=True,
            text=True,
        )
        assert out.stdout.strip() == "reference"

import math

import numpy as np
import pytest
import scipy.linalg

import chemolab as cl
from chemolab.elliptic import discrete_sigma, helmholtz_matrix
from chemolab.errors import NonpositiveV, OutOfRange
from chemolab.grid import Field, integrate, laplacian_apply


def _grid_1d(nx, length=math.pi):
    p = cl.build_params(
        {"chi": 1, "a": 1, "b": 1, "theta": 2, "kappa": 1, "beta": 1, "dim": 1, "L": length}
    )
    return cl.make_grid(p, nx)


def _grid_2d(nx, ny=None, lengths=(math.pi, math.pi)):
    p = cl.build_params(
        {"chi": 1, "a": 1, "b": 1, "theta": 2, "kappa": 1, "beta": 1,
         "dim": 2, "lengths": lengths}
    )
    return cl.make_grid(p, (nx, ny or nx))


class TestMakeGrid:
    def test_cell_centers(self):
        g = _grid_1d(8)
        h = math.pi / 8
        assert g.spacings == (pytest.approx(h),)
        assert g.axis_centers(0)[0] == pytest.approx(0.5 * h)
        assert g.axis_centers(0)[-1] == pytest.approx(math.pi - 0.5 * h)

    def test_2d_cell_count(self):
        g = _grid_2d(16, lengths=(1.0, 1.0))
        assert g.n_cells == 256

    def test_resolution_floor(self):
        with pytest.raises(OutOfRange):
            _grid_1d(4)


class TestEigenpairs:
    def test_1d_spectrum(self):
        g = _grid_1d(64)
        pairs = cl.neumann_eigenvalues(g, 5)
        assert [e.sigma for e in pairs] == pytest.approx([1, 2, 5, 10, 17])
        assert all(e.multiplicity == 1 for e in pairs)
        assert pairs[0].eigenfunction.values == pytest.approx(np.ones(64))

    def test_square_degeneracy(self):
        g = _grid_2d(16)
        pairs = cl.neumann_eigenvalues(g, 3)
        assert pairs[1].sigma == pytest.approx(2.0)
        assert pairs[1].multiplicity == 2
        assert set(pairs[1].indices) == {(1, 0), (0, 1)}

    def test_count_capped_by_cells(self):
        g = _grid_1d(8)
        with pytest.raises(OutOfRange):
            cl.neumann_eigenvalues(g, 9)

    def test_discrete_formula_matches_dense_eigensolver(self):
        g = _grid_1d(256)
        ours = sorted(discrete_sigma(g, (k,)) for k in range(10))
        dense = scipy.linalg.eigvalsh(helmholtz_matrix(g).toarray())
        assert ours == pytest.approx(list(dense[:10]), abs=1e-9)

    def test_discrete_eigen_residual(self):
        g = _grid_1d(128)
        A = helmholtz_matrix(g)
        for pair in cl.neumann_eigenvalues(g, 6):
            e = pair.eigenfunction.values
            assert np.max(np.abs(A @ e - pair.sigma_h * e)) < 1e-10

    def test_descriptor(self):
        g = _grid_2d(16)
        pairs = cl.neumann_eigenvalues(g, 2)
        assert "cos" in pairs[1].descriptor


class TestHelmholtzSolve:
    def test_constant_source(self):
        g = _grid_1d(32)
        v = cl.solve_helmholtz(g, Field.constant(g, 3.5))
        assert v.values == pytest.approx(np.full(32, 3.5), abs=1e-13)

    def test_manufactured_cosine_second_order(self):
        errs = {}
        for nx in (128, 256):
            g = _grid_1d(nx)
            x = g.coordinates[0]
            v = cl.solve_helmholtz(g, Field(2.0 * np.cos(x), g))
            errs[nx] = float(np.max(np.abs(v.values - np.cos(x))))
        assert errs[256] < 4e-5
        assert 3.6 <= errs[128] / errs[256] <= 4.4

    def test_eigenfunction_relation(self):
        g = _grid_1d(64)
        for pair in cl.neumann_eigenvalues(g, 4):
            v = cl.solve_helmholtz(g, pair.eigenfunction)
            assert v.values == pytest.approx(
                pair.eigenfunction.values / pair.sigma_h, abs=1e-9
            )

    @pytest.mark.parametrize("dim", [1, 2])
    def test_compatibility_cell_sums(self, dim):
        g = _grid_1d(64) if dim == 1 else _grid_2d(24)
        rng = np.random.default_rng(7)
        src = Field(rng.uniform(0.5, 2.0, g.shape), g)
        v = cl.solve_helmholtz(g, src)
        total_v = integrate(v.values, g)
        total_s = integrate(src.values, g)
        assert abs(total_v - total_s) <= 1e-12 * abs(total_s)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_maximum_principle(self, dim):
        g = _grid_1d(64) if dim == 1 else _grid_2d(24)
        rng = np.random.default_rng(3)
        src = Field(rng.uniform(0.25, 4.0, g.shape), g)
        v = cl.solve_helmholtz(g, src)
        assert v.values.min() >= src.values.min() - 1e-10
        assert v.values.max() <= src.values.max() + 1e-10

    def test_2d_cg_matches_direct_solve(self):
        g = _grid_2d(16)
        rng = np.random.default_rng(11)
        src = rng.uniform(0.0, 1.0, g.shape)
        v = cl.solve_helmholtz(g, Field(src, g)).values.ravel()
        direct = scipy.linalg.solve(helmholtz_matrix(g).toarray(), src.ravel())
        assert v == pytest.approx(direct, abs=1e-9)

    def test_operator_is_symmetric_positive_definite(self):
        g = _grid_2d(8)
        A = helmholtz_matrix(g).toarray()
        assert A == pytest.approx(A.T)
        assert scipy.linalg.eigvalsh(A).min() >= 1.0 - 1e-12

    def test_rejects_nonfinite_source(self):
        g = _grid_1d(16)
        bad = np.ones(16)
        bad[3] = np.nan
        with pytest.raises(OutOfRange):
            cl.solve_helmholtz(g, Field(bad, g))


class TestEllipticIdentity:
    def test_constant_state_is_exact(self):
        g = _grid_1d(32)
        c, beta, kappa = 2.0, 1.5, 2.0
        u = Field.constant(g, c)
        v = Field.constant(g, beta * c**kappa)
        assert cl.elliptic_identity_residual(u, v, beta, kappa) == pytest.approx(0.0, abs=1e-12)

    def test_second_order_residual(self):
        res = {}
        for nx in (64, 128):
            g = _grid_1d(nx)
            x = g.coordinates[0]
            u = Field(1.0 + 0.5 * np.cos(x), g)
            v = cl.solve_helmholtz(g, Field(u.values, g))
            res[nx] = abs(cl.elliptic_identity_residual(u, v, 1.0, 1.0))
            assert res[nx] < 10.0 * g.spacings[0] ** 2 * g.volume
        assert res[64] / res[128] > 2.5

    def test_nonpositive_v(self):
        g = _grid_1d(16)
        u = Field.constant(g, 1.0)
        v = Field.constant(g, 1.0)
        v.values[5] = 0.0
        with pytest.raises(NonpositiveV):
            cl.elliptic_identity_residual(u, v, 1.0, 1.0)


class TestDiscreteCalculus:
    def test_laplacian_matrix_matches_apply(self):
        for g in (_grid_1d(16), _grid_2d(8, 12, lengths=(1.0, 2.0))):
            rng = np.random.default_rng(5)
            u = rng.normal(size=g.shape)
            via_matrix = (g.laplacian_matrix @ u.ravel()).reshape(g.shape)
            assert laplacian_apply(u, g) == pytest.approx(via_matrix)

    def test_divergence_telescopes(self):
        g = _grid_2d(12, 10)
        rng = np.random.default_rng(1)
        u = rng.normal(size=g.shape)
        assert abs(laplacian_apply(u, g).sum()) < 1e-11

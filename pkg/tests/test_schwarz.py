import numpy as np
import pytest
import scipy.sparse as sps

from algschwarz import krylov
from algschwarz.coarse import theoretical_bound
from algschwarz.problems import heterogeneous2d, laplace1d, laplace2d
from algschwarz.schwarz import (
    HierarchyConfig,
    HierarchyError,
    NestedCoarseSolve,
    NotSPDError,
    apply_one_level,
    apply_two_level,
    build_hierarchy,
)
from algschwarz.sparse import CsrMatrix


def hierarchy(a, **kw):
    return build_hierarchy(a, HierarchyConfig(**kw))


def one_level_oracle(level, kind):
    A = level.matrix.toarray()
    n = A.shape[0]
    M = np.zeros((n, n))
    for i in range(level.layout.n_subdomains):
        idx = level.layout.overlapping(i)
        inv = np.linalg.inv(A[np.ix_(idx, idx)])
        if kind == "ras":
            ni = level.layout.interiors[i].size
            inv[ni:] = 0.0
        M[np.ix_(idx, idx)] += inv
    return M


def coarse_oracle(level):
    R0 = level.coarse.R0.toarray()
    A = level.matrix.toarray()
    return R0.T @ np.linalg.inv(R0 @ A @ R0.T) @ R0


class TestConfig:
    def test_rejects_bad_values(self):
        for kw in ({"variant": "bogus"}, {"levels": 0}, {"tau": 0}, {"subdomains": []}, {"subdomains": [0]}):
            with pytest.raises(ValueError):
                HierarchyConfig(**kw)

    def test_subdomain_extrapolation(self):
        cfg = HierarchyConfig(subdomains=[16])
        assert [cfg.subdomains_at(d) for d in range(4)] == [16, 4, 1, 1]
        cfg = HierarchyConfig(subdomains=[64, 8])
        assert [cfg.subdomains_at(d) for d in range(3)] == [64, 8, 2]


class TestOneLevel:
    @pytest.mark.parametrize("kind", ["ras", "asm"])
    def test_identity(self, kind, rng):
        lvl = hierarchy(CsrMatrix.identity(10), levels=1, subdomains=[3], variant=kind)
        r = rng.standard_normal(10)
        assert np.array_equal(lvl(r), r)

    @pytest.mark.parametrize("kind", ["ras", "asm"])
    def test_diagonal(self, kind):
        a = CsrMatrix.from_dense(np.diag([1.0, 2.0, 3.0, 4.0]))
        lvl = hierarchy(a, levels=1, subdomains=[2], variant=kind)
        np.testing.assert_allclose(lvl(np.ones(4)), [1, 1 / 2, 1 / 3, 1 / 4], rtol=1e-15)

    @pytest.mark.parametrize("kind", ["ras", "asm"])
    def test_dense_oracle(self, kind):
        lvl = hierarchy(laplace1d(8), levels=1, subdomains=[2], variant=kind)
        M = krylov.dense_operator(lvl, 8)
        np.testing.assert_allclose(M, one_level_oracle(lvl, kind), atol=1e-12)

    def test_block_diagonal_exact(self, rng):
        a = CsrMatrix.from_scipy(sps.block_diag([laplace2d(5).to_scipy(), 3 * laplace1d(9).to_scipy()]).tocsr())
        lvl = hierarchy(a, levels=1, subdomains=[2], variant="asm")
        assert all(b.size == 0 for b in lvl.layout.boundaries)
        for _ in range(5):
            x = rng.standard_normal(a.n_rows)
            np.testing.assert_allclose(lvl(a @ x), x, rtol=0, atol=1e-12 * np.abs(x).max())

    def test_unknown_kind(self):
        lvl = hierarchy(laplace1d(8), levels=1, subdomains=[2])
        with pytest.raises(ValueError):
            apply_one_level(lvl, np.ones(8), "jacobi")

    def test_levels_one_has_no_coarse(self):
        lvl = hierarchy(laplace1d(32), levels=1, subdomains=[4], variant="two-deflated")
        assert lvl.variant == "ras" and lvl.coarse is None and lvl.next_level is None
        lvl = hierarchy(laplace1d(32), levels=1, subdomains=[4], variant="two-additive")
        assert lvl.variant == "asm"


@pytest.fixture(scope="module")
def small():
    a = heterogeneous2d(12, jump=1e3)
    return {v: hierarchy(a, subdomains=[4], variant=v) for v in ("two-additive", "two-deflated")}


class TestTwoLevel:
    def test_additive_oracle(self, small):
        lvl = small["two-additive"]
        M = krylov.dense_operator(lvl, lvl.n)
        oracle = coarse_oracle(lvl) + one_level_oracle(lvl, "asm")
        assert np.abs(M - oracle).max() <= 1e-10 * np.abs(oracle).max()

    def test_deflated_oracle(self, small):
        lvl = small["two-deflated"]
        A = lvl.matrix.toarray()
        Q = coarse_oracle(lvl)
        oracle = Q + one_level_oracle(lvl, "ras") @ (np.eye(lvl.n) - A @ Q)
        M = krylov.dense_operator(lvl, lvl.n)
        assert np.abs(M - oracle).max() <= 1e-10 * np.abs(oracle).max()

    def test_deflated_residual_is_coarse_orthogonal(self, small, rng):
        lvl = small["two-deflated"]
        r = rng.standard_normal(lvl.n)
        R0 = lvl.coarse.R0
        d = r - lvl.matrix.to_scipy() @ lvl.coarse.correction(r)
        assert np.abs(R0 @ d).max() <= 1e-10 * np.abs(R0 @ r).max()

    def test_additive_symmetric(self, rng):
        lvl = hierarchy(laplace2d(16), subdomains=[4], variant="two-additive")
        for _ in range(10):
            u, v = rng.standard_normal((2, lvl.n))
            assert abs(lvl(u) @ v - u @ lvl(v)) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_degradation_identity(self, rng):
        a = CsrMatrix.identity(20)
        for variant, one in (("two-additive", "asm"), ("two-deflated", "ras")):
            lvl = hierarchy(a, subdomains=[4], tau=0.5, variant=variant)
            assert lvl.n_coarse == 0
            r = rng.standard_normal(20)
            assert np.array_equal(apply_two_level(lvl, r), apply_one_level(lvl, r, one))

    def test_spectral_bound(self):
        a = laplace2d(20)
        lvl = hierarchy(a, subdomains=[4], tau=10, variant="two-additive")
        _, _, kappa = krylov.estimate_condition(a, lvl, a.n_rows)
        assert kappa <= theoretical_bound(lvl.coloring.n_colors, 4, 10)
        asm = hierarchy(a, levels=1, subdomains=[4], variant="asm")
        assert kappa < krylov.estimate_condition(a, asm, a.n_rows)[2]

    def test_describe(self):
        lvl = hierarchy(laplace2d(12), subdomains=[4])
        (d,) = lvl.describe()["levels"]
        assert d["level"] == 1 and d["n"] == 144 and d["subdomains"] == 4
        assert d["coarse_solve"] == "direct" and d["n_C"] == lvl.n_coarse > 0
        assert d["grid_complexity"] == pytest.approx((144 + lvl.n_coarse) / 144)


class TestMultilevel:
    def test_three_levels_shrink(self):
        lvl = hierarchy(laplace1d(1024), levels=3, subdomains=[16, 4])
        # three matrices: fine, first coarse (a Schwarz level), second coarse
        levels = lvl.levels()
        sizes = [x.n for x in levels] + [levels[-1].n_coarse]
        assert len(levels) == 2 and sizes[0] > sizes[1] > sizes[2] > 0
        assert isinstance(lvl.coarse_solve, NestedCoarseSolve)
        assert lvl.needs_flexible and not lvl.next_level.needs_flexible
        assert lvl.next_level.matrix.symmetric

    def test_auto_recursion(self):
        lvl = hierarchy(laplace2d(24), levels=None, subdomains=[16, 4], direct_threshold=50)
        assert len(lvl.levels()) >= 2
        auto = hierarchy(laplace2d(24), levels=None, subdomains=[16, 4])
        assert len(auto.levels()) == 1

    def test_direct_threshold_warning(self):
        with pytest.warns(RuntimeWarning, match="exceeds threshold"):
            hierarchy(laplace2d(16), levels=2, subdomains=[8], direct_threshold=10)

    def test_nested_matches_exact_coarse(self):
        a = laplace2d(24)
        b = np.random.default_rng(42).uniform(-1, 1, a.n_rows)
        two = hierarchy(a, levels=2, subdomains=[8, 2])
        _, r2 = krylov.gmres(a, two, b, krylov.SolveConfig(rtol=1e-8))
        three = hierarchy(a, levels=3, subdomains=[8, 2], inner_rtol=1e-12)
        x, r3 = krylov.fgmres(a, three, b, krylov.SolveConfig(method="fgmres", rtol=1e-8))
        assert r2.converged and r3.converged
        assert r3.iterations <= r2.iterations + 2
        assert r3.inner_iterations and r3.average_inner <= 30
        assert np.linalg.norm(b - a @ x) <= 1e-8 * np.linalg.norm(b)


class TestErrors:
    def test_unsymmetric_flag(self):
        m = laplace1d(6).toarray()
        m[0, 1] = -0.5
        with pytest.raises(HierarchyError, match="symmetric"):
            build_hierarchy(CsrMatrix.from_dense(m))

    def test_not_spd(self):
        m = laplace1d(12).toarray()
        m[3, 3] = -2.0
        with pytest.raises(NotSPDError, match="subdomain"):
            hierarchy(CsrMatrix.from_dense(m), subdomains=[2])

    def test_deterministic(self, rng):
        a = laplace2d(14)
        r = rng.standard_normal(a.n_rows)
        x = hierarchy(a, subdomains=[4])(r)
        y = hierarchy(a, subdomains=[4])(r)
        assert np.array_equal(x, y)

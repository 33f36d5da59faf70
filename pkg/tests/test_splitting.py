import csv

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from algschwarz.partition import build_layout
from algschwarz.problems import heterogeneous2d, laplace1d, laplace2d
from algschwarz.sparse import AdjacencyGraph, CsrMatrix, extract_submatrix
from algschwarz.splitting import (
    EPS,
    ClosureError,
    SingularSplittingError,
    SqrtSplitting,
    apply_sqrt_inverse,
    build_block_row,
    build_splitting,
    build_splittings,
    embed,
    quadratic_forms,
    schur_complement,
    schur_splitting,
    sqrt_splitting,
    stable_schur,
    write_diagnostics,
)
from algschwarz.verify import sqrt_allowance, sqrt_residual
from conftest import layout_for


def random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class TestBlockRow:
    def test_identity(self):
        a = CsrMatrix.identity(8)
        lay = layout_for(a, 2)
        for i in range(2):
            blk = build_block_row(a, lay, i)
            np.testing.assert_array_equal(blk.X, np.eye(lay.interiors[i].size))
            assert blk.n_local == blk.n_extended == lay.interiors[i].size

    def test_tridiag_shape(self):
        a = laplace1d(6)
        lay = layout_for(a, 2)
        blk = build_block_row(a, lay, 0)
        assert blk.X.shape == (4, 5)
        np.testing.assert_array_equal(blk.X, a.toarray()[np.ix_([0, 1, 2, 3], [0, 1, 2, 3, 4])])

    def test_closure_violation(self):
        a = laplace1d(6)
        lay = layout_for(a, 2)
        m = a.toarray()
        m[0, 5] = m[5, 0] = -0.5
        with pytest.raises(ClosureError, match="outside the extended set"):
            build_block_row(CsrMatrix.from_dense(m), lay, 0)


class TestSqrtSplitting:
    def test_identity(self):
        S = sqrt_splitting(np.eye(2))
        np.testing.assert_array_equal(S.sigma, [1, 1])
        np.testing.assert_allclose(S.dense(), (1 + EPS) * np.eye(2), rtol=0, atol=1e-16)

    def test_diagonal(self):
        S = sqrt_splitting(np.array([[2.0, 0, 0], [0, 1.0, 0]]))
        np.testing.assert_array_equal(S.sigma, [2, 1])
        assert S.shift == 2 * EPS
        np.testing.assert_allclose(np.diag(S.dense()), [2 + 2 * EPS, 1 + 2 * EPS, 2 * EPS], rtol=1e-15, atol=0)
        assert np.abs(S.dense() - np.diag(np.diag(S.dense()))).max() == 0.0

    def test_random_square_root_consistency(self, rng):
        X = rng.standard_normal((4, 6))
        S = sqrt_splitting(X)
        assert sqrt_residual(X, S) <= 10.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 80), st.integers(0, 2**32 - 1))
    def test_factor_invariants(self, m, n, seed):
        X = np.random.default_rng(seed).standard_normal((m, n))
        S = sqrt_splitting(X)
        assert np.all(np.diff(S.sigma) <= 0) and np.all(S.sigma >= 0)
        assert np.abs(S.V.T @ S.V - np.eye(S.V.shape[1])).max() <= 1e-12
        assert sqrt_residual(X, S) <= sqrt_allowance(n)
        assert np.all(S.sigma + S.shift > 0)  # SPD in factored form
        assert sla.eigvalsh(S.dense())[0] >= -1e-10 * S.sigma1

    def test_zero_row_block(self):
        S = sqrt_splitting(np.zeros((2, 3)))
        assert S.sigma1 == 0.0 and S.shift == 0.0
        with pytest.raises(SingularSplittingError):
            apply_sqrt_inverse(S, np.ones(3))


class TestInverse:
    def test_identity(self):
        S = sqrt_splitting(np.eye(2))
        np.testing.assert_allclose(S.solve(np.array([3.0, 4.0])), np.array([3.0, 4.0]) / (1 + EPS), rtol=1e-15)

    def test_null_direction(self):
        S = sqrt_splitting(np.array([[2.0, 0, 0], [0, 1.0, 0]]))
        got = apply_sqrt_inverse(S, np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(got, [0, 0, 1 / (2 * EPS)], rtol=1e-12, atol=0)
        assert np.all(np.isfinite(got))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sqrt_splitting(np.eye(3)).solve(np.ones(2))

    def test_block_of_vectors(self, rng):
        S = sqrt_splitting(rng.standard_normal((5, 9)))
        V = rng.standard_normal((9, 3))
        cols = np.column_stack([S.solve(v) for v in V.T])
        np.testing.assert_allclose(S.solve(V), cols, rtol=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 64), st.integers(1, 128), st.integers(0, 2**32 - 1))
    def test_round_trip_backward_error(self, m, n, seed):
        """``F(F^{-1} v) = v`` up to rounding of the operator's scale."""
        rng = np.random.default_rng(seed)
        S = sqrt_splitting(rng.standard_normal((m, n)))
        v = rng.standard_normal(n)
        y = S.solve(v)
        err = np.linalg.norm(S.forward(y) - v)
        assert err <= 1e-12 * (S.sigma1 + S.shift) * np.linalg.norm(y)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 64), st.integers(0, 2**32 - 1))
    def test_round_trip_full_rank(self, n, seed):
        """Full-rank rows: the plain identity holds to 1e-12."""
        rng = np.random.default_rng(seed)
        u = random_orthogonal(n, rng)
        X = (u * rng.uniform(1.0, 10.0, n)) @ random_orthogonal(n, rng)
        S = sqrt_splitting(np.vstack([X, rng.standard_normal((int(rng.integers(0, 5)), n))]))
        v = rng.standard_normal(n)
        assert np.linalg.norm(S.forward(S.solve(v)) - v) <= 1e-12 * np.linalg.norm(v)
        assert np.linalg.norm(S.solve(S.forward(v)) - v) <= 1e-12 * np.linalg.norm(v)


class TestSchur:
    def test_hand_example(self):
        assert schur_complement(np.array([[2.0, 1.0], [1.0, 2.0]]), 1)[0, 0] == 1.5

    def test_stable_matches_hand_example(self):
        V = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
        S = SqrtSplitting(V=V, sigma=np.array([3.0, 1.0]), sigma1=3.0)
        np.testing.assert_allclose(S.dense(), [[2, 1], [1, 2]], atol=1e-14)
        assert abs(stable_schur(S, np.array([0]))[0, 0] - 1.5) <= 1e-14

    @pytest.mark.parametrize("seed", range(5))
    def test_stable_matches_cholesky_when_well_conditioned(self, seed):
        rng = np.random.default_rng(seed)
        n = 9
        sigma = np.sort(rng.uniform(1.0, 2.0, n))[::-1]
        S = SqrtSplitting(V=random_orthogonal(n, rng), sigma=sigma, sigma1=float(sigma[0]))
        keep = np.sort(rng.choice(n, 4, replace=False))
        rest = np.setdiff1d(np.arange(n), keep)
        perm = np.concatenate([keep, rest])
        oracle = schur_complement(S.dense()[np.ix_(perm, perm)], keep.size)
        np.testing.assert_allclose(stable_schur(S, keep), oracle, rtol=0, atol=1e-13)

    def test_keep_everything(self, rng):
        S = sqrt_splitting(rng.standard_normal((4, 6)))
        np.testing.assert_allclose(stable_schur(S, np.arange(6)), S.dense(), atol=1e-14)

    def test_no_halo_is_restriction(self):
        a = CsrMatrix.from_dense(np.diag(np.arange(1.0, 7.0)))
        lay = layout_for(a, 2)
        for i in range(2):
            sp = build_splitting(a, lay, i)
            np.testing.assert_allclose(sp.At, sp.sqrt.dense(), rtol=0, atol=4 * EPS * sp.sqrt.sigma1)
            np.testing.assert_allclose(np.diag(sp.At), np.diag(extract_submatrix(a, lay.interiors[i], lay.interiors[i])), rtol=1e-14)

    def test_isolated_subdomain_recovers_block(self):
        a = CsrMatrix.from_scipy(sps.block_diag([laplace1d(7).to_scipy(), laplace1d(5).to_scipy()]).tocsr())
        g = AdjacencyGraph.from_matrix(a)
        lay = build_layout(g, [np.arange(7), np.arange(7, 12)])
        assert all(b.size == 0 for b in lay.boundaries)
        for i, sp in enumerate(build_splittings(a, lay)):
            idx = lay.overlapping(i)
            A_ii = extract_submatrix(a, idx, idx)
            assert np.abs(sp.At - A_ii).max() <= 1e-12 * np.abs(A_ii).max()

    def test_n_local_range(self, rng):
        with pytest.raises(ValueError):
            schur_splitting(sqrt_splitting(rng.standard_normal((2, 3))), 0)


def splitting_cases():
    yield "tridiag6", laplace1d(6), 2
    yield "tridiag64", laplace1d(64), 4
    yield "lap2d_12", laplace2d(12), 4
    yield "lap2d_16", laplace2d(16, 10), 7
    yield "hetero_16", heterogeneous2d(16, jump=1e6), 4


@pytest.fixture(scope="module", params=list(splitting_cases()), ids=lambda c: c[0])
def case(request):
    _, a, N = request.param
    lay = layout_for(a, N)
    return a, lay, build_splittings(a, lay)


class TestSplittingInvariants:
    def test_hand_tridiag_quadratic_forms(self, rng):
        a = laplace1d(6)
        lay = layout_for(a, 2)
        sp = build_splitting(a, lay, 0)
        At1 = embed(lay, 0, sp.At)
        A = a.toarray()
        for _ in range(100):
            u = rng.standard_normal(6)
            q = u @ At1 @ u
            assert -1e-12 <= q <= u @ A @ u * (1 + 1e-12)

    def test_upper_bound_dense(self, case):
        a, lay, sps_ = case
        A = a.toarray()
        norm = np.linalg.norm(A, 2)
        for i, sp in enumerate(sps_):
            assert sla.eigvalsh(A - embed(lay, i, sp.At))[0] >= -1e-8 * norm

    def test_psd(self, case):
        _, _, sps_ = case
        for sp in sps_:
            assert sla.eigvalsh(sp.At)[0] >= -1e-10 * np.linalg.norm(sp.At, 2)

    def test_symmetric_and_local(self, case):
        a, lay, sps_ = case
        for i, sp in enumerate(sps_):
            assert np.array_equal(sp.At, sp.At.T)
            full = embed(lay, i, sp.At)
            outside = np.setdiff1d(np.arange(a.n_rows), lay.overlapping(i))
            assert not full[outside].any() and not full[:, outside].any()

    def test_sum_bound(self, case, rng):
        a, lay, sps_ = case
        U = rng.standard_normal((a.n_rows, 100))
        s = quadratic_forms(lay, sps_, U).sum(axis=0)
        q = np.einsum("ij,ij->j", U, a.to_scipy() @ U)
        N = lay.n_subdomains
        assert np.all(s >= -1e-10 * q)
        assert np.all(s <= N * q * (1 + 1e-10))

    def test_square_root_consistency(self, case):
        a, lay, sps_ = case
        for i, sp in enumerate(sps_):
            X = build_block_row(a, lay, i).X
            assert sqrt_residual(X, sp.sqrt) <= sqrt_allowance(X.shape[1])

    def test_deterministic(self, case):
        a, lay, sps_ = case
        again = build_splittings(a, lay)
        assert all(np.array_equal(x.At, y.At) for x, y in zip(sps_, again))


def test_zero_block_row_warns():
    m = laplace1d(6).toarray()
    m[5] = 0.0
    m[:, 5] = 0.0
    a = CsrMatrix.from_dense(m)
    g = AdjacencyGraph.from_matrix(a)
    lay = build_layout(g, [np.arange(5), np.array([5])])
    with pytest.warns(RuntimeWarning, match="zero block row"):
        sp = build_splitting(a, lay, 1)
    assert sp.At.shape == (1, 1) and sp.At[0, 0] == 0.0


def test_diagnostics_csv(tmp_path):
    a = laplace2d(8)
    lay = layout_for(a, 4)
    p = tmp_path / "diag.csv"
    write_diagnostics(build_splittings(a, lay), p)
    rows = list(csv.DictReader(p.open()))
    assert [r["subdomain"] for r in rows] == ["1", "2", "3", "4"]
    assert set(rows[0]) == {"subdomain", "sigma1", "rank", "eigmin", "elapsed"}
    assert all(float(r["sigma1"]) > 0 and int(r["rank"]) > 0 for r in rows)

"""Local generalized eigenproblems and the assembled coarse space.

Each subdomain solves ``(D A_ii D) u = lambda At_ii u`` and keeps the
eigenvectors with ``lambda > 1/tau``.  The coarse interpolation stacks the
rows ``(D_i z)^T`` scattered to ``Omega_i``; ``C_00 = R_0 A R_0^T``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .partition import PartitionOfUnity, SubdomainLayout
from .sparse import CsrMatrix, extract_submatrix
from .splitting import EPS, LocalSplitting, schur_complement, stable_schur

log = logging.getLogger(__name__)

DEFAULT_NEV_MAX = 20


class EigenSolveError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SubdomainEigenBasis:
    """Computed eigenpairs in descending order, ``n_selected`` of them kept.

    ``truncated`` is True when the cap ``p_max`` cut off eigenvalues that
    also exceed ``1/tau``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, unit 2-norm
    n_selected: int
    threshold: float
    shift: float
    truncated: bool = False

    @property
    def selected(self) -> np.ndarray:
        return self.eigenvectors[:, : self.n_selected]


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    if vecs.size == 0:
        return vecs
    pivot = np.argmax(np.abs(vecs), axis=0)
    sign = np.where(vecs[pivot, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    return vecs * sign


def _reduced_rhs(At, keep: np.ndarray) -> tuple[np.ndarray, float]:
    """Schur complement of the splitting onto the positions ``keep`` and the
    shift ``s`` it carries (a lower bound on its spectrum)."""
    if isinstance(At, LocalSplitting):
        return stable_schur(At.sqrt, keep), At.sqrt.shift
    B = np.asarray(At, dtype=np.float64)
    s = EPS * max(np.abs(B).max(), np.finfo(float).tiny)
    rest = np.setdiff1d(np.arange(B.shape[0]), keep)
    if rest.size == 0:
        return B.copy(), s
    perm = np.concatenate([keep, rest])
    return schur_complement(B[np.ix_(perm, perm)], keep.size), s


def solve_gevp(
    A_ii: np.ndarray,
    d: np.ndarray,
    At: LocalSplitting | np.ndarray,
    tau: float,
    p_max: int | None = DEFAULT_NEV_MAX,
) -> SubdomainEigenBasis:
    """Leading eigenpairs of the pencil ``(D A_ii D, At)``.

    Rows with zero weight make ``D A_ii D`` singular there, and the nonzero
    spectrum coincides with that of ``(L_K, S_K)``: ``L_K`` the block on the
    weighted rows ``K`` (SPD) and ``S_K`` the Schur complement of the
    splitting onto ``K``.  Since ``At`` is nearly singular we solve the
    reversed problem ``S_K v = mu L_K v`` and return ``lambda = 1/mu``, which
    keeps the backward error at rounding level even for huge ``lambda``.
    The zero-weight part of each eigenvector solves
    ``At_ZK u_K + At_ZZ u_Z = 0`` in the least-squares sense.

    Only the leading ``p_max + 1`` pairs are computed when a cap is given
    (the extra pair detects truncation).  Selection keeps ``lambda > 1/tau``
    strictly; ties keep the solver's index order.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    A_ii = np.asarray(A_ii, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    n = A_ii.shape[0]
    keep = np.flatnonzero(d != 0.0)
    zero = np.flatnonzero(d == 0.0)
    if keep.size == 0:
        return SubdomainEigenBasis(np.zeros(0), np.zeros((n, 0)), 0, 1.0 / tau, 0.0)
    dk = d[keep]
    L = (dk[:, None] * A_ii[np.ix_(keep, keep)]) * dk[None, :]
    L = 0.5 * (L + L.T)
    S, s = _reduced_rhs(At, keep)
    m = keep.size
    k = m if p_max is None else min(m, p_max + 1)
    try:
        mu, V = sla.eigh(S, L, subset_by_index=[0, k - 1], check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolveError(f"generalized eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(mu)):
        raise EigenSolveError("non-finite eigenvalues")
    # Rayleigh quotients sharpen mu (exact on decoupled pencils, which keeps
    # the strict threshold test honest); the splitting is bounded below by s,
    # so mu >= s / ||L|| up to rounding
    mu = np.einsum("ij,ij->j", V, S @ V) / np.einsum("ij,ij->j", V, L @ V)
    mu = np.maximum(mu, s / np.linalg.norm(L, 2))
    vals = 1.0 / mu
    order = np.argsort(-vals, kind="stable")
    vals, V = vals[order], V[:, order]
    vecs = np.zeros((n, vals.size))
    vecs[keep] = V
    if zero.size:
        B = At.At if isinstance(At, LocalSplitting) else np.asarray(At, dtype=np.float64)
        rhs = -B[np.ix_(zero, keep)] @ V
        vecs[zero] = sla.lstsq(B[np.ix_(zero, zero)], rhs, check_finite=False)[0]
    vecs = _sign_fix(vecs / np.linalg.norm(vecs, axis=0))
    thr = 1.0 / tau
    eligible = int(np.count_nonzero(vals > thr))
    cap = m if p_max is None else p_max
    n_sel = min(eligible, cap)
    return SubdomainEigenBasis(
        eigenvalues=vals,
        eigenvectors=vecs,
        n_selected=n_sel,
        threshold=thr,
        shift=0.0,
        truncated=eligible > cap,
    )


def pencil_residuals(A_ii, d, At, basis: SubdomainEigenBasis) -> np.ndarray:
    """Relative residuals ``||L u - lambda B u|| / ((||L|| + |lambda| ||B||) ||u||)``
    with ``B`` the (shifted) splitting actually factorised."""
    d = np.asarray(d, dtype=np.float64)
    L = (d[:, None] * A_ii) * d[None, :]
    B = (At.At if isinstance(At, LocalSplitting) else At) + basis.shift * np.eye(L.shape[0])
    U = basis.eigenvectors
    R = L @ U - (B @ U) * basis.eigenvalues
    nl, nb = np.linalg.norm(L, 2), np.linalg.norm(B, 2)
    return np.linalg.norm(R, axis=0) / ((nl + np.abs(basis.eigenvalues) * nb) * np.linalg.norm(U, axis=0))


def reselect(basis: SubdomainEigenBasis, tau: float, p_max: int | None) -> int:
    """Selected count for another ``tau`` from the stored spectrum."""
    eligible = int(np.count_nonzero(basis.eigenvalues > 1.0 / tau))
    return eligible if p_max is None else min(eligible, p_max)


@dataclass(eq=False)
class CoarseSpace:
    """``R_0`` (``n_C x n`` sparse) and the Cholesky-factored ``C_00``."""

    R0: sps.csr_matrix
    C00: np.ndarray
    blocks: list[tuple[int, int]]  # column range of R_0^T per subdomain
    factor: tuple | None = None
    dropped: int = 0
    summary: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.R0.shape[0]

    def solve(self, y: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self.factor, y, check_finite=False)

    def correction(self, r: np.ndarray) -> np.ndarray:
        """``R_0^T C_00^{-1} R_0 r``."""
        return self.R0.T @ self.solve(self.R0 @ r)


def _coarse_rows(layout, pou, bases):
    rows, cols, vals, blocks = [], [], [], []
    offset = 0
    for i, basis in enumerate(bases):
        Z = basis.selected
        p = Z.shape[1]
        idx = layout.overlapping(i)
        DZ = pou.weights[i][:, None] * Z
        nz = DZ != 0.0
        r_local, c_local = np.nonzero(nz.T)  # row of R_0 = column of Z
        rows.append(offset + r_local)
        cols.append(idx[c_local])
        vals.append(DZ.T[nz.T])
        blocks.append((offset, offset + p))
        offset += p
    if offset == 0:
        return sps.csr_matrix((0, layout.n)), blocks
    R0 = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(offset, layout.n)
    )
    R0.sort_indices()
    return R0, blocks


def assemble_coarse(
    layout: SubdomainLayout, pou: PartitionOfUnity, bases: list[SubdomainEigenBasis], a: CsrMatrix
) -> CoarseSpace:
    R0, blocks = _coarse_rows(layout, pou, bases)
    if R0.shape[0] == 0:
        return CoarseSpace(R0, np.zeros((0, 0)), blocks, factor=None)
    A = a.to_scipy()
    C00 = (R0 @ (A @ R0.T)).toarray()
    C00 = 0.5 * (C00 + C00.T)
    # a pivot that lost all but n eps of its diagonal means a dependent vector;
    # the test is relative per entry so that coefficient jumps do not trip it
    diag = np.diag(C00).copy()
    tol = C00.shape[0] * EPS
    try:
        factor = sla.cho_factor(C00, lower=True, check_finite=False)
        if np.all(diag > 0) and np.all(np.diag(factor[0]) ** 2 > tol * diag):
            return CoarseSpace(R0, C00, blocks, factor=factor)
    except np.linalg.LinAlgError:
        pass
    # rank-deficient R_0: keep the columns a pivoted Cholesky of the
    # diagonally scaled matrix accepts
    scale = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
    _, piv, rank, _ = sla.lapack.dpstrf(C00 * scale[:, None] * scale[None, :], lower=1, tol=tol)
    keep = np.sort(piv[:rank] - 1)
    dropped = C00.shape[0] - keep.size
    warnings.warn(f"coarse operator rank deficient: dropping {dropped} of {C00.shape[0]} vectors", RuntimeWarning, stacklevel=2)
    R0 = R0[keep]
    C00 = C00[np.ix_(keep, keep)]
    new_blocks = []
    for lo, hi in blocks:
        n_lo = int(np.count_nonzero(keep < lo))
        n_hi = int(np.count_nonzero(keep < hi))
        new_blocks.append((n_lo, n_hi))
    factor = sla.cho_factor(C00, lower=True, check_finite=False)
    return CoarseSpace(R0.tocsr(), C00, new_blocks, factor=factor, dropped=dropped)


def build_coarse_space(
    a: CsrMatrix,
    layout: SubdomainLayout,
    pou: PartitionOfUnity,
    splittings: list[LocalSplitting],
    tau: float,
    p_max: int | None = DEFAULT_NEV_MAX,
) -> tuple[CoarseSpace, list[SubdomainEigenBasis]]:
    bases = []
    for i, sp in enumerate(splittings):
        idx = layout.overlapping(i)
        A_ii = extract_submatrix(a, idx, idx)
        bases.append(solve_gevp(A_ii, pou.weights[i], sp, tau, p_max))
    cs = assemble_coarse(layout, pou, bases, a)
    cs.summary = coarse_summary(a.n_rows, bases, cs)
    return cs, bases


def coarse_summary(n: int, bases: list[SubdomainEigenBasis], cs: CoarseSpace) -> dict:
    per = []
    for i, b in enumerate(bases):
        lam = b.eigenvalues
        per.append(
            {
                "subdomain": i + 1,
                "p": int(cs.blocks[i][1] - cs.blocks[i][0]),
                "lambda_max": float(lam[0]) if lam.size else None,
                "lambda_min_computed": float(lam[-1]) if lam.size else None,
                "truncated": bool(b.truncated),
            }
        )
    return {
        "n_C": int(cs.size),
        "grid_complexity": (n + cs.size) / n,
        "dropped": int(cs.dropped),
        "subdomains": per,
    }


def theoretical_bound(k_c: int, k_m: float, tau: float) -> float:
    """Upper bound on the condition number of the two-level additive operator."""
    if tau == float("inf"):
        return 2.0 * (k_c + 1)
    return (k_c + 1) * (2.0 + (2 * k_c + 1) * k_m / tau)


def estimate_multiplicity(a: CsrMatrix, layout, splittings, samples: int = 100, seed: int = 0) -> float:
    """Sampled lower estimate of ``max_u sum_i u^T At_i u / u^T A u``."""
    from .splitting import quadratic_forms

    rng = np.random.default_rng(seed)
    U = rng.standard_normal((a.n_rows, samples))
    num = quadratic_forms(layout, splittings, U).sum(axis=0)
    den = np.einsum("ij,ij->j", U, a.to_scipy() @ U)
    return float(np.max(num / den))

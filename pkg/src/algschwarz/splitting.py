"""Local SPSD splittings of A built from the SVD of each local block row.

For subdomain ``i`` the block row ``X = A(Omega_i, Omega~_i)`` yields the
shifted square root ``sqrt(X^T X) + s I`` (``s = sigma_1 * eps``) on the
extended set.  Eliminating the halo block gives ``At_ii`` on the overlapping
set, with ``0 <= u^T R_i^T At_ii R_i u <= u^T A u`` up to the shift.
"""

from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .partition import SubdomainLayout
from .sparse import CsrMatrix, dense_svd, extract_submatrix

log = logging.getLogger(__name__)

EPS = float(np.finfo(np.float64).eps)


class ClosureError(RuntimeError):
    """The layout does not match the pattern of A."""


class SingularSplittingError(ZeroDivisionError):
    """The block row is identically zero, so the shifted root is singular."""


class SplittingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LocalBlockRow:
    X: np.ndarray  # n_i x ntilde_i
    index: int
    n_local: int
    n_extended: int


def build_block_row(a: CsrMatrix, layout: SubdomainLayout, i: int) -> LocalBlockRow:
    """Extract ``A(Omega_i, Omega~_i)`` densely and check that the rest of
    those rows vanishes."""
    omega = layout.overlapping(i)
    ext = layout.extended(i)
    rows = a.to_scipy()[omega]
    outside = np.ones(a.n_cols, dtype=bool)
    outside[ext] = False
    leak = np.abs(rows.data[outside[rows.indices]])
    if leak.size and leak.max() > 0.0:
        raise ClosureError(
            f"subdomain {i}: rows of Omega_i reach outside the extended set "
            f"(max |a| = {leak.max():.3e}); layout inconsistent with the matrix pattern"
        )
    X = extract_submatrix(a, omega, ext)
    return LocalBlockRow(X, i, omega.size, ext.size)


@dataclass(frozen=True, eq=False)
class SqrtSplitting:
    """``V (S + s I) V^T + s (I - V V^T)`` with ``s = sigma_1 * eps``."""

    V: np.ndarray  # ntilde x r, orthonormal columns
    sigma: np.ndarray  # r singular values, non-increasing
    sigma1: float
    eps: float = EPS

    @property
    def shift(self) -> float:
        return self.sigma1 * self.eps

    @property
    def size(self) -> int:
        return self.V.shape[0]

    def forward(self, v: np.ndarray) -> np.ndarray:
        c = self.V.T @ v
        s = self.shift
        scale = (self.sigma + s)[:, None] if c.ndim == 2 else self.sigma + s
        out = self.V @ (scale * c)
        if not self.full_rank:
            out += s * (v - self.V @ c)
        return out

    def solve(self, v: np.ndarray) -> np.ndarray:
        return apply_sqrt_inverse(self, v)

    def dense(self) -> np.ndarray:
        """Materialise the operator (test and diagnostics use)."""
        s = self.shift
        m = (self.V * self.sigma) @ self.V.T
        m = 0.5 * (m + m.T)
        m[np.diag_indices_from(m)] += s
        return m

    @property
    def full_rank(self) -> bool:
        """V is square, so the complement ``I - V V^T`` vanishes.  Forming it
        anyway would turn rounding into O(1/s) noise."""
        return self.V.shape[1] == self.V.shape[0]

    def rank_estimate(self) -> int:
        if self.sigma1 == 0.0:
            return 0
        tol = self.sigma1 * self.eps * max(self.V.shape)
        return int(np.count_nonzero(self.sigma > tol))


def sqrt_splitting(block: LocalBlockRow | np.ndarray) -> SqrtSplitting:
    X = block.X if isinstance(block, LocalBlockRow) else np.asarray(block, dtype=np.float64)
    _, s, v = dense_svd(X)
    sigma1 = float(s[0]) if s.size else 0.0
    return SqrtSplitting(V=v, sigma=s, sigma1=sigma1)


def apply_sqrt_inverse(S: SqrtSplitting, v: np.ndarray) -> np.ndarray:
    """Apply the inverse of the shifted square root via its SVD factors."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != S.size:
        raise ValueError(f"vector length {v.shape[0]} does not match operator size {S.size}")
    if S.sigma1 == 0.0:
        raise SingularSplittingError("zero block row: shifted square root is singular")
    s = S.shift
    c = S.V.T @ v
    scale = 1.0 / (S.sigma + s)
    if c.ndim == 2:
        scale = scale[:, None]
    out = S.V @ (scale * c)
    if not S.full_rank:
        out += (v - S.V @ c) / s
    return out


def schur_complement(m: np.ndarray, n_keep: int) -> np.ndarray:
    """Dense Schur complement ``M11 - M12 M22^{-1} M21`` via Cholesky of M22.

    Straightforward elimination; accurate only when M22 is well conditioned.
    """
    m = np.asarray(m, dtype=np.float64)
    if n_keep == m.shape[0]:
        return m.copy()
    m11, m12, m22 = m[:n_keep, :n_keep], m[:n_keep, n_keep:], m[n_keep:, n_keep:]
    try:
        fac = sla.cho_factor(m22, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SplittingError(f"halo block is not SPD ({exc})") from exc
    out = m11 - m12 @ sla.cho_solve(fac, m12.T)
    return 0.5 * (out + out.T)


@dataclass(frozen=True, eq=False)
class LocalSplitting:
    At: np.ndarray  # n_i x n_i, symmetric PSD up to the shift
    sqrt: SqrtSplitting
    index: int = -1
    elapsed: float = 0.0

    def eigmin(self) -> float:
        return float(sla.eigvalsh(self.At, subset_by_index=[0, 0])[0])


def stable_schur(S: SqrtSplitting, keep: np.ndarray) -> np.ndarray:
    """Schur complement of the shifted square root onto positions ``keep``
    (indices into the extended ordering), eliminating all other positions.

    With ``B = V diag(sqrt(sigma))`` split into kept rows ``B1`` and
    eliminated rows ``B2 = P diag(theta) Q^T`` the complement equals
    ``s I + B1 Q diag(s / (theta^2 + s)) Q^T B1^T``.  The weights lie in
    (0, 1], so the near-singular eliminated block is never inverted.
    """
    keep = np.asarray(keep, dtype=np.int64)
    s = S.shift
    rest = np.setdiff1d(np.arange(S.size), keep, assume_unique=False)
    B = S.V * np.sqrt(S.sigma)
    B1 = B[keep]
    if rest.size == 0:
        out = B1 @ B1.T
    else:
        _, theta, qt = sla.svd(B[rest], full_matrices=True, lapack_driver="gesdd")
        th2 = np.zeros(B.shape[1])
        th2[: theta.size] = theta**2
        w = s / (th2 + s) if s > 0 else (th2 == 0).astype(float)
        C = B1 @ qt.T
        out = (C * w) @ C.T
    asym = np.max(np.abs(out - out.T)) if out.size else 0.0
    scale = np.max(np.abs(out)) if out.size else 0.0
    if scale > 0 and asym > 1e-10 * scale:
        raise SplittingError(f"Schur complement asymmetric beyond tolerance ({asym / scale:.2e})")
    out = 0.5 * (out + out.T)
    out[np.diag_indices_from(out)] += s
    return out


def schur_splitting(S: SqrtSplitting, n_local: int, index: int = -1) -> LocalSplitting:
    """Eliminate the halo block of the shifted square root, leaving the
    splitting on the overlapping set (the first ``n_local`` positions)."""
    t0 = time.perf_counter()
    if not 0 < n_local <= S.size:
        raise ValueError("n_local must lie in [1, ntilde]")
    At = stable_schur(S, np.arange(n_local))
    return LocalSplitting(At=At, sqrt=S, index=index, elapsed=time.perf_counter() - t0)


def build_splitting(a: CsrMatrix, layout: SubdomainLayout, i: int) -> LocalSplitting:
    t0 = time.perf_counter()
    block = build_block_row(a, layout, i)
    S = sqrt_splitting(block)
    if S.sigma1 == 0.0:
        warnings.warn(f"subdomain {i}: zero block row", RuntimeWarning, stacklevel=2)
    out = schur_splitting(S, block.n_local, index=i)
    return LocalSplitting(out.At, out.sqrt, i, time.perf_counter() - t0)


def build_splittings(a: CsrMatrix, layout: SubdomainLayout) -> list[LocalSplitting]:
    return [build_splitting(a, layout, i) for i in range(layout.n_subdomains)]


def embed(layout: SubdomainLayout, i: int, local: np.ndarray) -> np.ndarray:
    """Dense ``R_i^T local R_i`` (n x n); test/verification helper."""
    out = np.zeros((layout.n, layout.n))
    idx = layout.overlapping(i)
    out[np.ix_(idx, idx)] = local
    return out


def quadratic_forms(layout: SubdomainLayout, splittings, u: np.ndarray) -> np.ndarray:
    """``u^T At_i u`` for every subdomain; ``u`` may be a block of columns."""
    u = np.asarray(u, dtype=np.float64)
    vals = []
    for i, sp in enumerate(splittings):
        ui = u[layout.overlapping(i)]
        vals.append(np.einsum("i...,i...->...", ui, sp.At @ ui))
    return np.array(vals)


def diagnostics(splittings) -> list[dict]:
    rows = []
    for sp in splittings:
        rows.append(
            {
                "subdomain": sp.index,
                "sigma1": sp.sqrt.sigma1,
                "rank": sp.sqrt.rank_estimate(),
                "eigmin": sp.eigmin(),
                "elapsed": sp.elapsed,
            }
        )
    return rows


def write_diagnostics(splittings, path) -> None:
    rows = diagnostics(splittings)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["subdomain", "sigma1", "rank", "eigmin", "elapsed"])
        w.writeheader()
        for row in rows:
            w.writerow({**row, "subdomain": row["subdomain"] + 1})

"""Invariant checks on a matrix and its Schwarz hierarchy.

Every check returns a :class:`Check` with the measured quantity and the
threshold it was held to; failures are data, not exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg  # noqa: F401  (sps.linalg.eigsh)

from . import krylov
from .coarse import pencil_residuals, reselect, theoretical_bound
from .partition import SubdomainLayout, build_partition_of_unity
from .sparse import AdjacencyGraph, CsrMatrix, extract_submatrix
from .splitting import EPS, build_block_row

DENSE_LIMIT = 4096


@dataclass
class Check:
    name: str
    passed: bool
    measured: float | None = None
    threshold: float | None = None
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "measured": self.measured,
            "threshold": self.threshold,
            **({"detail": self.detail} if self.detail else {}),
        }


def check_symmetry(a: CsrMatrix) -> Check:
    m = a.to_scipy()
    diff = abs(m - m.T)
    measured = (diff.max() if diff.nnz else 0.0) / max(a.max_abs(), np.finfo(float).tiny)
    return Check("symmetry", bool(measured <= 1e-12), float(measured), 1e-12)


def check_spd_precheck(a: CsrMatrix, layout: SubdomainLayout) -> Check:
    """Positive diagonal and Cholesky of every subdomain block."""
    diag = a.diagonal()
    bad_diag = np.flatnonzero(diag <= 0)
    failed = []
    for i in range(layout.n_subdomains):
        idx = layout.overlapping(i)
        try:
            sla.cholesky(extract_submatrix(a, idx, idx), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            failed.append(i + 1)
    detail = {}
    if bad_diag.size:
        detail["nonpositive_diagonal"] = (bad_diag[:10] + 1).tolist()
    if failed:
        detail["cholesky_failed"] = failed
    return Check("spd_precheck", not bad_diag.size and not failed, float(diag.min()), 0.0, detail)


def _bfs_layer(adj: sps.csr_matrix, members: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[members] = True
    reach = (adj @ mask.astype(np.int64)) > 0
    return np.flatnonzero(reach & ~mask)


def check_layout(graph: AdjacencyGraph, layout: SubdomainLayout) -> Check:
    """Interiors partition the vertex set; boundary and halo sets match a
    one-step neighbourhood oracle."""
    n = layout.n
    count = np.zeros(n, dtype=np.int64)
    for it in layout.interiors:
        np.add.at(count, it, 1)
    partition_ok = bool(np.all(count == 1))
    adj = graph.to_scipy()
    wrong = []
    for i in range(layout.n_subdomains):
        gam = _bfs_layer(adj, layout.interiors[i])
        omega = np.concatenate([layout.interiors[i], gam])
        dlt = _bfs_layer(adj, omega)
        if not (np.array_equal(gam, layout.boundaries[i]) and np.array_equal(dlt, layout.halos[i])):
            wrong.append(i + 1)
    detail = {} if not wrong else {"mismatched_subdomains": wrong}
    return Check("layout", partition_ok and not wrong, float(np.abs(count - 1).max()), 0.0, detail)


def check_partition_of_unity(layout: SubdomainLayout, scheme: str, samples: int = 20, seed: int = 0) -> Check:
    pou = build_partition_of_unity(layout, scheme)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        u = rng.standard_normal(layout.n)
        worst = max(worst, float(np.max(np.abs(pou.apply(layout, u) - u)) / np.max(np.abs(u))))
    thr = 0.0 if scheme == "boolean" else 4 * EPS * layout.n_subdomains
    return Check(f"partition_of_unity[{scheme}]", worst <= thr, worst, thr)


def _eigmin_dense(m: np.ndarray) -> float:
    return float(sla.eigvalsh(m, subset_by_index=[0, 0], check_finite=False)[0])


def splitting_margins(a: CsrMatrix, layout: SubdomainLayout, splittings, samples: int = 500, seed: int = 0) -> dict:
    """Per-subdomain ``eigmin(A - At_i) / ||A||`` and ``eigmin(At_ii) / ||At_ii||``.

    Dense eigenvalues up to ``DENSE_LIMIT`` unknowns, otherwise the minimum
    Rayleigh quotient over ``samples`` random vectors supported on the
    extended subdomain (an upper estimate of the true minimum).
    """
    n = a.n_rows
    dense = n <= DENSE_LIMIT
    rng = np.random.default_rng(seed)
    upper, psd = [], []
    if dense:
        Ad = a.toarray()
        norm_a = float(np.linalg.norm(Ad, 2))
    else:
        norm_a = float(sps.linalg.eigsh(a.to_scipy(), k=1, which="LA", return_eigenvectors=False)[0])
    for i, sp in enumerate(splittings):
        idx = layout.overlapping(i)
        At = sp.At
        na = float(np.linalg.norm(At, 2))
        psd.append(_eigmin_dense(At) / na if na > 0 else 0.0)
        if dense:
            M = Ad.copy()
            M[np.ix_(idx, idx)] -= At
            upper.append(_eigmin_dense(M) / norm_a)
        else:
            ext = layout.extended(i)
            U = np.zeros((n, samples))
            U[ext] = rng.standard_normal((ext.size, samples))
            U /= np.linalg.norm(U, axis=0)
            qa = np.einsum("ij,ij->j", U, a.to_scipy() @ U)
            qt = np.einsum("ij,ij->j", U[idx], At @ U[idx])
            upper.append(float(np.min(qa - qt)) / norm_a)
    return {"mode": "dense" if dense else "rayleigh", "upper": upper, "psd": psd}


def check_splittings(a: CsrMatrix, layout: SubdomainLayout, splittings, samples: int = 500) -> list[Check]:
    m = splitting_margins(a, layout, splittings, samples)
    up, ps = min(m["upper"]), min(m["psd"])
    return [
        Check("splitting_upper_bound", up >= -1e-8, up, -1e-8, {"mode": m["mode"]}),
        Check("splitting_psd", ps >= -1e-10, ps, -1e-10),
    ]


def sqrt_residual(X: np.ndarray, S) -> float:
    """``||underline-At^2 - X^T X||_2 / (sigma_1^2 eps)`` for the computed
    factors.  Evaluated in extended precision up to 600 columns so that the
    check adds no rounding of its own."""
    if S.sigma1 == 0.0:
        return 0.0
    s = S.shift
    exact = X.shape[1] <= 600
    dt = np.longdouble if exact else np.float64
    V, sig, Xe = S.V.astype(dt), S.sigma.astype(dt), X.astype(dt)
    D2 = (V * (sig + s) ** 2) @ V.T - (s * s) * (V @ V.T) - Xe.T @ Xe
    D2[np.diag_indices_from(D2)] += s * s
    return float(np.linalg.norm(D2.astype(np.float64), 2) / (S.sigma1**2 * EPS))


SQRT_CONSTANT = 64.0


def sqrt_allowance(n_ext: int) -> float:
    """Allowed constant.  Two units come from the shift itself; the rest is
    the backward error of the dense SVD, which LAPACK delivers at 10 to 20
    units of ``eps sigma_1`` even for small blocks.  Doubled when the check
    is evaluated in double precision."""
    return SQRT_CONSTANT if n_ext <= 600 else 2.0 * SQRT_CONSTANT


def check_sqrt_consistency(a: CsrMatrix, layout: SubdomainLayout, splittings) -> Check:
    """Worst ratio of the square-root residual constant to its allowance."""
    worst, worst_c = 0.0, 0.0
    for i, sp in enumerate(splittings):
        X = build_block_row(a, layout, i).X
        c = sqrt_residual(X, sp.sqrt)
        ratio = c / sqrt_allowance(X.shape[1])
        if ratio > worst:
            worst, worst_c = ratio, c
    return Check("sqrt_consistency", worst <= 1.0, worst, 1.0, {"worst_constant": worst_c})


def check_sum_bound(a: CsrMatrix, layout: SubdomainLayout, splittings, samples: int = 100, seed: int = 0) -> Check:
    """``0 <= sum_i u^T At_i u <= N u^T A u`` on random vectors."""
    from .splitting import quadratic_forms

    rng = np.random.default_rng(seed)
    U = rng.standard_normal((a.n_rows, samples))
    s = quadratic_forms(layout, splittings, U).sum(axis=0)
    q = np.einsum("ij,ij->j", U, a.to_scipy() @ U)
    N = layout.n_subdomains
    lower = float(np.min(s / q))
    upper = float(np.min((N * q - s) / (N * q)))
    margin = min(lower, upper)
    return Check("sum_bound", margin >= -1e-10, margin, -1e-10, {"min_ratio": lower, "max_ratio": float(np.max(s / q))})


def check_pencils(a: CsrMatrix, level) -> Check:
    """Backward error of every computed eigenpair."""
    worst = 0.0
    for i, (sp, basis) in enumerate(zip(level.splittings, level.bases)):
        if basis.eigenvalues.size == 0:
            continue
        idx = level.layout.overlapping(i)
        A_ii = extract_submatrix(a, idx, idx)
        worst = max(worst, float(pencil_residuals(A_ii, level.pou.weights[i], sp, basis).max()))
    return Check("pencil_residual", worst <= 1e-8, worst, 1e-8)


def check_coarse(a: CsrMatrix, level) -> Check:
    """``C_00`` symmetric and factorised, ``R_0`` rows local to their subdomain."""
    cs = level.coarse
    if cs is None or cs.size == 0:
        return Check("coarse_space", True, 0.0, 1e-12, {"n_C": 0})
    C = cs.C00
    asym = float(np.max(np.abs(C - C.T)) / max(np.max(np.abs(C)), np.finfo(float).tiny))
    outside = 0
    for i, (lo, hi) in enumerate(cs.blocks):
        mask = np.ones(level.n, dtype=bool)
        mask[level.layout.overlapping(i)] = False
        blk = cs.R0[lo:hi]
        outside += int(np.count_nonzero(mask[blk.indices]))
    ok = asym <= 1e-12 and outside == 0 and cs.factor is not None
    return Check("coarse_space", ok, asym, 1e-12, {"n_C": int(cs.size), "nonlocal_entries": outside})


def check_tau_monotonicity(level, taus=(2.0, 10.0, 100.0), p_max=None) -> Check:
    counts = [sum(reselect(b, t, p_max) for b in level.bases) for t in taus]
    ok = all(x <= y for x, y in zip(counts, counts[1:]))
    return Check("tau_monotonicity", ok, None, None, {"tau": list(taus), "selected": counts})


def check_condition_bound(a: CsrMatrix, level, tau: float) -> Check:
    """Dense ``kappa(M_additive A)`` against the theoretical bound with ``k_m <= N``."""
    from .schwarz import apply_two_level

    if a.n_rows > DENSE_LIMIT:
        return Check("condition_bound", True, None, None, {"skipped": f"n > {DENSE_LIMIT}"})
    variant = level.variant
    level.variant = "two-additive"
    try:
        lo, hi, kappa = krylov.estimate_condition(a, lambda r: apply_two_level(level, r), a.n_rows)
    finally:
        level.variant = variant
    k_c = level.coloring.n_colors
    bound = theoretical_bound(k_c, level.layout.n_subdomains, tau)
    return Check(
        "condition_bound",
        kappa <= bound,
        float(kappa),
        float(bound),
        {"k_c": k_c, "lambda_min": lo, "lambda_max": hi},
    )

"""PCG, right-preconditioned restarted GMRES, flexible GMRES and spectrum
estimates of preconditioned operators.

Operators and preconditioners may be callables, numpy arrays, scipy sparse
matrices, :class:`~algschwarz.sparse.CsrMatrix`, or any object with a
``matvec`` method.  All solvers stop on the true relative residual
``||b - A x|| / ||b||``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .sparse import CsrMatrix

HAPPY_BREAKDOWN = 1e-14
REORTH_TOL = 1e-8


def as_operator(op):
    """Normalise ``op`` to a callable ``v -> op(v)``; ``None`` is the identity."""
    if op is None:
        return lambda v: v
    if isinstance(op, CsrMatrix):
        mat = op.to_scipy()
        return lambda v: mat @ v
    if isinstance(op, np.ndarray) or sps.issparse(op):
        return lambda v: op @ v
    if hasattr(op, "matvec"):
        return op.matvec
    if callable(op):
        return op
    raise TypeError(f"cannot use {type(op).__name__} as a linear operator")


@dataclass
class SolveConfig:
    method: str = "gmres"  # pcg | gmres | fgmres
    restart: int = 30
    rtol: float = 1e-8
    max_iter: int = 1000

    def __post_init__(self):
        if self.method not in ("pcg", "gmres", "fgmres"):
            raise ValueError(f"unknown method '{self.method}'")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if not 0 < self.rtol < 1:
            raise ValueError("rtol must lie in (0, 1)")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residuals: list[float]
    status: str  # converged | max_iter | stagnated | indefinite
    inner_iterations: list[int] = field(default_factory=list)
    kappa: float | None = None
    timings: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]

    @property
    def average_inner(self) -> float | None:
        if not self.inner_iterations:
            return None
        return float(np.mean(self.inner_iterations))

    def write_history(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,relative_residual\n")
            for k, r in enumerate(self.residuals):
                fh.write(f"{k},{r:.17g}\n")


def _inner_log(M):
    return getattr(M, "inner_log", None)


def pcg(A, M, b, cfg: SolveConfig | None = None, x0=None, callback=None):
    """Preconditioned conjugate gradients.  ``M`` must be symmetric positive
    definite (use the additive variant, not the deflated one)."""
    cfg = cfg or SolveConfig(method="pcg")
    t0 = time.perf_counter()
    Aop, Mop = as_operator(A), as_operator(M)
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if nb == 0.0:
        return np.zeros_like(b), SolveReport(True, 0, [0.0], "converged")
    r = b - Aop(x)
    hist = [np.linalg.norm(r) / nb]
    if hist[0] <= cfg.rtol:
        return x, SolveReport(True, 0, hist, "converged")
    z = Mop(r)
    rz = r @ z
    p = z.copy()
    status = "max_iter"
    it = 0
    while it < cfg.max_iter:
        if rz <= 0:
            status = "indefinite"
            break
        q = Aop(p)
        pq = p @ q
        if pq <= 0:
            status = "indefinite"
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        if callback is not None:
            callback(x)
        rel = np.linalg.norm(r) / nb
        if rel <= cfg.rtol:
            # confirm on the true residual
            r = b - Aop(x)
            rel = np.linalg.norm(r) / nb
            hist.append(rel)
            if rel <= cfg.rtol:
                status = "converged"
                break
        else:
            hist.append(rel)
        z = Mop(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rep = SolveReport(status == "converged", it, hist, status)
    rep.timings["solve"] = time.perf_counter() - t0
    return x, rep


def _arnoldi_step(V, H, j, w):
    """Modified Gram-Schmidt against ``V[:, :j+1]`` with one reorthogonalisation
    pass when the orthogonality loss exceeds ``REORTH_TOL``."""
    for i in range(j + 1):
        h = V[:, i] @ w
        H[i, j] += h
        w -= h * V[:, i]
    nw = np.linalg.norm(w)
    if nw > 0:
        loss = np.max(np.abs(V[:, : j + 1].T @ w)) / nw
        if loss > REORTH_TOL:
            for i in range(j + 1):
                h = V[:, i] @ w
                H[i, j] += h
                w -= h * V[:, i]
            nw = np.linalg.norm(w)
    return w, nw


def _gmres(A, M, b, cfg: SolveConfig, x0, flexible: bool):
    t0 = time.perf_counter()
    Aop, Mop = as_operator(A), as_operator(M)
    log = _inner_log(M)
    log_start = len(log) if log is not None else 0
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    nb = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if nb == 0.0:
        return np.zeros(n), SolveReport(True, 0, [0.0], "converged")
    r = b - Aop(x)
    beta = np.linalg.norm(r)
    hist = [beta / nb]
    if hist[0] <= cfg.rtol:
        return x, SolveReport(True, 0, hist, "converged")
    m = cfg.restart
    it = 0
    status = "max_iter"
    while it < cfg.max_iter:
        cycle_start = beta
        V = np.zeros((n, m + 1))
        Z = np.zeros((n, m)) if flexible else None
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        k = 0
        while k < m and it < cfg.max_iter:
            z = Mop(V[:, k])
            if flexible:
                Z[:, k] = z
            w, hn = _arnoldi_step(V, H, k, Aop(z))
            H[k + 1, k] = hn
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            rho = np.hypot(H[k, k], H[k + 1, k])
            if rho == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / rho, H[k + 1, k] / rho
            H[k, k] = rho
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            it += 1
            k += 1
            hist.append(abs(g[k]) / nb)
            hnorm = np.linalg.norm(H[: k + 1, :k])
            if hn <= HAPPY_BREAKDOWN * hnorm:
                break
            V[:, k] = w / hn
            if hist[-1] <= cfg.rtol:
                break
        y = sla.solve_triangular(H[:k, :k], g[:k], check_finite=False)
        if flexible:
            x = x + Z[:, :k] @ y
        else:
            x = x + Mop(V[:, :k] @ y)
        r = b - Aop(x)
        beta = np.linalg.norm(r)
        hist[-1] = beta / nb  # cycle ends on the true residual
        if hist[-1] <= cfg.rtol:
            status = "converged"
            break
        if beta >= cycle_start * (1.0 - 1e-14):
            status = "stagnated"
            break
    rep = SolveReport(status == "converged", it, hist, status)
    if log is not None:
        rep.inner_iterations = list(log[log_start:])
    rep.timings["solve"] = time.perf_counter() - t0
    return x, rep


def gmres(A, M, b, cfg: SolveConfig | None = None, x0=None):
    """Right-preconditioned restarted GMRES; ``M`` must be a fixed operator."""
    return _gmres(A, M, b, cfg or SolveConfig(method="gmres"), x0, flexible=False)


def fgmres(A, M, b, cfg: SolveConfig | None = None, x0=None):
    """Flexible GMRES: stores the preconditioned vectors, so ``M`` may vary
    between applications (e.g. inexact nested coarse solves)."""
    return _gmres(A, M, b, cfg or SolveConfig(method="fgmres"), x0, flexible=True)


def solve(A, M, b, cfg: SolveConfig, x0=None):
    if cfg.method == "pcg":
        return pcg(A, M, b, cfg, x0)
    if cfg.method == "fgmres":
        return fgmres(A, M, b, cfg, x0)
    return gmres(A, M, b, cfg, x0)


def dense_operator(op, n: int, block: int = 256) -> np.ndarray:
    """Materialise an operator by applying it to identity columns."""
    f = as_operator(op)
    out = np.empty((n, n))
    eye = np.eye(n)
    for s in range(0, n, block):
        cols = eye[:, s : s + block]
        try:
            out[:, s : s + block] = f(cols)
        except (ValueError, TypeError):
            out[:, s : s + block] = np.column_stack([f(c) for c in cols.T])
    return out


def estimate_condition(A, M, n: int, mode: str = "dense", symmetry_tol: float = 1e-10, iters: int = 200, seed: int = 0):
    """Extreme eigenvalues and condition number of ``M A``.

    ``dense``: exact, via ``eig(L^T M L)`` with ``A = L L^T`` (n <= 4096).
    ``lanczos``: Ritz values from the CG-Lanczos tridiagonal of PCG on a
    random right-hand side; aims at 5% accuracy on the extremes.
    """
    if mode == "dense":
        if n > 4096:
            raise ValueError("dense spectrum estimation is limited to n <= 4096")
        Ad = dense_operator(A, n)
        Md = dense_operator(M, n)
        scale = max(np.abs(Md).max(), 1e-300)
        if np.abs(Md - Md.T).max() > symmetry_tol * scale:
            raise ValueError("preconditioner is not symmetric")
        Md = 0.5 * (Md + Md.T)
        Ad = 0.5 * (Ad + Ad.T)
        L = sla.cholesky(Ad, lower=True)
        S = L.T @ Md @ L
        ev = sla.eigvalsh(0.5 * (S + S.T))
        lo, hi = float(ev[0]), float(ev[-1])
        return lo, hi, hi / lo
    if mode != "lanczos":
        raise ValueError(f"unknown mode '{mode}'")
    Aop, Mop = as_operator(A), as_operator(M)
    rng = np.random.default_rng(seed)
    b = rng.uniform(-1.0, 1.0, n)
    # symmetry probe
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    mu, mv = Mop(u), Mop(v)
    if abs(mu @ v - u @ mv) > symmetry_tol * np.linalg.norm(mu) * np.linalg.norm(v) * 10:
        raise ValueError("preconditioner is not symmetric")
    x = np.zeros(n)
    r = b.copy()
    z = Mop(r)
    p = z.copy()
    rz = r @ z
    alphas, betas = [], []
    for _ in range(min(iters, n)):
        q = Aop(p)
        alpha = rz / (p @ q)
        x += alpha * p
        r -= alpha * q
        z = Mop(r)
        rz_new = r @ z
        beta = rz_new / rz
        alphas.append(alpha)
        betas.append(beta)
        rz = rz_new
        if np.sqrt(abs(rz)) <= 1e-14 * np.linalg.norm(b):
            break
        p = z + beta * p
    k = len(alphas)
    diag = np.empty(k)
    off = np.empty(max(k - 1, 0))
    for j in range(k):
        diag[j] = 1.0 / alphas[j] + (betas[j - 1] / alphas[j - 1] if j else 0.0)
        if j < k - 1:
            off[j] = np.sqrt(betas[j]) / alphas[j]
    ev = sla.eigvalsh_tridiagonal(diag, off)
    lo, hi = float(ev[0]), float(ev[-1])
    return lo, hi, hi / lo

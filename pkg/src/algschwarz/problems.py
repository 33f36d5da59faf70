"""Built-in SPD test problems (finite-difference Laplacians, Dirichlet boundary)."""

from __future__ import annotations

import re

import numpy as np
import scipy.sparse as sps

from .sparse import CsrMatrix


def _tridiag(n: int) -> sps.csr_matrix:
    return sps.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def laplace1d(n: int) -> CsrMatrix:
    """tridiag(-1, 2, -1) of order ``n``."""
    if n < 1:
        raise ValueError("n must be positive")
    return CsrMatrix.from_scipy(_tridiag(n), symmetric=True)


def laplace2d(nx: int, ny: int | None = None) -> CsrMatrix:
    """5-point Laplacian on an ``nx`` x ``ny`` grid, lexicographic (x fastest)."""
    ny = nx if ny is None else ny
    a = sps.kron(sps.identity(ny), _tridiag(nx)) + sps.kron(_tridiag(ny), sps.identity(nx))
    return CsrMatrix.from_scipy(a.tocsr(), symmetric=True)


def laplace3d(nx: int, ny: int | None = None, nz: int | None = None) -> CsrMatrix:
    ny = nx if ny is None else ny
    nz = nx if nz is None else nz
    ix, iy, iz = sps.identity(nx), sps.identity(ny), sps.identity(nz)
    a = (
        sps.kron(iz, sps.kron(iy, _tridiag(nx)))
        + sps.kron(iz, sps.kron(_tridiag(ny), ix))
        + sps.kron(_tridiag(nz), sps.kron(iy, ix))
    )
    return CsrMatrix.from_scipy(a.tocsr(), symmetric=True)


def channel_coefficient(nx: int, ny: int, jump: float, n_channels: int = 4) -> np.ndarray:
    """Cell coefficients: ``n_channels`` horizontal high-conductivity channels
    of value ``jump`` crossing the whole domain, background 1."""
    kappa = np.ones((ny, nx))
    band = max(1, ny // (2 * n_channels + 1))
    for c in range(n_channels):
        y0 = (2 * c + 1) * band
        kappa[y0 : y0 + band, :] = jump
    return kappa


def diffusion2d(kappa: np.ndarray) -> CsrMatrix:
    """Cell-centred finite volumes for ``-div(kappa grad u)`` with homogeneous
    Dirichlet data; face transmissibilities are harmonic means."""
    kappa = np.asarray(kappa, dtype=np.float64)
    ny, nx = kappa.shape
    idx = np.arange(nx * ny).reshape(ny, nx)
    rows, cols, vals = [], [], []
    diag = np.zeros((ny, nx))
    # interior faces
    tx = 2 * kappa[:, :-1] * kappa[:, 1:] / (kappa[:, :-1] + kappa[:, 1:])
    ty = 2 * kappa[:-1, :] * kappa[1:, :] / (kappa[:-1, :] + kappa[1:, :])
    for t, a, b in ((tx, idx[:, :-1], idx[:, 1:]), (ty, idx[:-1, :], idx[1:, :])):
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [-t.ravel(), -t.ravel()]
    diag[:, :-1] += tx
    diag[:, 1:] += tx
    diag[:-1, :] += ty
    diag[1:, :] += ty
    # boundary faces, half-cell distance to the Dirichlet wall
    diag[:, 0] += 2 * kappa[:, 0]
    diag[:, -1] += 2 * kappa[:, -1]
    diag[0, :] += 2 * kappa[0, :]
    diag[-1, :] += 2 * kappa[-1, :]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    a = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nx * ny, nx * ny)
    ).tocsr()
    a = 0.5 * (a + a.T)
    return CsrMatrix.from_scipy(a, symmetric=True)


def heterogeneous2d(nx: int, ny: int | None = None, jump: float = 1e6) -> CsrMatrix:
    ny = nx if ny is None else ny
    return diffusion2d(channel_coefficient(nx, ny, jump))


_GEN = re.compile(r"^(?P<kind>[a-z0-9]+):(?P<dims>\d+(?:x\d+)*)(?::jump=(?P<jump>[0-9.eE+-]+))?$")


def generate(spec: str) -> CsrMatrix:
    """Build a matrix from a generator string.

    ``laplace1d:<n>``, ``tridiag:<n>``, ``laplace2d:<nx>x<ny>[:jump=<v>]``,
    ``laplace3d:<nx>x<ny>x<nz>``, ``identity:<n>``.
    """
    m = _GEN.match(spec.strip())
    if not m:
        raise ValueError(f"bad generator spec '{spec}'")
    kind = m["kind"]
    dims = [int(d) for d in m["dims"].split("x")]
    jump = m["jump"]
    if any(d < 1 for d in dims):
        raise ValueError(f"bad generator spec '{spec}': sizes must be positive")
    if jump is not None and kind != "laplace2d":
        raise ValueError("jump is only supported for laplace2d")
    if kind in ("laplace1d", "tridiag") and len(dims) == 1:
        return laplace1d(dims[0])
    if kind == "identity" and len(dims) == 1:
        return CsrMatrix.identity(dims[0])
    if kind == "laplace2d" and len(dims) in (1, 2):
        nx, ny = dims[0], dims[-1]
        return heterogeneous2d(nx, ny, float(jump)) if jump is not None else laplace2d(nx, ny)
    if kind == "laplace3d" and len(dims) in (1, 3):
        return laplace3d(dims[0], dims[1 % len(dims)], dims[-1])
    raise ValueError(f"bad generator spec '{spec}'")

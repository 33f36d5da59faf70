"""One-level, two-level and nested multilevel overlapping Schwarz operators."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from . import krylov
from .coarse import DEFAULT_NEV_MAX, CoarseSpace, build_coarse_space
from .partition import (
    Coloring,
    PartitionOfUnity,
    SubdomainLayout,
    build_layout,
    build_partition_of_unity,
    color_subdomains,
    partition_graph,
    partition_quality,
)
from .sparse import AdjacencyGraph, CsrMatrix, extract_submatrix
from .splitting import build_splittings

log = logging.getLogger(__name__)

VARIANTS = ("ras", "asm", "two-additive", "two-deflated")


class NotSPDError(RuntimeError):
    """A subdomain or coarse matrix failed its Cholesky factorisation."""


class HierarchyError(RuntimeError):
    pass


@dataclass
class HierarchyConfig:
    """Construction settings.

    ``levels`` counts matrices in the hierarchy: 1 is one-level Schwarz, 2 adds
    a direct coarse solve, 3 and more solve each coarse problem with the same
    construction applied to ``C_00`` and an inner GMRES.  ``None`` recurses
    while the coarse size exceeds ``direct_threshold``.
    """

    levels: int | None = 2
    subdomains: list[int] = field(default_factory=lambda: [16])
    tau: float = 10.0
    p_max: int | None = DEFAULT_NEV_MAX
    variant: str = "two-deflated"
    nested_variant: str = "two-deflated"
    pou: str = "boolean"
    direct_threshold: int = 4000
    inner_rtol: float = 1e-4
    inner_restart: int = 30
    inner_max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        for v in (self.variant, self.nested_variant):
            if v not in VARIANTS:
                raise ValueError(f"unknown variant '{v}'")
        if self.levels is not None and self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not self.subdomains or any(n < 1 for n in self.subdomains):
            raise ValueError("subdomain counts must be positive")

    def subdomains_at(self, depth: int) -> int:
        if depth < len(self.subdomains):
            return self.subdomains[depth]
        return max(1, self.subdomains[-1] // 4 ** (depth - len(self.subdomains) + 1))


class DirectCoarseSolve:
    def __init__(self, coarse: CoarseSpace):
        self.coarse = coarse

    def __call__(self, y):
        return self.coarse.solve(y)


class NestedCoarseSolve:
    """Inexact coarse solve: right-preconditioned GMRES on ``C_00`` with the
    next level as preconditioner.  Iteration counts go to ``inner_log``."""

    def __init__(self, C00: CsrMatrix, level: "SchwarzLevel", cfg: krylov.SolveConfig, inner_log: list):
        self.C00 = C00
        self.level = level
        self.cfg = cfg
        self.inner_log = inner_log
        self.failures = 0

    def __call__(self, y):
        if y.ndim == 2:
            return np.column_stack([self(c) for c in y.T])
        method = krylov.fgmres if self.level.needs_flexible else krylov.gmres
        x, rep = method(self.C00, self.level, y, self.cfg)
        self.inner_log.append(rep.iterations)
        if not rep.converged:
            self.failures += 1
            if not np.all(np.isfinite(x)):
                raise HierarchyError(f"nested coarse solve diverged after {rep.iterations} iterations")
            log.warning("nested coarse solve stopped (%s) after %d iterations", rep.status, rep.iterations)
        return x


@dataclass(eq=False)
class SchwarzLevel:
    """One level of the hierarchy, usable as a preconditioner (``matvec``)."""

    matrix: CsrMatrix
    layout: SubdomainLayout
    pou: PartitionOfUnity
    factors: list
    variant: str
    coloring: Coloring
    coarse: CoarseSpace | None = None
    coarse_solve: object = None
    next_level: "SchwarzLevel | None" = None
    info: dict = field(default_factory=dict)
    inner_log: list = field(default_factory=list)
    splittings: list | None = field(default=None, repr=False)
    bases: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.n_rows

    @property
    def n_coarse(self) -> int:
        return 0 if self.coarse is None else self.coarse.size

    @property
    def needs_flexible(self) -> bool:
        return isinstance(self.coarse_solve, NestedCoarseSolve)

    def matvec(self, r):
        if self.variant in ("ras", "asm"):
            return apply_one_level(self, r, self.variant)
        return apply_two_level(self, r)

    __call__ = matvec

    def levels(self) -> list["SchwarzLevel"]:
        out, lvl = [], self
        while lvl is not None:
            out.append(lvl)
            lvl = lvl.next_level
        return out

    def describe(self) -> dict:
        desc = []
        for depth, lvl in enumerate(self.levels(), start=1):
            coarse_kind = None
            if lvl.coarse is not None and lvl.n_coarse:
                coarse_kind = "nested" if lvl.needs_flexible else "direct"
            desc.append(
                {
                    "level": depth,
                    "n": lvl.n,
                    "nnz": lvl.matrix.nnz,
                    "subdomains": lvl.layout.n_subdomains,
                    "interior_sizes": [int(x.size) for x in lvl.layout.interiors],
                    "variant": lvl.variant,
                    "k_c": lvl.coloring.n_colors,
                    "n_C": lvl.n_coarse,
                    "coarse_solve": coarse_kind,
                    **lvl.info,
                }
            )
        return {"levels": desc}


def _local_factors(a: CsrMatrix, layout: SubdomainLayout) -> list:
    factors = []
    for i in range(layout.n_subdomains):
        idx = layout.overlapping(i)
        Cii = extract_submatrix(a, idx, idx)
        try:
            factors.append(sla.cho_factor(Cii, lower=True, check_finite=False))
        except np.linalg.LinAlgError as exc:
            raise NotSPDError(f"subdomain {i + 1}: local block is not SPD ({exc})") from exc
    return factors


def apply_one_level(level: SchwarzLevel, r, kind: str = "asm"):
    """``sum_i R_i^T C_ii^{-1} R_i r`` (ASM) or the restricted variant with
    interior-owner prolongation (RAS).  Summation runs in subdomain order."""
    if not level.factors:
        raise HierarchyError("level has no subdomain factorisations")
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    lay = level.layout
    for i, fac in enumerate(level.factors):
        idx = lay.overlapping(i)
        loc = sla.cho_solve(fac, r[idx], check_finite=False)
        if kind == "ras":
            ni = lay.interiors[i].size
            out[idx[:ni]] += loc[:ni]
        elif kind == "asm":
            out[idx] += loc
        else:
            raise ValueError(f"unknown one-level kind '{kind}'")
    return out


def apply_two_level(level: SchwarzLevel, r):
    """Additive: coarse term plus ASM.  Deflated: coarse term plus RAS applied
    to the deflated residual ``r - A R_0^T C_00^{-1} R_0 r``.  An empty
    coarse space reduces both to their one-level part exactly."""
    r = np.asarray(r, dtype=np.float64)
    deflated = level.variant == "two-deflated"
    one = "ras" if deflated else "asm"
    if level.coarse is None or level.n_coarse == 0:
        return apply_one_level(level, r, one)
    R0 = level.coarse.R0
    y = R0.T @ level.coarse_solve(R0 @ r)
    if deflated:
        return y + apply_one_level(level, r - level.matrix.to_scipy() @ y, "ras")
    return y + apply_one_level(level, r, "asm")


def _coarse_matrix(C00: np.ndarray) -> CsrMatrix:
    mat = sps.csr_matrix(C00)  # keeps every nonzero, no dropping
    mat = 0.5 * (mat + mat.T)
    return CsrMatrix.from_scipy(mat.tocsr(), symmetric=True)


def build_level(a: CsrMatrix, cfg: HierarchyConfig, depth: int = 0, variant: str | None = None) -> SchwarzLevel:
    """Build the level at ``depth`` (0 = finest) and, recursively, the ones below."""
    variant = variant or (cfg.variant if depth == 0 else cfg.nested_variant)
    timings = {}
    n_sub = min(cfg.subdomains_at(depth), a.n_rows)
    t = time.perf_counter()
    graph = AdjacencyGraph.from_matrix(a)
    interiors = partition_graph(graph, n_sub, seed=cfg.seed)
    layout = build_layout(graph, interiors)
    pou = build_partition_of_unity(layout, cfg.pou)
    coloring = color_subdomains(layout)
    quality = partition_quality(graph, interiors)
    timings["partition"] = time.perf_counter() - t

    t = time.perf_counter()
    factors = _local_factors(a, layout)
    timings["factor"] = time.perf_counter() - t

    info = {"partition": quality.as_dict()}
    level = SchwarzLevel(a, layout, pou, factors, variant, coloring, info=info)
    level.info["timings"] = timings
    if variant in ("ras", "asm"):
        return level

    t = time.perf_counter()
    splittings = build_splittings(a, layout)
    timings["splitting"] = time.perf_counter() - t
    t = time.perf_counter()
    coarse, bases = build_coarse_space(a, layout, pou, splittings, cfg.tau, cfg.p_max)
    timings["eigen"] = time.perf_counter() - t
    level.coarse = coarse
    level.info["grid_complexity"] = coarse.summary["grid_complexity"]
    level.info["truncated_subdomains"] = sum(b.truncated for b in bases)
    level.splittings = splittings
    level.bases = bases
    if coarse.size == 0:
        return level

    remaining = None if cfg.levels is None else cfg.levels - (depth + 2)
    recurse = (remaining is None and coarse.size > cfg.direct_threshold) or (remaining is not None and remaining > 0)
    if recurse and coarse.size > 1:
        t = time.perf_counter()
        sub = _coarse_matrix(coarse.C00)
        nxt = build_level(sub, cfg, depth + 1)
        timings["next_level"] = time.perf_counter() - t
        inner = krylov.SolveConfig(
            method="gmres", restart=cfg.inner_restart, rtol=cfg.inner_rtol, max_iter=cfg.inner_max_iter
        )
        level.next_level = nxt
        level.coarse_solve = NestedCoarseSolve(sub, nxt, inner, level.inner_log)
    else:
        if coarse.size > cfg.direct_threshold:
            warnings.warn(
                f"direct coarse solve of size {coarse.size} exceeds threshold {cfg.direct_threshold}",
                RuntimeWarning,
                stacklevel=2,
            )
        level.coarse_solve = DirectCoarseSolve(coarse)
    return level


def build_hierarchy(a: CsrMatrix, cfg: HierarchyConfig | None = None) -> SchwarzLevel:
    cfg = cfg or HierarchyConfig()
    if not a.symmetric:
        raise HierarchyError("matrix is not flagged symmetric")
    if cfg.levels == 1 and cfg.variant not in ("ras", "asm"):
        one = "ras" if cfg.variant == "two-deflated" else "asm"
        cfg = HierarchyConfig(**{**cfg.__dict__, "variant": one})
    return build_level(a, cfg, 0)

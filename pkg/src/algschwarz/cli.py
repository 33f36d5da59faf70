"""Command-line driver: ``solve``, ``verify``, ``compare`` and ``spectrum``.

Settings come from built-in defaults, then an optional ``key = value`` config
file (``--config``), then command-line flags.  Config keys are the long flag
names with or without the leading dashes (``nev-max`` and ``nev_max`` both
work).

Exit codes: 0 converged (or all checks passed), 1 diverged, 2 input error,
3 invariant failure in ``verify``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import krylov
from . import verify as checks
from .coarse import EigenSolveError, estimate_multiplicity, theoretical_bound
from .partition import build_layout, build_partition_of_unity, partition_graph
from .problems import generate
from .schwarz import VARIANTS, HierarchyConfig, HierarchyError, NotSPDError, apply_two_level, build_hierarchy
from .sparse import AdjacencyGraph, CsrMatrix, MatrixMarketError, read_matrix_market, read_vector
from .splitting import ClosureError, SplittingError, build_splittings, write_diagnostics

log = logging.getLogger("algschwarz")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_DIVERGED, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3
COMPARE_LIMIT = 100  # table convention: blank means more than this many iterations
ALL_CHECKS = ("symmetry", "spd", "layout", "pou", "spsd", "sqrt", "sum", "pencil", "coarse", "tau", "bound")


class InputError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        out = [int(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise InputError(f"expected comma-separated integers, got '{text}'") from exc
    if not out:
        raise InputError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got '{text}'") from exc


def _str_list(text: str) -> list[str]:
    return [t for t in str(text).replace(" ", "").split(",") if t]


def _levels(text) -> int | None:
    if text is None or str(text).lower() == "auto":
        return None
    try:
        v = int(text)
    except ValueError as exc:
        raise InputError(f"levels must be an integer or 'auto', got '{text}'") from exc
    if v < 1:
        raise InputError("levels must be >= 1")
    return v


def _nev(text) -> int | None:
    if text is None or str(text).lower() in ("none", "all"):
        return None
    v = int(text)
    if v < 0:
        raise InputError("nev-max must be non-negative")
    return v


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got '{text}'")


@dataclass
class RunConfig:
    """Everything a run needs; list lengths are checked against ``levels``."""

    matrix: str | None = None
    gen: str | None = None
    rhs: str = "random"  # random | ones | <path>
    rhs_seed: int = 42
    subdomains: list[int] = field(default_factory=lambda: [16])
    levels: int | None = 2
    tau: float = 10.0
    nev_max: int | None = 20
    variant: str = "two-deflated"
    nested_variant: str = "two-deflated"
    pou: str = "boolean"
    method: str = "auto"  # auto | pcg | gmres | fgmres
    rtol: float = 1e-8
    inner_rtol: float = 1e-4
    restart: int = 30
    max_iter: int = 1000
    direct_threshold: int = 4000
    seed: int = 0
    report: str | None = None
    history: str | None = None
    layout_dump: str | None = None
    diagnostics: str | None = None
    kappa: bool = False
    timings: bool = False
    checks: list[str] = field(default_factory=lambda: list(ALL_CHECKS))
    variants: list[str] = field(default_factory=lambda: ["ras", "two-deflated"])
    taus: list[float] | None = None
    table: str | None = None
    eigs_csv: str | None = None

    def validate(self) -> "RunConfig":
        if (self.matrix is None) == (self.gen is None):
            raise InputError("give exactly one of --matrix or --gen")
        for v in [self.variant, self.nested_variant, *self.variants]:
            if v not in VARIANTS:
                raise InputError(f"unknown variant '{v}' (choose from {', '.join(VARIANTS)})")
        if self.pou not in ("boolean", "multiplicity"):
            raise InputError(f"unknown partition of unity '{self.pou}'")
        if self.method not in ("auto", "pcg", "gmres", "fgmres"):
            raise InputError(f"unknown method '{self.method}'")
        if self.tau <= 0 or (self.taus and min(self.taus) <= 0):
            raise InputError("tau must be positive")
        if not (0 < self.rtol < 1 and 0 < self.inner_rtol < 1):
            raise InputError("tolerances must lie in (0, 1)")
        if self.restart < 1 or self.max_iter < 1:
            raise InputError("restart and max-iter must be >= 1")
        if any(n < 1 for n in self.subdomains):
            raise InputError("subdomain counts must be positive")
        if self.levels is not None and len(self.subdomains) > max(1, self.levels - 1):
            raise InputError(
                f"{len(self.subdomains)} subdomain counts given for {self.levels} level(s); "
                f"at most {max(1, self.levels - 1)} allowed"
            )
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise InputError(f"unknown checks: {', '.join(sorted(unknown))}")
        return self

    def hierarchy(self, variant: str | None = None, tau: float | None = None) -> HierarchyConfig:
        return HierarchyConfig(
            levels=self.levels,
            subdomains=list(self.subdomains),
            tau=self.tau if tau is None else tau,
            p_max=self.nev_max,
            variant=variant or self.variant,
            nested_variant=self.nested_variant,
            pou=self.pou,
            direct_threshold=self.direct_threshold,
            inner_rtol=self.inner_rtol,
            inner_restart=self.restart,
            seed=self.seed,
        )

    def echo(self) -> dict:
        """Settings that affect results (output paths left out)."""
        d = asdict(self)
        for k in ("report", "history", "layout_dump", "diagnostics", "table", "eigs_csv", "timings"):
            d.pop(k)
        return d


_PARSERS = {
    "rhs_seed": int,
    "subdomains": _int_list,
    "levels": _levels,
    "tau": float,
    "nev_max": _nev,
    "rtol": float,
    "inner_rtol": float,
    "restart": int,
    "max_iter": int,
    "direct_threshold": int,
    "seed": int,
    "kappa": _bool,
    "timings": _bool,
    "checks": _str_list,
    "variants": _str_list,
    "taus": _float_list,
}


def _coerce(key: str, value):
    parse = _PARSERS.get(key)
    if parse is None or not isinstance(value, str):
        return value
    try:
        return parse(value)
    except ValueError as exc:
        raise InputError(f"bad value for {key}: '{value}'") from exc


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"cannot read config file '{path}': {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected key = value")
            key, value = (t.strip() for t in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in known:
                raise InputError(f"{path}:{lineno}: unknown key '{key}'")
            out[key] = value
    return out


def make_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    known = {f.name for f in fields(RunConfig)}
    for k, v in vars(args).items():
        if k in known and v is not None:
            values[k] = v
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate()


# ---------------------------------------------------------------- inputs


def load_matrix(cfg: RunConfig) -> tuple[CsrMatrix, str]:
    if cfg.gen is not None:
        try:
            return generate(cfg.gen), f"gen:{cfg.gen}"
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    try:
        a = read_matrix_market(cfg.matrix)
    except OSError as exc:
        raise InputError(f"cannot read matrix '{cfg.matrix}': {exc}") from exc
    return a, f"file:{cfg.matrix}"


def make_rhs(cfg: RunConfig, n: int) -> np.ndarray:
    if cfg.rhs == "random":
        return np.random.default_rng(cfg.rhs_seed).uniform(-1.0, 1.0, n)
    if cfg.rhs == "ones":
        return np.ones(n)
    try:
        b = read_vector(cfg.rhs)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read right-hand side '{cfg.rhs}': {exc}") from exc
    if b.size != n:
        raise InputError(f"right-hand side has length {b.size}, matrix has {n} rows")
    return b


def _check_matrix(a: CsrMatrix) -> None:
    if a.n_rows != a.n_cols:
        raise InputError(f"matrix is not square ({a.n_rows} x {a.n_cols})")
    if not a.symmetric:
        raise InputError("matrix is not symmetric")


def _write_json(path: str | None, report: dict) -> None:
    if path is None:
        return
    with open(path, "w") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True, allow_nan=True))
        fh.write("\n")


def _strip_timings(obj, keep: bool):
    if keep:
        return obj
    if isinstance(obj, dict):
        return {k: _strip_timings(v, keep) for k, v in obj.items() if k not in ("timings", "elapsed")}
    if isinstance(obj, list):
        return [_strip_timings(v, keep) for v in obj]
    return obj


def _hierarchy_report(level) -> dict:
    desc = level.describe()
    for lvl, d in zip(level.levels(), desc["levels"]):
        if lvl.coarse is not None:
            d["coarse"] = lvl.coarse.summary
    lv = level.levels()
    desc["n_C"] = [d["n_C"] for d in desc["levels"]]
    desc["grid_complexity"] = (level.n + level.n_coarse) / level.n
    desc["n_levels"] = len(lv) + (1 if lv[-1].n_coarse else 0)
    return desc


# ---------------------------------------------------------------- commands


def _pick_method(cfg: RunConfig, level) -> str:
    if cfg.method != "auto":
        if cfg.method == "pcg" and level.variant in ("ras", "two-deflated"):
            raise InputError("pcg needs a symmetric preconditioner (asm or two-additive)")
        if cfg.method == "gmres" and level.needs_flexible:
            raise InputError("nested coarse solves vary between applications; use fgmres")
        return cfg.method
    return "fgmres" if level.needs_flexible else "gmres"


def _kappa(a: CsrMatrix, level) -> dict:
    if level.variant in ("ras", "two-deflated"):
        return {"kappa": None, "note": f"{level.variant} is not symmetric; use asm or two-additive"}
    mode = "dense" if a.n_rows <= checks.DENSE_LIMIT else "lanczos"
    lo, hi, kappa = krylov.estimate_condition(a, level, a.n_rows, mode=mode)
    return {"kappa": kappa, "lambda_min": lo, "lambda_max": hi, "mode": mode}


def run_solve(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    t0 = time.perf_counter()
    a, source = load_matrix(cfg)
    _check_matrix(a)
    b = make_rhs(cfg, a.n_rows)
    t_load = time.perf_counter() - t0
    t = time.perf_counter()
    level = build_hierarchy(a, cfg.hierarchy())
    t_setup = time.perf_counter() - t
    method = _pick_method(cfg, level)
    scfg = krylov.SolveConfig(method=method, restart=cfg.restart, rtol=cfg.rtol, max_iter=cfg.max_iter)
    x, rep = krylov.solve(a, level, b, scfg)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "config": cfg.echo(),
        "problem": {"source": source, "n": a.n_rows, "nnz": a.nnz},
        "hierarchy": _hierarchy_report(level),
        "solve": {
            "method": method,
            "converged": rep.converged,
            "status": rep.status,
            "iterations": rep.iterations,
            "final_relative_residual": rep.final_residual,
            "inner_calls": len(rep.inner_iterations),
            "inner_total": int(sum(rep.inner_iterations)),
            "inner_average": rep.average_inner,
        },
    }
    if cfg.kappa:
        report["spectrum"] = _kappa(a, level)
    report["timings"] = {"load": t_load, "setup": t_setup, "solve": rep.timings.get("solve", 0.0)}
    report = _strip_timings(report, cfg.timings)
    _write_json(cfg.report, report)
    if cfg.history:
        rep.write_history(cfg.history)
    if cfg.layout_dump:
        level.layout.dump(cfg.layout_dump)
    if cfg.diagnostics and level.splittings is not None:
        write_diagnostics(level.splittings, cfg.diagnostics)
    status = "converged" if rep.converged else f"not converged ({rep.status})"
    inner = f", inner avg {rep.average_inner:.1f}" if rep.average_inner is not None else ""
    print(
        f"{source}: n={a.n_rows} n_C={level.n_coarse} {cfg.variant} {method}: {status} "
        f"after {rep.iterations} iterations, residual {rep.final_residual:.3e}{inner}",
        file=out,
    )
    return EXIT_OK if rep.converged else EXIT_DIVERGED


def run_verify(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    a, source = load_matrix(cfg)
    if a.n_rows != a.n_cols:
        raise InputError("matrix is not square")
    wanted = set(cfg.checks)
    results: list[checks.Check] = []
    skipped: dict[str, str] = {}
    if "symmetry" in wanted:
        results.append(checks.check_symmetry(a))
    graph = AdjacencyGraph.from_matrix(a)
    n_sub = min(cfg.subdomains[0], a.n_rows)
    layout = build_layout(graph, partition_graph(graph, n_sub, seed=cfg.seed))
    spd = checks.check_spd_precheck(a, layout)
    if "spd" in wanted:
        results.append(spd)
    if "layout" in wanted:
        results.append(checks.check_layout(graph, layout))
    if "pou" in wanted:
        results += [checks.check_partition_of_unity(layout, s) for s in ("boolean", "multiplicity")]
    deeper = wanted & {"spsd", "sqrt", "sum", "pencil", "coarse", "tau", "bound"}
    if deeper and not spd.passed:
        for name in sorted(deeper):
            skipped[name] = "SPD pre-check failed"
    elif deeper:
        splittings = build_splittings(a, layout)
        if "spsd" in wanted:
            results += checks.check_splittings(a, layout, splittings)
        if "sqrt" in wanted:
            results.append(checks.check_sqrt_consistency(a, layout, splittings))
        if "sum" in wanted:
            results.append(checks.check_sum_bound(a, layout, splittings))
        if wanted & {"pencil", "coarse", "tau", "bound"}:
            hcfg = cfg.hierarchy(variant="two-additive")
            hcfg.levels = 2
            hcfg.subdomains = [n_sub]
            level = build_hierarchy(a, hcfg)
            if "pencil" in wanted:
                results.append(checks.check_pencils(a, level))
            if "coarse" in wanted:
                results.append(checks.check_coarse(a, level))
            if "tau" in wanted:
                results.append(checks.check_tau_monotonicity(level, p_max=cfg.nev_max))
            if "bound" in wanted:
                if a.n_rows > checks.DENSE_LIMIT:
                    skipped["bound"] = f"n > {checks.DENSE_LIMIT}"
                else:
                    results.append(checks.check_condition_bound(a, level, cfg.tau))
    ok = all(c.passed for c in results)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "config": cfg.echo(),
        "problem": {"source": source, "n": a.n_rows, "nnz": a.nnz, "subdomains": n_sub},
        "checks": [c.as_dict() for c in results],
        "skipped": skipped,
        "passed": ok,
    }
    _write_json(cfg.report, report)
    for c in results:
        measured = "-" if c.measured is None else f"{c.measured:.3e}"
        threshold = "-" if c.threshold is None else f"{c.threshold:.3e}"
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured {measured}, threshold {threshold}", file=out)
    for name, why in sorted(skipped.items()):
        print(f"SKIP {name}: {why}", file=out)
    return EXIT_OK if ok else EXIT_INVARIANT


def compare_rows(cfg: RunConfig, a: CsrMatrix) -> list[dict]:
    b = make_rhs(cfg, a.n_rows)
    taus = cfg.taus or [cfg.tau]
    rows = []
    for variant in cfg.variants:
        for tau in taus if variant.startswith("two") else taus[:1]:
            level = build_hierarchy(a, cfg.hierarchy(variant=variant, tau=tau))
            method = _pick_method(cfg, level)
            limit = min(cfg.max_iter, COMPARE_LIMIT)
            scfg = krylov.SolveConfig(method=method, restart=cfg.restart, rtol=cfg.rtol, max_iter=limit)
            _, rep = krylov.solve(a, level, b, scfg)
            rows.append(
                {
                    "variant": variant,
                    "tau": tau if variant.startswith("two") else None,
                    "n_C": level.n_coarse,
                    "iterations": rep.iterations if rep.converged else None,
                    "inner_average": rep.average_inner,
                }
            )
    return rows


def render_table(rows: list[dict], fmt: str) -> str:
    cols = ["variant", "tau", "n_C", "iterations"]

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:g}"
        return str(v)

    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([cell(r[c]) for c in cols])
        return buf.getvalue()
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
    for r in rows:
        lines.append("| " + " | ".join(cell(r[c]) for c in cols) + " |")
    return "\n".join(lines) + "\n"


def run_compare(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    a, source = load_matrix(cfg)
    _check_matrix(a)
    rows = compare_rows(cfg, a)
    print(f"{source}: blank iterations means no convergence within {COMPARE_LIMIT}", file=out)
    out.write(render_table(rows, "md"))
    if cfg.table:
        with open(cfg.table, "w") as fh:
            fh.write(render_table(rows, "md" if cfg.table.endswith(".md") else "csv"))
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "compare",
        "config": cfg.echo(),
        "problem": {"source": source, "n": a.n_rows, "nnz": a.nnz},
        "limit": COMPARE_LIMIT,
        "rows": rows,
    }
    _write_json(cfg.report, report)
    return EXIT_OK


def run_spectrum(cfg: RunConfig, out=None) -> int:
    """Condition numbers of one-level ASM and two-level additive against the
    theoretical bound, plus the local eigenvalues behind the coarse space."""
    out = out or sys.stdout
    a, source = load_matrix(cfg)
    _check_matrix(a)
    mode = "dense" if a.n_rows <= checks.DENSE_LIMIT else "lanczos"
    hcfg = cfg.hierarchy(variant="two-additive")
    hcfg.levels = 2
    level = build_hierarchy(a, hcfg)
    N = level.layout.n_subdomains
    k_c = level.coloring.n_colors
    one = krylov.estimate_condition(a, lambda r: _one_level(level, r), a.n_rows, mode=mode)
    two = krylov.estimate_condition(a, lambda r: apply_two_level(level, r), a.n_rows, mode=mode)
    bound = theoretical_bound(k_c, N, cfg.tau)
    k_m_est = estimate_multiplicity(a, level.layout, level.splittings, seed=cfg.seed)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "spectrum",
        "config": cfg.echo(),
        "problem": {"source": source, "n": a.n_rows, "nnz": a.nnz},
        "mode": mode,
        "subdomains": N,
        "k_c": k_c,
        "k_m_bound": N,
        "k_m_estimate": k_m_est,
        "n_C": level.n_coarse,
        "bound": bound,
        "asm": {"lambda_min": one[0], "lambda_max": one[1], "kappa": one[2]},
        "two_additive": {"lambda_min": two[0], "lambda_max": two[1], "kappa": two[2]},
        "bound_holds": bool(two[2] <= bound),
    }
    _write_json(cfg.report, report)
    if cfg.eigs_csv:
        with open(cfg.eigs_csv, "w") as fh:
            fh.write("subdomain,index,lambda,selected\n")
            for i, basis in enumerate(level.bases):
                for j, lam in enumerate(basis.eigenvalues):
                    fh.write(f"{i + 1},{j + 1},{lam:.17g},{int(j < basis.n_selected)}\n")
    print(
        f"{source}: N={N} k_c={k_c} n_C={level.n_coarse} kappa(ASM)={one[2]:.4g} "
        f"kappa(additive)={two[2]:.4g} bound={bound:.4g} ({mode})",
        file=out,
    )
    return EXIT_OK


def _one_level(level, r):
    from .schwarz import apply_one_level

    return apply_one_level(level, r, "asm")


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("problem")
    g.add_argument("--config", help="key = value settings file; flags override it")
    g.add_argument("--matrix", help="Matrix Market file (real, symmetric or general)")
    g.add_argument("--gen", help="generated problem, e.g. laplace2d:64x64[:jump=1e6], tridiag:1024")
    g.add_argument("--rhs", help="random (default, uniform in [-1,1]), ones, or a vector file")
    g.add_argument("--rhs-seed", help="seed of the random right-hand side (default 42)")
    h = common.add_argument_group("preconditioner")
    h.add_argument("--subdomains", help="subdomains per level, comma separated (default 16)")
    h.add_argument("--levels", help="number of levels, or 'auto' (default 2)")
    h.add_argument("--tau", help="eigenvalue threshold: keep lambda > 1/tau (default 10)")
    h.add_argument("--nev-max", help="cap on eigenvectors per subdomain, or 'none' (default 20)")
    h.add_argument("--variant", choices=VARIANTS, help="preconditioner (default two-deflated)")
    h.add_argument("--nested-variant", choices=VARIANTS, help="variant on nested levels (default two-deflated)")
    h.add_argument("--pou", choices=("boolean", "multiplicity"), help="partition of unity (default boolean)")
    h.add_argument("--direct-threshold", help="largest coarse size solved directly with levels=auto (default 4000)")
    h.add_argument("--seed", help="partitioner seed (default 0)")
    s = common.add_argument_group("solver")
    s.add_argument("--method", choices=("auto", "pcg", "gmres", "fgmres"), help="outer Krylov method (default auto)")
    s.add_argument("--rtol", help="outer relative residual tolerance (default 1e-8)")
    s.add_argument("--inner-rtol", help="tolerance of nested coarse solves (default 1e-4)")
    s.add_argument("--restart", help="GMRES restart length (default 30)")
    s.add_argument("--max-iter", help="outer iteration budget (default 1000)")
    o = common.add_argument_group("output")
    o.add_argument("--report", help="write a JSON report to this path")
    o.add_argument("--timings", action="store_const", const=True, help="include wall-clock times in the report")
    o.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="algschwarz", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", parents=[common], help="build the preconditioner and solve")
    p.add_argument("--kappa", action="store_const", const=True, help="estimate the condition number of M A")
    p.add_argument("--history", help="residual history CSV")
    p.add_argument("--layout-dump", help="subdomain index sets (1-based text)")
    p.add_argument("--diagnostics", help="per-subdomain splitting diagnostics CSV")
    p = sub.add_parser("verify", parents=[common], help="run the invariant checks")
    p.add_argument("--checks", help=f"comma separated subset of: {','.join(ALL_CHECKS)}")
    p = sub.add_parser("compare", parents=[common], help="iteration table over variants and tau values")
    p.add_argument("--variants", help="comma separated variants (default ras,two-deflated)")
    p.add_argument("--taus", help="comma separated tau values for two-level variants")
    p.add_argument("--table", help="write the table (.md for Markdown, otherwise CSV)")
    p = sub.add_parser("spectrum", parents=[common], help="condition numbers against the theoretical bound")
    p.add_argument("--eigs-csv", help="per-subdomain local eigenvalues CSV")
    return parser


COMMANDS = {"solve": run_solve, "verify": run_verify, "compare": run_compare, "spectrum": run_spectrum}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        cfg = make_config(args)
        return COMMANDS[args.command](cfg)
    except (InputError, MatrixMarketError, ClosureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NotSPDError, EigenSolveError, SplittingError) as exc:
        print(f"error: input is not SPD: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HierarchyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

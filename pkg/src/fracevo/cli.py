"""Command-line experiment harness.

Subcommands::

    fracevo solve        --config CFG [--out-dir DIR] [--seed S] [--strict]
    fracevo compare      --config CFG [--out-dir DIR] [--seed S] [--strict]
    fracevo bounds-check --config CFG [--out-dir DIR] [--seed S] [--strict]
    fracevo ml-eval ALPHA BETA Z

Exit status is 0 when every enabled check passes, 1 for configuration
errors and 2 for failed checks (or a non-convergent Mittag-Leffler
evaluation in ``ml-eval``).
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .closedform import (commutator, solve_classical_nonpermutable, solve_nonpermutable,
                         solve_permutable)
from .errors import ConfigError, NonConvergence, NotPermutable
from .families import check_envelope
from .grid import TimeGrid, Trajectory
from .mlfunc import FractionalOrder, ml_scalar
from .operators import Forcing, GrowthEnvelope, SeriesControl, TimeDependentOperator
from .oracle import IvpSpec, adams_solve, residual
from .perturb import resolve_control, solve_ivp, verify_growth_bounds

SOLVERS = ("series", "nonpermutable", "permutable", "classical", "oracle")

EXAMPLE_CONFIG = """\
[problem]
alpha = 1.5
T = 1.0
N = 256
A = [[0, 1], [-2, 0]]
x = [1, 0]
y = [0, 1]

[B]
kind = constant
value = [[0, 0], [1, 0]]

[f]
kind = zero

[solvers]
use = series, nonpermutable, oracle

[tolerances]
series_tol = 1e-12
quad_assert_tol = 1e-3
cross_tol = 1e-4
"""


@dataclass
class ExperimentConfig:
    alpha: float
    grid: TimeGrid
    A: np.ndarray
    B: TimeDependentOperator
    f: Forcing
    x: np.ndarray
    y: np.ndarray
    solvers: List[str]
    series_tol: float = 1e-12
    quad_assert_tol: float = 1e-3
    cross_tol: float = 1e-4
    bound_tol: float = 1e-9
    envelope: Optional[GrowthEnvelope] = None
    outputs: Dict[str, str] = field(default_factory=dict)

    @property
    def spec(self) -> IvpSpec:
        return IvpSpec(self.alpha, self.A, self.B, self.f, self.x, self.y, self.grid)

    @property
    def control(self) -> SeriesControl:
        return SeriesControl(tol=self.series_tol, envelope=self.envelope)


# ------------------------------------------------------------------ parsing

def _literal(section, key, raw, rng, shape_hint=None):
    raw = raw.strip()
    if raw.startswith("random:"):
        try:
            n = int(raw.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"bad random size in {raw!r}") from None
        if rng is None:
            raise ConfigError(f"{section}.{key}", "random values need --seed")
        shape = (n, n) if shape_hint == "matrix" else (n,)
        return 0.5 * rng.standard_normal(shape)
    try:
        val = ast.literal_eval(raw)
        arr = np.asarray(val, dtype=float)
    except (ValueError, SyntaxError, TypeError):
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r} as a number or list") from None
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{section}.{key}", "values must be finite")
    return arr


def _get(cp, section, key, default=None, required=False):
    if cp.has_option(section, key):
        return cp.get(section, key)
    if required:
        raise ConfigError(f"{section}.{key}", "missing")
    return default


def _samples_file(section, path, base, ncols):
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    try:
        data = np.loadtxt(p, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{section}.file", f"cannot read samples: {exc}") from None
    if data.shape[1] != 1 + ncols:
        raise ConfigError(f"{section}.file", f"expected {1 + ncols} columns (t then values), "
                                             f"got {data.shape[1]}")
    return data[:, 0], data[:, 1:]


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    """Parse an INI experiment description; every error names its field."""
    path = Path(path)
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed file: {exc}") from None
    if not cp.has_section("problem"):
        raise ConfigError("problem", "section missing")
    rng = np.random.default_rng(seed) if seed is not None else None
    base = path.parent

    def num(key, cast=float):
        raw = _get(cp, "problem", key, required=True)
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"problem.{key}", f"not a valid {cast.__name__}: {raw!r}") from None

    alpha = num("alpha")
    try:
        FractionalOrder(alpha)
    except ValueError as exc:
        raise ConfigError("problem.alpha", str(exc)) from None
    T = num("T")
    N = num("N", int)
    if not T > 0:
        raise ConfigError("problem.T", "must be positive")
    if N < 8:
        raise ConfigError("problem.N", "must be at least 8")
    grid = TimeGrid(T, N)
    A = _literal("problem", "A", _get(cp, "problem", "A", required=True), rng, "matrix")
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError("problem.A", f"must be a square matrix, got shape {A.shape}")
    n = A.shape[0]

    def vec(key):
        v = np.atleast_1d(_literal("problem", key, _get(cp, "problem", key, required=True), rng))
        if v.shape != (n,):
            raise ConfigError(f"problem.{key}", f"must have length {n}, got shape {v.shape}")
        return v

    x, y = vec("x"), vec("y")

    # perturbation B
    kind = _get(cp, "B", "kind", "zero").strip()
    if kind == "zero":
        B = TimeDependentOperator.zero(n)
    elif kind == "constant":
        Bv = _literal("B", "value", _get(cp, "B", "value", required=True), rng, "matrix")
        if Bv.shape != (n, n):
            raise ConfigError("B.value", f"must be {n}x{n}, got shape {Bv.shape}")
        B = TimeDependentOperator.constant(Bv)
    elif kind == "polynomial":
        co = _literal("B", "coeffs", _get(cp, "B", "coeffs", required=True), rng)
        if co.ndim != 3 or co.shape[1:] != (n, n):
            raise ConfigError("B.coeffs", f"must be a list of {n}x{n} matrices")
        B = TimeDependentOperator.polynomial(list(co))
    elif kind == "samples":
        t, vals = _samples_file("B", _get(cp, "B", "file", required=True), base, n * n)
        try:
            B = TimeDependentOperator.tabulated(t, vals.reshape(-1, n, n))
        except ValueError as exc:
            raise ConfigError("B.file", str(exc)) from None
    else:
        raise ConfigError("B.kind", f"unknown kind {kind!r}")

    kind = _get(cp, "f", "kind", "zero").strip()
    if kind == "zero":
        f = Forcing.zero(n)
    elif kind == "constant":
        c = np.atleast_1d(_literal("f", "value", _get(cp, "f", "value", required=True), rng))
        if c.shape != (n,):
            raise ConfigError("f.value", f"must have length {n}")
        f = Forcing.constant(c)
    elif kind == "polynomial":
        co = _literal("f", "coeffs", _get(cp, "f", "coeffs", required=True), rng)
        if co.ndim != 2 or co.shape[1] != n:
            raise ConfigError("f.coeffs", f"must be a list of length-{n} vectors")
        f = Forcing.polynomial(co)
    elif kind == "samples":
        t, vals = _samples_file("f", _get(cp, "f", "file", required=True), base, n)
        try:
            f = Forcing.tabulated(t, vals)
        except ValueError as exc:
            raise ConfigError("f.file", str(exc)) from None
    else:
        raise ConfigError("f.kind", f"unknown kind {kind!r}")

    for tf, name in ((B, "B"), (f, "f")):
        if tf.kind == "tabulated" and (tf._times[0] > 0 or tf._times[-1] < T):
            raise ConfigError(f"{name}.file", f"samples must cover [0, {T:g}]")

    use = [s.strip() for s in _get(cp, "solvers", "use", "series, oracle").split(",") if s.strip()]
    if not use:
        raise ConfigError("solvers.use", "no solver requested")
    for s in use:
        if s not in SOLVERS:
            raise ConfigError("solvers.use", f"unknown solver {s!r} (choose from {', '.join(SOLVERS)})")
    if len(set(use)) != len(use):
        raise ConfigError("solvers.use", "duplicate solver")
    constant_B = B.is_constant
    for s in use:
        if s in ("nonpermutable", "permutable", "classical") and not constant_B:
            raise ConfigError("solvers.use", f"solver {s!r} needs a constant B")
        if s == "classical" and alpha != 2.0:
            raise ConfigError("solvers.use", "solver 'classical' needs alpha = 2")
    if "permutable" in use:
        _, ok = commutator(A, B.eval(0.0))
        if not ok:
            raise ConfigError("solvers.use", str(NotPermutable(
                "solver 'permutable' requested but A and B do not commute")))

    tols = {}
    for key, default in (("series_tol", 1e-12), ("quad_assert_tol", 1e-3),
                         ("cross_tol", 1e-4), ("bound_tol", 1e-9)):
        raw = _get(cp, "tolerances", key, None)
        try:
            tols[key] = default if raw is None else float(raw)
        except ValueError:
            raise ConfigError(f"tolerances.{key}", f"not a number: {raw!r}") from None
        if not tols[key] > 0:
            raise ConfigError(f"tolerances.{key}", "must be positive")

    env = None
    if cp.has_section("envelope"):
        try:
            env = GrowthEnvelope(float(_get(cp, "envelope", "M", required=True)),
                                 float(_get(cp, "envelope", "omega", required=True)))
        except ValueError as exc:
            raise ConfigError("envelope", str(exc)) from None

    outputs = {"solution": "solution_{solver}.csv", "residual": "residual.csv",
               "bounds": "bounds.csv", "report": "report.txt"}
    if cp.has_section("outputs"):
        for key in outputs:
            outputs[key] = _get(cp, "outputs", key, outputs[key])
    return ExperimentConfig(alpha, grid, A, B, f, x, y, use, envelope=env, outputs=outputs, **tols)


# ------------------------------------------------------------------- running

def run_solver(name: str, cfg: ExperimentConfig) -> Trajectory:
    args = (cfg.A, cfg.B.eval(0.0), cfg.f, cfg.x, cfg.y, cfg.grid, cfg.control)
    if name == "series":
        return solve_ivp(cfg.alpha, cfg.A, cfg.B, cfg.f, cfg.x, cfg.y, cfg.grid, cfg.control)
    if name == "nonpermutable":
        return solve_nonpermutable(cfg.alpha, *args)
    if name == "permutable":
        return solve_permutable(cfg.alpha, *args)
    if name == "classical":
        return solve_classical_nonpermutable(*args)
    if name == "oracle":
        return adams_solve(cfg.spec)
    raise ValueError(name)


def _threads():
    raw = os.environ.get("FRACEVO_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return os.cpu_count() or 1


def _run_all(cfg: ExperimentConfig, parallel: bool) -> Dict[str, Trajectory]:
    if parallel and len(cfg.solvers) > 1:
        with ThreadPoolExecutor(max_workers=min(_threads(), len(cfg.solvers))) as pool:
            sols = list(pool.map(lambda s: run_solver(s, cfg), cfg.solvers))
    else:
        sols = [run_solver(s, cfg) for s in cfg.solvers]
    return dict(zip(cfg.solvers, sols))


def _write_csv(path: Path, header, columns):
    data = np.column_stack(columns)
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"refusing to write non-finite values to {path}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow(["%.17g" % v for v in row])


class Checks:
    """Collects named pass/fail assertions and warnings for the report."""

    def __init__(self, strict: bool):
        self.strict = strict
        self.failed: List[str] = []
        self.lines: List[str] = []

    def check(self, name: str, ok: bool, detail: str):
        self.lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not ok:
            self.failed.append(name)

    def warn(self, name: str, detail: str):
        self.lines.append(f"[WARN] {name}: {detail}")
        if self.strict:
            self.failed.append(name)


def _bounds(cfg: ExperimentConfig, out: Path, checks: Checks, report: List[str]):
    ctl = resolve_control(cfg.alpha, cfg.A, cfg.B, cfg.grid, cfg.control)
    if cfg.envelope is not None:
        bad = check_envelope(cfg.alpha, cfg.A, cfg.grid, cfg.envelope)
        if bad.size:
            checks.warn("envelope", f"supplied (M, omega) fails at {bad.size} node(s)")
    rep = verify_growth_bounds(cfg.alpha, cfg.A, cfg.B, cfg.grid, ctl,
                               tol_numeric=cfg.bound_tol, raise_on_violation=False)
    m = rep.margins
    _write_csv(out / cfg.outputs["bounds"],
               ["s", "norm_C", "bound_C", "margin_C", "norm_S", "bound_S", "margin_S"],
               [rep.s, rep.norms["C"], rep.bounds["C"], m["C"],
                rep.norms["S"], rep.bounds["S"], m["S"]])
    report.append(f"envelope: M = {ctl.envelope.M:.17g}, omega = {ctl.envelope.omega:.17g}, "
                  f"K_t = {ctl.K_t:.17g}")
    for k in ("C", "S", "C-C0", "S-S0"):
        report.append(f"bound {k}: min margin {m[k].min():.6e}")
    checks.check("growth_bounds", rep.min_margin() >= -cfg.bound_tol,
                 f"min margin {rep.min_margin():.3e} (tolerance {cfg.bound_tol:g})")


def _deviations(sols, cfg, checks, report):
    names = list(sols)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = float(np.max(np.abs(sols[a].values - sols[b].values)))
            report.append(f"max deviation {a} vs {b}: {d:.6e}")
            checks.check(f"cross_{a}_{b}", d <= cfg.cross_tol, f"{d:.3e} <= {cfg.cross_tol:g}")


def _series_info(sols, report):
    for name, sol in sols.items():
        info = sol.info
        if name == "series":
            for part in ("cosine", "sine", "particular"):
                report.append(f"series {part}: {info[f'terms_{part}']} terms, "
                              f"certified remainder {info[f'remainder_{part}']:.3e}")
        elif "terms" in info:
            report.append(f"{name}: {info['terms']} series terms")


def _finish(out: Path, cfg: ExperimentConfig, command: str, checks: Checks, report: List[str]) -> int:
    lines = [f"fracevo {command}", f"alpha = {cfg.alpha:g}, T = {cfg.grid.T:g}, N = {cfg.grid.N}, "
             f"dim = {cfg.A.shape[0]}", f"solvers: {', '.join(cfg.solvers)}", ""]
    lines += report + [""] + checks.lines
    status = "FAILED: " + ", ".join(checks.failed) if checks.failed else "all checks passed"
    lines.append(status)
    (out / cfg.outputs["report"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(checks.lines))
    print(status)
    return 2 if checks.failed else 0


def cmd_solve(cfg: ExperimentConfig, out: Path, strict: bool, command="solve") -> int:
    checks, report = Checks(strict), []
    sols = _run_all(cfg, parallel=command == "compare")
    t = cfg.grid.nodes
    n = cfg.A.shape[0]
    for name, sol in sols.items():
        _write_csv(out / cfg.outputs["solution"].format(solver=name),
                   ["t"] + [f"u_{i + 1}" for i in range(n)], [t, sol.values])
    _series_info(sols, report)
    if command == "solve":
        spec = cfg.spec
        res = {name: residual(sol, spec).values for name, sol in sols.items()}
        _write_csv(out / cfg.outputs["residual"], ["t"] + [f"residual_{k}" for k in res],
                   [t] + list(res.values()))
        for name, r in res.items():
            rmax = float(r[1:-1].max())
            report.append(f"residual {name}: max interior {rmax:.6e}")
            checks.check(f"residual_{name}", rmax <= cfg.quad_assert_tol,
                         f"{rmax:.3e} <= {cfg.quad_assert_tol:g}")
        _bounds(cfg, out, checks, report)
    _deviations(sols, cfg, checks, report)
    return _finish(out, cfg, command, checks, report)


def cmd_bounds(cfg: ExperimentConfig, out: Path, strict: bool) -> int:
    checks, report = Checks(strict), []
    _bounds(cfg, out, checks, report)
    return _finish(out, cfg, "bounds-check", checks, report)


def cmd_ml_eval(alpha, beta, z, tol) -> int:
    try:
        val, info = ml_scalar(alpha, beta, z, tol=tol, full_output=True)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"E_{{{alpha:g},{beta:g}}}({z:g}) = {val:.17g}")
    print(f"terms = {info.terms}, truncation bound = {info.remainder_bound:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracevo", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "run solvers, residuals, bounds and cross-checks"),
                        ("compare", "run two or more solvers in parallel and diff them"),
                        ("bounds-check", "evaluate the growth-bound theorems on the grid")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="INI experiment description")
        sp.add_argument("--out-dir", default=".", help="directory for CSV and report output")
        sp.add_argument("--seed", type=int, default=None, help="seed for random:<n> entries")
        sp.add_argument("--strict", action="store_true", help="treat warnings as failures")
    sp = sub.add_parser("ml-eval", help="evaluate E_{alpha,beta}(z)")
    # let arguments such as -1e4 through as positionals
    sp._negative_number_matcher = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")
    sp.add_argument("alpha", type=float)
    sp.add_argument("beta", type=float)
    sp.add_argument("z", type=float)
    sp.add_argument("--tol", type=float, default=1e-13)
    sub.add_parser("example-config", help="print an example configuration")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "ml-eval":
        return cmd_ml_eval(args.alpha, args.beta, args.z, args.tol)
    if args.command == "example-config":
        sys.stdout.write(EXAMPLE_CONFIG)
        return 0
    try:
        cfg = load_config(args.config, args.seed)
        if args.command == "compare" and len(cfg.solvers) < 2:
            raise ConfigError("solvers.use", "compare needs at least two solvers")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "bounds-check":
            return cmd_bounds(cfg, out, args.strict)
        return cmd_solve(cfg, out, args.strict, args.command)
    except NonConvergence as exc:
        print(f"assertion failed: series_convergence: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

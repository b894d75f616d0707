"""Command-line entry point, config parsing and artifact persistence.

Config grammar: one ``section.key = value`` per line, ``#`` starts a
comment, vectors are bracketed (``[20, 20]``), booleans are
``true``/``false``.  Example::

    problem.alpha = 2
    problem.dim = 1
    problem.L = 40
    problem.M = 64
    problem.potential = const:1
    problem.gamma = zero
    problem.q = 3
    problem.nonlinearity = power:p=4
    solver.n_starts = 4
    run.mode = solve
"""
from __future__ import annotations

import argparse
import hashlib
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .certificates import CheckResult, HypothesisError
from .model import GammaWeight, Problem, critical_exponent, parse_nonlinearity, parse_periodic, parse_potential
from .solve import (
    MultiStartResult,
    SolverConfig,
    boundary_smallness,
    coercive_diagnostics,
    compare_c_vs_cper,
    multi_start,
)
from .torus_spectral import Field, TorusGrid, check_alpha
from .verify import check_pv_vs_spectral, run_all

MODES = ("solve", "verify", "compare-cper", "coercive", "pv-check")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key:
            where = f"{key}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class ProblemSpec:
    alpha: float = 2.0
    dim: int = 1
    L: int = 40
    M: int = 64
    potential: str = "const:1"
    potential_loc: str = "zero"
    center: Optional[tuple] = None
    gamma: str = "zero"
    q: float = 3.0
    nonlinearity: str = "power:p=4"
    p: Optional[float] = None
    b: str = "const:1"


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mode: str = "solve"
    out: str = "out"
    seed: int = 0

    @property
    def p(self) -> float:
        if self.problem.p is not None:
            return float(self.problem.p)
        return parse_nonlinearity(self.problem.nonlinearity).p

    def canonical_text(self) -> str:
        """Stable serialization used for the config hash."""
        lines = [f"problem.{k} = {v!r}" for k, v in sorted(asdict(self.problem).items())]
        lines += [f"solver.{k} = {v!r}" for k, v in sorted(asdict(self.solver).items())]
        lines += [f"run.mode = {self.mode!r}", f"run.seed = {self.seed!r}"]
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def build_problem(self) -> Problem:
        ps = self.problem
        try:
            grid = TorusGrid(ps.dim, ps.L, ps.M)
            nl_spec = ps.nonlinearity if ps.p is None or "p=" in ps.nonlinearity else f"{ps.nonlinearity}:p={ps.p}"
            nl = parse_nonlinearity(nl_spec, ps.b)
            pot = parse_potential(ps.potential, ps.potential_loc, ps.center)
            gamma = GammaWeight(parse_periodic(ps.gamma), ps.q)
            return Problem(grid, ps.alpha, pot, gamma, nl)
        except HypothesisError as err:
            raise ConfigError(f"{err} (witness {err.witness})", "problem") from err
        except ValueError as err:
            raise ConfigError(str(err), "problem") from err


_SCHEMA: dict[str, dict[str, type]] = {
    "problem": {"alpha": float, "dim": int, "L": int, "M": int, "potential": str, "potential_loc": str, "center": tuple, "gamma": str, "q": float, "nonlinearity": str, "p": float, "b": str},
    "solver": {f.name: f.type for f in fields(SolverConfig)},
    "run": {"mode": str, "out": str, "seed": int},
}
_TYPES = {"int": int, "float": float, "bool": bool, "Optional[float]": float, "Optional[bool]": bool}
for _k, _t in list(_SCHEMA["solver"].items()):
    _SCHEMA["solver"][_k] = _TYPES.get(_t, _t) if isinstance(_t, str) else _t


def _convert(raw: str, typ: type, key: str, line: int):
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if typ is int:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if typ is float:
            return float(raw)
        if typ is tuple:
            if not (raw.startswith("[") and raw.endswith("]")):
                raise ValueError
            inner = raw[1:-1].strip()
            return tuple(float(t) for t in inner.split(",")) if inner else ()
        return raw
    except ValueError:
        raise ConfigError(f"expected {typ.__name__}, got {raw!r}", key, line) from None


def parse_config(text: str) -> RunConfig:
    """Parse the flat config format; raise :class:`ConfigError` naming the offending key."""
    values: dict[str, dict[str, Any]] = {s: {} for s in _SCHEMA}
    where: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'section.key = value'", None, lineno)
        key, raw = (t.strip() for t in body.split("=", 1))
        section, _, name = key.partition(".")
        if section not in _SCHEMA or name not in _SCHEMA[section]:
            raise ConfigError("unknown key", key, lineno)
        if name in values[section]:
            raise ConfigError("duplicate key", key, lineno)
        values[section][name] = _convert(raw, _SCHEMA[section][name], key, lineno)
        where[key] = lineno

    def fail(msg, key):
        raise ConfigError(msg, key, where.get(key))

    prob = values["problem"]
    if "alpha" in prob:
        try:
            check_alpha(prob["alpha"])
        except ValueError as err:
            fail(str(err), "problem.alpha")
    ps = ProblemSpec(**prob)
    if ps.dim < 1:
        fail("dim must be positive", "problem.dim")
    if ps.L < 1 or ps.M < 2:
        fail("need L >= 1 and M >= 2", "problem.L" if ps.L < 1 else "problem.M")
    if ps.center is not None and len(ps.center) != ps.dim:
        fail(f"center needs {ps.dim} components", "problem.center")
    try:
        p = ps.p if ps.p is not None else parse_nonlinearity(ps.nonlinearity).p
    except (ValueError, HypothesisError) as err:
        fail(str(err), "problem.nonlinearity")
    if ps.p is not None and "p=" in ps.nonlinearity and parse_nonlinearity(ps.nonlinearity).p != ps.p:
        fail("p given twice with different values", "problem.p")
    if not ps.q < p:
        fail(f"requires q < p (q={ps.q:g}, p={p:g})", "problem.q")
    if not ps.q > 2:
        fail(f"requires q > 2 (q={ps.q:g})", "problem.q")
    crit = critical_exponent(ps.dim, ps.alpha)
    if not p < crit:
        fail(f"requires p < 2N/(N-alpha) = {crit:g}", "problem.p" if ps.p is not None else "problem.nonlinearity")

    run = values["run"]
    mode = run.get("mode", "solve")
    if mode not in MODES:
        fail(f"mode must be one of {', '.join(MODES)}", "run.mode")
    seed = run.get("seed", 0)
    sv = dict(values["solver"])
    sv.setdefault("seed", seed)
    try:
        solver = SolverConfig(**sv)
    except ValueError as err:
        raise ConfigError(str(err), "solver") from err
    return RunConfig(ps, solver, mode, run.get("out", "out"), seed)


# --------------------------------------------------------------------------
# field persistence


def _header(grid: TorusGrid, alpha: float, config_hash: str) -> str:
    return f"# nehari-fs field d={grid.dim} L={grid.side_length} M={grid.points_per_cell} alpha={alpha!r} config_hash={config_hash}"


def save_field(u: Field, path, alpha: float, config_hash: str = "none") -> None:
    """CSV with coordinate columns then the value; 17 significant digits."""
    g = u.grid
    cols = [c.ravel() for c in g.coords] + [u.values.ravel()]
    names = [f"x{i + 1}" for i in range(g.dim)] + ["u"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header(g, alpha, config_hash) + "\n")
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, np.column_stack(cols), fmt="%.17g", delimiter=",")


def load_field(path, grid: TorusGrid | None = None, alpha: float | None = None) -> tuple[Field, dict]:
    """Read a field written by :func:`save_field`; checks the header against ``grid``/``alpha``."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# nehari-fs field"):
        raise ValueError(f"{path}: missing field header")
    meta = dict(tok.split("=", 1) for tok in lines[0].split()[3:])
    try:
        d, L, M, a = int(meta["d"]), int(meta["L"]), int(meta["M"]), float(meta["alpha"])
    except (KeyError, ValueError):
        raise ValueError(f"{path}: malformed header {lines[0]!r}") from None
    if grid is not None and (grid.dim, grid.side_length, grid.points_per_cell) != (d, L, M):
        raise ValueError(f"{path}: grid mismatch (file d={d} L={L} M={M})")
    if alpha is not None and alpha != a:
        raise ValueError(f"{path}: alpha mismatch (file {a!r}, expected {alpha!r})")
    g = grid or TorusGrid(d, L, M)
    data = np.loadtxt(lines[2:], delimiter=",", ndmin=2) if len(lines) > 2 else np.empty((0, d + 1))
    if data.shape != (g.n**d, d + 1):
        raise ValueError(f"{path}: expected {g.n ** d} rows of {d + 1} columns, got {data.shape}")
    meta = {"d": d, "L": L, "M": M, "alpha": a, "config_hash": meta.get("config_hash", "")}
    return Field(g, data[:, -1].reshape(g.shape)), meta


# --------------------------------------------------------------------------
# runs


class _Writer:
    """Serializes all artifact writes for one run."""

    def __init__(self, out: Path, cfg: RunConfig):
        self.out = out
        self.cfg = cfg
        out.mkdir(parents=True, exist_ok=True)

    def header(self) -> str:
        return f"# config_hash={self.cfg.hash} mode={self.cfg.mode}\n"

    def table(self, name: str, columns: Sequence[str], rows) -> None:
        with open(self.out / name, "w", encoding="utf-8") as fh:
            fh.write(self.header())
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    def lines(self, name: str, lines: Sequence[str]) -> None:
        with open(self.out / name, "w", encoding="utf-8") as fh:
            fh.write(self.header())
            for ln in lines:
                fh.write(ln + "\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _plot_data(w: _Writer, u: Field, prob: Problem) -> None:
    g = u.grid
    mid = tuple([g.n // 2] * (g.dim - 1))
    x = g.axis
    line = u.values[(slice(None),) + mid] if g.dim > 1 else u.values
    V = prob.V[(slice(None),) + mid] if g.dim > 1 else prob.V
    w.table("profile.csv", ["x", "u", "abs_u"], zip(x, line, np.abs(line)))
    w.table("potential.csv", ["x", "V", "u"], zip(x, V, line))
    xi = g.xi_abs.ravel()
    mag = np.abs(u.spectrum).ravel()
    order = np.argsort(xi, kind="stable")
    xi, mag = xi[order], mag[order]
    keys, start = np.unique(xi, return_index=True)
    peak = np.maximum.reduceat(mag, start)
    w.table("spectrum.csv", ["abs_xi", "abs_u_hat"], zip(keys, peak))


def _solution_artifacts(w: _Writer, res: MultiStartResult, prob: Problem, summary: dict, prefix: str = "") -> None:
    summary[prefix + "n_starts"] = len(res.reports) + len(res.failed)
    summary[prefix + "n_converged"] = len(res.reports)
    summary[prefix + "n_orbits"] = len(res.classes)
    summary[prefix + "orbit_gap"] = res.gap
    ts = res.tracker.summary()
    summary[prefix + "beta_sample"] = ts["beta_sample"]
    summary[prefix + "tracker_violations"] = ts["violations"]
    if res.ground is None:
        summary[prefix + "J_final"] = math.nan
        return
    rep = res.ground
    summary[prefix + "J_final"] = rep.J_final
    summary[prefix + "residual"] = rep.residual_final
    summary[prefix + "grad"] = rep.grad_final
    summary[prefix + "iterations"] = rep.iterations
    tstar = np.asarray(rep.t_star_trace)
    summary[prefix + "t_star_min"] = float(tstar.min())
    summary[prefix + "t_star_max"] = float(tstar.max())
    summary[prefix + "t_star_mean"] = float(tstar.mean())
    summary[prefix + "coercive_on_N"] = rep.coercive_ok
    if prefix:
        return
    save_field(rep.representative, w.out / "solution.csv", prob.alpha, w.cfg.hash)
    w.table(
        "trace.csv",
        ["iter", "J", "residual", "l2"],
        ((i, J, r, l2) for i, (J, r, l2) in enumerate(zip(rep.energy_trace, rep.residual_trace, rep.l2_trace))),
    )
    _plot_data(w, rep.representative, prob)


def _cert_summary(summary: dict, results: Sequence[CheckResult]) -> Optional[str]:
    first = None
    for r in results:
        summary[f"check.{r.name}"] = r.status
        if r.status == "fail" and first is None:
            first = r.name
    return first


def run(cfg: RunConfig, stream=None) -> int:
    """Execute ``cfg.mode``, write artifacts to ``cfg.out``; return the exit status."""
    stream = stream or sys.stdout
    w = _Writer(Path(cfg.out), cfg)
    summary: dict[str, Any] = {"mode": cfg.mode, "config_hash": cfg.hash, "seed": cfg.seed}
    ok = False
    failed: Optional[str] = None
    try:
        if cfg.mode == "pv-check":
            r = check_pv_vs_spectral()
            lines = [p.line() for p in r.details.get("parts", [])] + [r.line()]
            w.lines("checks.txt", lines)
            print("\n".join(lines), file=stream)
            failed = _cert_summary(summary, [r])
            ok = r.passed
        else:
            prob = cfg.build_problem()
            for name, cert in prob.certificates.items():
                summary[f"cert.{name}"] = cert.status
            if cfg.mode == "solve":
                res = multi_start(prob, cfg.solver)
                _solution_artifacts(w, res, prob, summary)
                ok = res.ground is not None
                failed = None if ok else "no converged start"
            elif cfg.mode == "verify":
                rep = run_all([prob], seed=cfg.seed)
                lines = rep.lines()
                w.lines("checks.txt", lines)
                print("\n".join(lines), file=stream)
                failed = _cert_summary(summary, [r for _, r in rep.entries])
                summary.update({f"n_{k}": v for k, v in rep.summary().items()})
                ok = rep.passed
            elif cfg.mode == "compare-cper":
                r = compare_c_vs_cper(prob, cfg.solver)
                d = r.details or r.witness
                res, res_per = d["runs"]
                _solution_artifacts(w, res, prob, summary)
                _solution_artifacts(w, res_per, prob.strip_localized(), summary, prefix="per.")
                summary["c"] = d["c"]
                summary["c_per"] = d["c_per"]
                summary["c_lt_cper"] = r.passed
                failed = _cert_summary(summary, [r])
                ok = r.passed
            elif cfg.mode == "coercive":
                res = multi_start(prob, cfg.solver)
                _solution_artifacts(w, res, prob, summary)
                if res.ground is None:
                    failed = "no converged start"
                else:
                    checks = [coercive_diagnostics(res.ground, prob), boundary_smallness(res.ground.u)]
                    checks += checks[0].details.get("parts", [])
                    failed = _cert_summary(summary, checks)
                    ok = checks[0].status != "fail" and checks[1].passed
    except ConfigError as err:
        failed = f"config: {err}"
    summary["status"] = "ok" if ok else "failed"
    if failed:
        summary["first_failed"] = failed
    w.lines("summary.txt", [f"{k} = {_fmt(v)}" for k, v in summary.items()])
    print(f"status = {summary['status']}" + (f" (first failed: {failed})" if failed else ""), file=stream)
    if "J_final" in summary:
        print(f"J_final = {_fmt(summary['J_final'])}", file=stream)
    return 0 if ok else 1


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="nehari-fs", description="Nehari-manifold ground states on periodic lattices.")
    ap.add_argument("--config", required=True, help="path to a flat section.key = value config")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    try:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if args.mode:
        cfg = replace(cfg, mode=args.mode)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, solver=replace(cfg.solver, seed=args.seed))
    if args.out:
        cfg = replace(cfg, out=args.out)
    try:
        return run(cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

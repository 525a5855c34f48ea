"""Command-line front end: ``memodiff <command> --config <file> --out <dir>``.

Configs are flat JSON objects. Data files are CSV with 12 significant digits
and carry a ``normalization`` column (``unit-l2``, ``raw`` or ``none`` for
quantities that do not depend on the eigenfunction scale). Run metadata,
including timestamps, goes to ``run.json`` so the CSVs stay byte-stable.

Exit codes: 0 success, 1 solver failure, 2 hypothesis violated, 64 bad config.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bifurcation import hopf_quantities, r_parts, _dbar
from .dynamics import DEFAULT_DT, simulate
from .eigen import normalize, principal_weighted
from .errors import (
    ConfigError,
    DegenerateProfile,
    ExprError,
    HypothesisViolated,
    InstabilityDetected,
    InvalidArgument,
    MemodiffError,
    UnsupportedProfile,
)
from .expr import GrowthProfile, sample_profile
from .grid import Grid1D, integrate, make_grid
from .plotting import heatmap_svg
from .spectrum import DEFAULT_CUTOFF, DEFAULT_M, assemble_linearization, delay_rightmost, find_crossing
from .steady import residual, solve_steady

log = logging.getLogger("memodiff")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_HYPOTHESIS = 2
EXIT_CONFIG = 64

COMMANDS = ("eigen", "steady", "bifurcate", "spectrum", "simulate", "sweep")
SIG_DIGITS = 12
MAX_TRACE_ROWS = 20_000

_REAL_KEYS = ("L", "lambda", "D", "tau", "T", "dt", "tTransient", "tauMax", "cutoff")
_INT_KEYS = ("n", "M", "N")
_SWEEP_KEYS = ("sweep.D", "sweep.tau", "sweep.lambda")
KNOWN_KEYS = frozenset(("m", "bc", "normalization") + _REAL_KEYS + _INT_KEYS + _SWEEP_KEYS)

_REQUIRED = {
    "eigen": (),
    "steady": ("lambda", "D"),
    "bifurcate": (),
    "spectrum": ("lambda", "D"),
    "simulate": ("lambda", "D", "tau"),
    "sweep": (),
}


@dataclass(frozen=True)
class Scenario:
    m: str
    bc: str = "neumann"
    L: float = math.pi
    n: int = 201
    normalization: str = "unit-l2"
    lam: float | None = None
    D: float | None = None
    tau: float | None = None
    T: float | None = None
    dt: float = DEFAULT_DT
    t_transient: float | None = None
    tau_max: float | None = None
    M: int = DEFAULT_M
    N: int = 5
    cutoff: float = DEFAULT_CUTOFF
    sweep: dict = field(default_factory=dict)

    def grid(self) -> Grid1D:
        return make_grid(self.L, self.n, self.bc)

    def profile(self, g: Grid1D) -> GrowthProfile:
        return sample_profile(self.m, g)


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _real(path, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        _fail(path, f"field '{key}': expected a finite real number, got {value!r}")
    return float(value)


def _int(path, key, value):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"field '{key}': expected an integer, got {value!r}")
    return int(value)


def load_scenario(path: str | Path, command: str) -> Scenario:
    """Parse and validate a scenario file; every problem is a ``ConfigError``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        _fail(path, "top level must be a JSON object")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        _fail(path, f"unknown field(s) {', '.join(repr(k) for k in unknown)}")
    if "m" not in raw:
        _fail(path, "field 'm': required")
    if not isinstance(raw["m"], str) or not raw["m"].strip():
        _fail(path, f"field 'm': expected an expression string, got {raw['m']!r}")

    kw = {"m": raw["m"]}
    renames = {"lambda": "lam", "tTransient": "t_transient", "tauMax": "tau_max"}
    for key in _REAL_KEYS:
        if key in raw:
            kw[renames.get(key, key)] = _real(path, key, raw[key])
    for key in _INT_KEYS:
        if key in raw:
            kw[key] = _int(path, key, raw[key])
    for key in ("bc", "normalization"):
        if key in raw:
            if not isinstance(raw[key], str):
                _fail(path, f"field '{key}': expected a string, got {raw[key]!r}")
            kw[key] = raw[key]
    if kw.get("bc", "neumann") not in ("neumann", "dirichlet"):
        _fail(path, f"field 'bc': expected 'neumann' or 'dirichlet', got {kw['bc']!r}")
    if kw.get("normalization", "unit-l2") not in ("unit-l2", "raw"):
        _fail(path, f"field 'normalization': expected 'unit-l2' or 'raw', got {kw['normalization']!r}")

    sweep = {}
    for key in _SWEEP_KEYS:
        if key in raw:
            vals = raw[key]
            if not isinstance(vals, list) or not vals:
                _fail(path, f"field '{key}': expected a nonempty array of reals")
            sweep[key.split(".", 1)[1]] = tuple(_real(path, f"{key}[{i}]", v) for i, v in enumerate(vals))
    kw["sweep"] = sweep

    for key in _REQUIRED[command]:
        if key not in raw:
            _fail(path, f"field '{key}': required by '{command}'")
    if command == "spectrum" and not ({"tau", "tauMax"} & set(raw) or "tau" in sweep):
        _fail(path, "field 'tau': 'spectrum' needs 'tau', 'sweep.tau' or 'tauMax'")
    if command == "sweep":
        if not sweep:
            _fail(path, "field 'sweep.*': 'sweep' needs at least one of " + ", ".join(_SWEEP_KEYS))
        for key in ("lambda", "D", "tau"):
            if key not in sweep and key not in raw:
                _fail(path, f"field '{key}': give a value or 'sweep.{key}'")

    checks = {
        "L": lambda v: v > 0,
        "n": lambda v: v >= 3,
        "tau": lambda v: v >= 0,
        "T": lambda v: v > 0,
        "dt": lambda v: v > 0,
        "tTransient": lambda v: v >= 0,
        "tauMax": lambda v: v > 0,
        "M": lambda v: v >= 8,
        "N": lambda v: v >= 0,
        "cutoff": lambda v: v > 0,
        "lambda": lambda v: v >= 0,
    }
    for key, ok in checks.items():
        if key in raw and not ok(raw[key]):
            _fail(path, f"field '{key}': value {raw[key]!r} out of range")
    for v in sweep.get("tau", ()):
        if v < 0:
            _fail(path, f"field 'sweep.tau': delays must be nonnegative, got {v!r}")
    for v in sweep.get("lambda", ()):
        if v < 0:
            _fail(path, f"field 'sweep.lambda': values must be nonnegative, got {v!r}")

    sc = Scenario(**kw)
    try:
        g = sc.grid()
        sc.profile(g)
    except ExprError as exc:
        _fail(path, f"field 'm': {exc}")
    except InvalidArgument as exc:
        _fail(path, f"grid: {exc}")
    return sc


# --- output helpers ---------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == 0.0:
        v = 0.0  # drop the sign of -0
    return f"{v:.{SIG_DIGITS}g}"


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _scalar_rows(pairs, norm):
    return [(name, "", value, norm) for name, value in pairs]


# --- commands ---------------------------------------------------------------


def cmd_eigen(sc: Scenario, out: Path, seed) -> dict:
    g = sc.grid()
    m = sc.profile(g)
    eig = principal_weighted(g, m)
    phi = normalize(g, eig.phi, sc.normalization)
    rows = _scalar_rows([("lambda_star", eig.lambda_star), ("residual", eig.residual)], "none")
    rows += [("phi", x, p, sc.normalization) for x, p in zip(g.x, phi)]
    write_csv(out / "eigen.csv", ["quantity", "x", "value", "normalization"], rows)
    return {"lambda_star": eig.lambda_star, "case": m.case, "files": ["eigen.csv"]}


def cmd_steady(sc: Scenario, out: Path, seed) -> dict:
    g = sc.grid()
    m = sc.profile(g)
    s = solve_steady(g, m, sc.lam, sc.D)
    res = float(np.max(np.abs(residual(g, m, sc.lam, sc.D, s.u)[g.free])))
    iu, im = integrate(g, s.u), integrate(g, m.samples)
    rows = _scalar_rows(
        [("lambda", sc.lam), ("D", sc.D), ("int_u", iu), ("int_m", im), ("residual", res),
         ("min_u", float(np.min(s.u[g.free]))), ("D_max_u", sc.D * float(np.max(s.u)))],
        "none",
    )
    rows += [("u", x, v, "none") for x, v in zip(g.x, s.u)]
    write_csv(out / "steady.csv", ["quantity", "x", "value", "normalization"], rows)
    info = {"int_u": iu, "int_m": im, "residual": res, "files": ["steady.csv"]}
    if s.others:
        info["other_limits"] = len(s.others)
    return info


def cmd_bifurcate(sc: Scenario, out: Path, seed) -> dict:
    g = sc.grid()
    m = sc.profile(g)
    norm = sc.normalization
    parts = r_parts(g, m, norm)
    try:
        dbar = _dbar(parts)
    except DegenerateProfile:
        dbar = math.nan
    rows = [
        ("lambda_star", "", parts.lambda_star, "none"),
        ("r1", "", parts.r1, norm),
        ("r2_over_D", "", -parts.grad_energy, norm),
        ("Dbar", "", dbar, norm),
    ]
    info = {"lambda_star": parts.lambda_star, "r1": parts.r1, "Dbar": dbar, "normalization": norm}
    hyp = None
    if sc.D is not None:
        r2 = parts.r2(sc.D)
        rows += [("D", "", sc.D, "none"), ("r2", "", r2, norm),
                 ("r1_minus_r2", "", parts.r1 - r2, norm), ("r1_plus_r2", "", parts.r1 + r2, norm)]
        if sc.lam is not None:
            try:
                h = hopf_quantities(g, m, sc.D, sc.lam, norm, sc.N)
            except HypothesisViolated as exc:
                hyp = exc
            else:
                rows += [("lambda", "", h.lam, "none"), ("alpha_star", "", h.alpha_star, norm),
                         ("region", "", h.region, "none")]
                if h.theta_star is not None:
                    rows += [("theta_star", "", h.theta_star, "none"), ("h_star", "", h.h_star, "none"),
                             ("omega", "", h.omega, "none")]
                    rows += [("tau_n", k, t, "none") for k, t in enumerate(h.tau_list)]
                info.update(region=h.region, tau_list=list(h.tau_list))
    write_csv(out / "hopf.csv", ["quantity", "index", "value", "normalization"], rows)
    info["files"] = ["hopf.csv"]
    if hyp is not None:
        raise hyp
    return info


def _roots_rows(rs, limit=None):
    n = len(rs.roots) if limit is None else min(limit, len(rs.roots))
    for i in range(n):
        mu = rs.roots[i]
        yield (rs.tau, mu.real, mu.imag, bool(rs.refined[i]), rs.residuals[i], rs.M, rs.method, "none")


def cmd_spectrum(sc: Scenario, out: Path, seed) -> dict:
    g = sc.grid()
    m = sc.profile(g)
    s = solve_steady(g, m, sc.lam, sc.D)
    lin = assemble_linearization(g, m, s)
    taus = sc.sweep.get("tau") or ((sc.tau,) if sc.tau is not None else ())
    rows, rightmost = [], {}
    for tau in taus:
        rs = delay_rightmost(lin, tau, sc.M, sc.cutoff, seed=seed)
        rows.extend(_roots_rows(rs))
        rightmost[fmt(tau)] = [rs.rightmost.real, rs.rightmost.imag]
    write_csv(
        out / "roots.csv",
        ["tau", "re_mu", "im_mu", "refined", "residual", "M", "method", "normalization"],
        rows,
    )
    info = {"rightmost": rightmost, "D_max_u": sc.D * float(np.max(s.u)), "files": ["roots.csv"]}
    if sc.tau_max is not None:
        c = find_crossing(g, m, sc.lam, sc.D, sc.tau_max, sc.M, steady=s, cutoff=sc.cutoff, seed=seed)
        crow = [] if c is None else [(c.tau0, c.omega0, c.stable_at_zero, "none")]
        write_csv(out / "crossing.csv", ["tau0", "omega0", "stable_at_zero", "normalization"], crow)
        info["crossing"] = None if c is None else asdict(c)
        info["files"].append("crossing.csv")
    return info


def _write_trace(out: Path, tr, x, title):
    stride = max(1, math.ceil(len(tr.t) / MAX_TRACE_ROWS))
    idx = np.arange(0, len(tr.t), stride)
    if idx[-1] != len(tr.t) - 1:
        idx = np.append(idx, len(tr.t) - 1)
    write_csv(
        out / "trace.csv",
        ["t", "deviation_sup", "probe", "normalization"],
        ((tr.t[i], tr.deviation[i], tr.probe[i], "none") for i in idx),
    )
    heatmap_svg(out / "heatmap.svg", x, tr.snapshot_t, tr.snapshots, title=title)
    return ["trace.csv", "heatmap.svg"]


def _sim_summary(tr):
    c = tr.classification
    return {
        "label": c.label,
        "period": c.period,
        "n_peaks": c.n_peaks,
        "amplitude": c.amplitude,
        "T": tr.T,
        "dt": tr.dt,
        "t_transient": tr.t_transient,
        "final_deviation": float(tr.deviation[-1]),
        "warnings": list(tr.warnings),
    }


def cmd_simulate(sc: Scenario, out: Path, seed) -> dict:
    g = sc.grid()
    m = sc.profile(g)
    tr = simulate(g, m, sc.lam, sc.D, sc.tau, T=sc.T, dt=sc.dt, t_transient=sc.t_transient)
    files = _write_trace(out, tr, g.x, f"lambda={sc.lam:g} D={sc.D:g} tau={sc.tau:g}")
    c = tr.classification
    write_csv(
        out / "classification.csv",
        ["lambda", "D", "tau", "label", "period", "n_peaks", "amplitude", "normalization"],
        [(sc.lam, sc.D, sc.tau, c.label, c.period, c.n_peaks, c.amplitude, "none")],
    )
    info = _sim_summary(tr)
    info["files"] = files + ["classification.csv"]
    return info


def _sweep_entry(args):
    sc, lam, D, tau, sub, seed = args
    g = sc.grid()
    m = sc.profile(g)
    row = {"lambda": lam, "D": D, "tau": tau, "label": "", "period": None, "region": "",
           "rightmost_re": None, "rightmost_im": None, "blowup_t": None, "D_max_u": None, "error": ""}
    try:
        s = solve_steady(g, m, lam, D)
    except MemodiffError as exc:
        row.update(label="failed", error=type(exc).__name__)
        return row
    row["D_max_u"] = D * float(np.max(s.u))
    try:
        h = hopf_quantities(g, m, D, lam, sc.normalization, sc.N)
        row["region"] = h.region
    except (HypothesisViolated, UnsupportedProfile, DegenerateProfile) as exc:
        row["region"] = "III" if "(H1)" in str(exc) else "n/a"
    try:
        lin = assemble_linearization(g, m, s)
        rs = delay_rightmost(lin, tau, sc.M, sc.cutoff, seed=seed)
        row["rightmost_re"], row["rightmost_im"] = rs.rightmost.real, abs(rs.rightmost.imag)
    except MemodiffError as exc:
        row["error"] = type(exc).__name__
    sub.mkdir(parents=True, exist_ok=True)
    try:
        tr = simulate(g, m, lam, D, tau, T=sc.T, dt=sc.dt, steady=s, t_transient=sc.t_transient)
    except InstabilityDetected as exc:
        row.update(label="blowup", blowup_t=exc.t)
        return row
    _write_trace(sub, tr, g.x, f"lambda={lam:g} D={D:g} tau={tau:g}")
    row.update(label=tr.classification.label, period=tr.classification.period)
    return row


def worker_count() -> int:
    raw = os.environ.get("MEMODIFF_THREADS")
    if raw is None or raw == "":
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MEMODIFF_THREADS: expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"MEMODIFF_THREADS: expected a positive integer, got {raw!r}")
    return n


def cmd_sweep(sc: Scenario, out: Path, seed) -> dict:
    lams = sc.sweep.get("lambda") or (sc.lam,)
    Ds = sc.sweep.get("D") or (sc.D,)
    taus = sc.sweep.get("tau") or (sc.tau,)
    jobs = []
    for i, (lam, D, tau) in enumerate(itertools.product(lams, Ds, taus)):
        jobs.append((sc, lam, D, tau, out / f"run_{i:03d}", seed))
    workers = min(worker_count(), len(jobs))
    if workers == 1:
        rows = [_sweep_entry(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_entry, jobs))
    header = ["run", "lambda", "D", "tau", "label", "period", "region", "rightmost_re",
              "rightmost_im", "D_max_u", "blowup_t", "error", "normalization"]
    table = [
        (f"run_{i:03d}", r["lambda"], r["D"], r["tau"], r["label"], r["period"], r["region"],
         r["rightmost_re"], r["rightmost_im"], r["D_max_u"], r["blowup_t"], r["error"], sc.normalization)
        for i, r in enumerate(rows)
    ]
    write_csv(out / "sweep.csv", header, table)
    return {"entries": rows, "workers": workers, "files": ["sweep.csv"]}


HANDLERS = {
    "eigen": cmd_eigen,
    "steady": cmd_steady,
    "bifurcate": cmd_bifurcate,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(command: str, config: str | Path, out: str | Path, seed: int | None = None) -> int:
    """Run one command and write its artifacts; returns the exit status."""
    out = Path(out)
    started = time.time()
    meta = {
        "command": command,
        "config": str(config),
        "seed": seed,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
    }
    status, result, error = EXIT_OK, None, None
    try:
        if command not in HANDLERS:
            raise ConfigError(f"unknown command {command!r}")
        sc = load_scenario(config, command)
        meta["scenario"] = json.loads(Path(config).read_text())
        out.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[command](sc, out, seed)
    except ConfigError as exc:
        status, error = EXIT_CONFIG, str(exc)
    except (HypothesisViolated, UnsupportedProfile) as exc:
        status, error = EXIT_HYPOTHESIS, str(exc)
    except MemodiffError as exc:
        status, error = EXIT_SOLVER, f"{type(exc).__name__}: {exc}"
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        status, error = EXIT_SOLVER, f"{type(exc).__name__}: {exc}"
    if error:
        print(f"memodiff {command}: {error}", file=sys.stderr)
    meta.update(exit_status=status, error=error, result=result, elapsed_s=round(time.time() - started, 3))
    if out.is_dir():
        (out / "run.json").write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memodiff", description="Memory-diffusion logistic model toolkit")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized start vectors")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"memodiff: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def main(argv=None) -> int:
    parser = build_parser()
    parser.__class__ = _Parser
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())

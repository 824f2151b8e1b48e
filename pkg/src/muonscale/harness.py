"""Command-line front end: run one configuration, check invariants, fit rates, sweep grids.

Exit codes: 0 success, 1 failed invariant check, 2 usage error, 3 divergence,
4 invariant violated during a run.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Optional

from . import checks, da_muon, df_practical
from .df_muon import DFConfig, df_run
from .errors import ConfigError, DivergenceError, InvariantError, OracleError
from .muon_base import Trace, _fmt, fixed_muon_run
from .problems import PROBLEMS, make_problem
from .sc_muon import sc_run
from .testkit import slope_fit

EXIT_CHECK, EXIT_USAGE, EXIT_DIVERGED, EXIT_INVARIANT = 1, 2, 3, 4

ALGOS = ("fixed", "da", "sc", "df", "df_practical")
PRACTICAL_KEYS = ("eta_min", "eta_init", "smoothing", "c_step", "c_center", "c_proxy", "batch_size")
ALLOWED = {
    "fixed": {"eta", "alpha"},
    "da": {"r0", "alpha", "eta_max"},
    "sc": {"alpha"},
    "df": {"alpha", "beta", "rho", "lambda", "bigM", "d0", "omega"},
    "df_practical": {"alpha", "eta_max", *PRACTICAL_KEYS},
}
DEFAULT_TS = (32, 64, 128, 256, 512, 1024, 2048, 4096)


@dataclass(frozen=True)
class RunConfig:
    problem: str = "quad_iso"
    dim: int = 2
    seed: int = 0
    geometry: str = "euclidean"
    algo: str = "sc"
    T: int = 100
    alpha: Optional[float] = None
    eta: Optional[float] = None
    r0: Optional[float] = None
    eta_max: Optional[float] = None
    beta: Optional[float] = None
    rho: Optional[float] = None
    # "lambda" is a keyword, hence the trailing underscore inside Python
    lambda_: Optional[float] = None
    bigM: Optional[float] = None
    d0: Optional[float] = None
    omega: Optional[str] = None
    eta_min: Optional[float] = None
    eta_init: Optional[float] = None
    smoothing: Optional[float] = None
    c_step: Optional[float] = None
    c_center: Optional[float] = None
    c_proxy: Optional[float] = None
    batch_size: Optional[int] = None
    out: Optional[str] = None

    @staticmethod
    def key(name: str) -> str:
        return "lambda" if name == "lambda_" else name

    def params(self) -> dict:
        """Algorithm parameters that were explicitly set, keyed by their external names."""
        base = {"problem", "dim", "seed", "geometry", "algo", "T", "out"}
        return {self.key(f.name): getattr(self, f.name) for f in fields(self)
                if f.name not in base and getattr(self, f.name) is not None}

    def validate(self) -> "RunConfig":
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; expected one of {ALGOS}")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        bad = sorted(set(self.params()) - ALLOWED[self.algo])
        if bad:
            raise ConfigError(f"parameters {bad} do not apply to algorithm {self.algo!r}; "
                              f"allowed: {sorted(ALLOWED[self.algo])}")
        if self.algo == "df_practical":
            if self.problem not in df_practical.MODELS:
                raise ConfigError(f"df_practical needs a stochastic model: {sorted(df_practical.MODELS)}")
        elif self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        return self


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _caster(name: str):
    t = str(FIELD_TYPES[name])
    if "int" in t:
        return int
    if "float" in t:
        return float
    return str


def config_from_mapping(d: dict, base: Optional[RunConfig] = None) -> RunConfig:
    """Build a RunConfig from external key names; unknown keys are errors."""
    base = base or RunConfig()
    kw = {}
    for k, v in d.items():
        name = "lambda_" if k == "lambda" else k.replace("-", "_")
        if name not in FIELD_TYPES:
            raise ConfigError(f"unknown configuration key {k!r}")
        if v is None:
            continue
        try:
            kw[name] = _caster(name)(v)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad value for {k!r}: {v!r}") from err
    return replace(base, **kw)


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise ConfigError("config must be a flat JSON object")
    return data


def execute(cfg: RunConfig) -> Trace:
    cfg.validate()
    P = cfg.params()
    if cfg.algo == "df_practical":
        pkw = {k: P[k] for k in ("eta_min", "eta_init", "eta_max", "smoothing", "c_step", "c_center",
                                 "c_proxy", "alpha") if k in P}
        pcfg = df_practical.PracticalCfg(**pkw)
        model = df_practical.MODELS[cfg.problem](cfg.seed)
        return df_practical.practical_run(model, pcfg, T=cfg.T, seed=cfg.seed,
                                          batch_size=P.get("batch_size", 32))
    p = make_problem(cfg.problem, dim=cfg.dim, seed=cfg.seed, geometry=cfg.geometry)
    if cfg.algo == "fixed":
        return fixed_muon_run(p, eta=P.get("eta", 0.1), alpha=P.get("alpha", 0.5), T=cfg.T)
    if cfg.algo == "da":
        return da_muon.da_run(p, r=P.get("r0"), alpha=P.get("alpha", 0.5), T=cfg.T,
                              eta_max=P.get("eta_max"))
    if cfg.algo == "sc":
        return sc_run(p, alpha=P.get("alpha", 0.5), T=cfg.T)
    dkw = {"alpha": P.get("alpha", 0.9), "beta": P.get("beta"), "rho": P.get("rho", 1.0),
           "lam": P.get("lambda", 1.0), "M": P.get("bigM", 6.0), "omega": P.get("omega", "unit")}
    return df_run(p, cfg=DFConfig(**dkw), T=cfg.T, d0=P.get("d0", 0.0))


def rate_metric(cfg: RunConfig, trace: Trace) -> Optional[float]:
    """Final gap, or the smallest next-iterate gradient norm for DA."""
    if cfg.algo == "da":
        return da_muon.min_next_grad(trace)
    if cfg.algo == "df_practical":
        return trace.final["loss"]
    return trace.final.get("gap")


def _run_metric(cfg: RunConfig):
    tr = execute(cfg)
    return rate_metric(cfg, tr), tr.final


def fit_rates(cfg: RunConfig, Ts, jobs: int = 1) -> dict:
    Ts = [int(t) for t in Ts]
    if len(Ts) < 4:
        raise ConfigError("rates needs at least 4 horizons")
    cfgs = [replace(cfg, T=t).validate() for t in Ts]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_metric, cfgs))
    else:
        results = [_run_metric(c) for c in cfgs]
    values = [r[0] for r in results]
    pts = [(t, v) for t, v in zip(Ts, values) if v is not None and v > 0]
    excluded = [t for t, v in zip(Ts, values) if v is None or not v > 0]
    if len(pts) < 3:
        raise ConfigError(f"fewer than 3 horizons with positive values; excluded {excluded}")
    fit = slope_fit(pts)
    return {"algo": cfg.algo, "problem": cfg.problem, "dim": cfg.dim, "seed": cfg.seed,
            "geometry": cfg.geometry, "metric": "min_grad_dual_norm" if cfg.algo == "da" else "final_gap",
            "horizons": ";".join(str(t) for t, _ in pts), "excluded": ";".join(map(str, excluded)),
            "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
            "points": list(zip(Ts, values))}


# ---------------------------------------------------------------- CLI

def _add_run_flags(ap):
    ap.add_argument("--problem")
    ap.add_argument("--dim", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--geometry", choices=("euclidean", "linf_sign", "spectral"))
    ap.add_argument("--algo", choices=ALGOS)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--rho", type=float)
    ap.add_argument("--lambda", dest="lambda_", type=float)
    ap.add_argument("--bigM", type=float)
    ap.add_argument("--r0", type=float)
    ap.add_argument("--d0", type=float)
    ap.add_argument("--eta", type=float)
    ap.add_argument("--eta-max", dest="eta_max", type=float)
    ap.add_argument("--omega", choices=("unit", "normalized"))
    ap.add_argument("--out")
    ap.add_argument("--config", help="flat JSON file of defaults; flags override it")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="muonscale", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one configuration and write its trace as CSV")
    _add_run_flags(run)
    run.add_argument("--T", type=int)

    chk = sub.add_parser("check", help="execute an invariant suite")
    chk.add_argument("--suite", default="all", choices=checks.SUITES)
    chk.add_argument("--inject-fault", choices=checks.FAULTS, help=argparse.SUPPRESS)

    rates = sub.add_parser("rates", help="fit a log-log slope of the final metric over horizons")
    _add_run_flags(rates)
    rates.add_argument("--T", default=",".join(map(str, DEFAULT_TS)), help="comma-separated horizons")
    rates.add_argument("--jobs", type=int, default=1)

    sw = sub.add_parser("sweep", help="run a grid of configurations over seeds")
    _add_run_flags(sw)
    sw.add_argument("--T", type=int)
    sw.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2")
    sw.add_argument("--seeds", default="0")
    sw.add_argument("--jobs", type=int, default=1)
    return ap


def _config_from_args(args, with_T: bool = True) -> RunConfig:
    d = load_config(args.config)
    cfg = config_from_mapping(d)
    flags = {k: v for k, v in vars(args).items()
             if k in FIELD_TYPES and v is not None and (with_T or k != "T")}
    return config_from_mapping({RunConfig.key(k): v for k, v in flags.items()}, cfg)


def _open_out(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_rows(path, header, rows):
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
    finally:
        if close:
            fh.close()


def cmd_run(args) -> int:
    cfg = _config_from_args(args).validate()
    trace = execute(cfg)
    fh, close = _open_out(cfg.out)
    try:
        trace.to_csv(fh)
    finally:
        if close:
            fh.close()
    return 0


def cmd_check(args) -> int:
    results = checks.run_suite(args.suite, fault=args.inject_fault)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        for r in failed:
            print(f"failed: {r.name} at step {r.step}", file=sys.stderr)
        return EXIT_CHECK
    return 0


def cmd_rates(args) -> int:
    cfg = _config_from_args(args, with_T=False)
    try:
        Ts = [int(t) for t in str(args.T).split(",") if t.strip()]
    except ValueError as err:
        raise ConfigError(f"bad horizon list {args.T!r}") from err
    res = fit_rates(cfg, Ts, jobs=args.jobs)
    for t, v in res.pop("points"):
        print(f"T={t} value={v!r}", file=sys.stderr)
    if res["excluded"]:
        print(f"excluded horizons with nonpositive values: {res['excluded']}", file=sys.stderr)
    _write_rows(cfg.out, list(res), [list(res.values())])
    return 0


def _parse_grid(items):
    grid = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"grid entry {item!r} is not KEY=V1,V2")
        k, vals = item.split("=", 1)
        grid[k.strip()] = [v.strip() for v in vals.split(",") if v.strip()]
    return grid


def cmd_sweep(args) -> int:
    base = _config_from_args(args)
    grid = _parse_grid(args.grid)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as err:
        raise ConfigError(f"bad seed list {args.seeds!r}") from err
    keys = list(grid)
    combos = list(itertools.product(*(grid[k] for k in keys)))
    cfgs = []
    for combo in combos:
        for s in seeds:
            cfgs.append(config_from_mapping({**dict(zip(keys, combo)), "seed": s}, base).validate())
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_run_metric, cfgs))
    else:
        results = [_run_metric(c) for c in cfgs]
    header = [*keys, "seed", "final_f", "final_gap", "metric"]
    rows = []
    for c, (metric, final) in zip(cfgs, results):
        vals = [str(getattr(c, "lambda_" if k == "lambda" else k)) for k in keys]
        rows.append([*vals, c.seed, final.get("f", final.get("loss")), final.get("gap"), metric])
    _write_rows(base.out, header, rows)
    return 0


COMMANDS = {"run": cmd_run, "check": cmd_check, "rates": cmd_rates, "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.cmd](args)
    except (ConfigError, OracleError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except InvariantError as err:
        print(f"invariant violated: {err}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

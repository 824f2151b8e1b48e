"""Fit log-log rate slopes for the three radius rules and write one CSV row per case.

    python scripts/run_rates.py --out rates.csv --jobs 4
"""
import argparse
import csv
import sys

from muonscale.harness import DEFAULT_TS, RunConfig, fit_rates

CASES = [
    RunConfig(problem="least_squares", dim=20, algo="df"),
    RunConfig(problem="least_squares", dim=20, algo="sc"),
    RunConfig(problem="quad_iso", dim=10, algo="df"),
    RunConfig(problem="ripple", dim=10, algo="da", alpha=0.5),
    RunConfig(problem="ripple", dim=20, algo="da", alpha=0.5),
    RunConfig(problem="ripple", dim=10, algo="da", alpha=0.9),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="CSV path (default: stdout)")
    ap.add_argument("--seeds", default="0", help="comma-separated seeds")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    seeds = [int(s) for s in args.seeds.split(",")]

    header = ["algo", "problem", "dim", "alpha", "seed", "slope", "r_squared", "excluded"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for case in CASES:
        for seed in seeds:
            cfg = RunConfig(**{**case.__dict__, "seed": seed})
            res = fit_rates(cfg, DEFAULT_TS, jobs=args.jobs)
            w.writerow([cfg.algo, cfg.problem, cfg.dim, cfg.alpha, seed,
                        f"{res['slope']:.4f}", f"{res['r_squared']:.4f}", res["excluded"]])
            fh.flush()
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()

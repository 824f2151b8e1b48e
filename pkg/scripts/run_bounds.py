"""Compare realized last-iterate quantities with the numeric guarantees over a horizon ladder.

Writes one CSV row per (method, problem, alpha, T) with the observed value, the
bound and their ratio; a ratio above 1 would be a violation.

    python scripts/run_bounds.py --out bounds.csv
"""
import argparse
import csv
import math
import sys

from muonscale import da_muon, df_muon, sc_muon
from muonscale.harness import DEFAULT_TS
from muonscale.problems import make_problem


def df_rows(Ts, dim):
    base = df_muon.DFConfig(alpha=0.9, rho=1.0, lam=1.0, M=6.0)
    for name in ("quad_iso", "least_squares", "star_1d"):
        p = make_problem(name, dim=dim, seed=0)
        D = p.distance_to_star(p.x0)
        gap0 = p.gap(p.f(p.x0))
        for T in Ts:
            tr = df_muon.df_run(p, cfg=base, T=T)
            bound = df_muon.thm3_bound(gap0, p.L, D, base.for_horizon(T), T)
            yield "df", name, base.alpha, T, tr.final["gap"], bound


def sc_rows(Ts, dim):
    for tag in ("euclidean", "linf_sign", "spectral"):
        p = make_problem("quad_iso", dim=dim, seed=0, geometry=tag)
        D_lev = math.sqrt(2.0 * p.gap(p.f(p.x0)) / p.info["L_frobenius"])
        for alpha in (0.5, 0.9):
            for T in Ts:
                tr = sc_muon.sc_run(p, alpha=alpha, T=T)
                yield "sc", f"quad_iso/{tag}", alpha, T, tr.final["gap"], sc_muon.thm2_bound(p.L, D_lev, alpha, T)


def da_rows(Ts, dim):
    for name in ("ripple", "quad_iso"):
        p = make_problem(name, dim=dim, seed=0)
        for alpha in (0.5, 0.9):
            for T in Ts:
                tr = da_muon.da_run(p, alpha=alpha, T=T)
                bound = da_muon.thm1_bound(p.gap(tr.rows[0][1]), tr.meta["r"],
                                           da_muon.realized_radius(tr), p.L, alpha, T)
                yield "da", name, alpha, T, da_muon.min_next_grad(tr), bound


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="CSV path (default: stdout)")
    ap.add_argument("--dim", type=int, default=5)
    ap.add_argument("--T", default=",".join(map(str, DEFAULT_TS)), help="comma-separated horizons")
    args = ap.parse_args(argv)
    Ts = [int(t) for t in args.T.split(",")]

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["method", "problem", "alpha", "T", "observed", "bound", "ratio"])
    for gen in (df_rows, sc_rows, da_rows):
        for method, name, alpha, T, obs, bound in gen(Ts, args.dim):
            w.writerow([method, name, alpha, T, repr(obs), repr(bound), f"{obs / bound:.3e}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()

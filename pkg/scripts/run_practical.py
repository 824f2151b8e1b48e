"""Train the tiny models in practical mode, with and without the centering term.

Reports first- and last-decile minibatch loss, the final full-data loss and the
range of the selected base scale for each (model, variant, seed).

    python scripts/run_practical.py --T 500 --seeds 0,1,2
"""
import argparse
import csv
import sys

import numpy as np

from muonscale.df_practical import MODELS, PracticalCfg, practical_run

VARIANTS = {"centered": PracticalCfg(), "no_center": PracticalCfg.no_center()}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="CSV path (default: stdout)")
    ap.add_argument("--T", type=int, default=500)
    ap.add_argument("--seeds", default="0,1,2")
    args = ap.parse_args(argv)
    seeds = [int(s) for s in args.seeds.split(",")]

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["model", "variant", "seed", "first_decile", "last_decile", "final_loss",
                "scale_min", "scale_max"])
    for name, make in MODELS.items():
        for variant, cfg in VARIANTS.items():
            for seed in seeds:
                tr = practical_run(make(seed), cfg, T=args.T, seed=seed)
                loss, s = tr.column("loss"), tr.column("base_scale")
                n = max(1, args.T // 10)
                w.writerow([name, variant, seed, f"{np.mean(loss[:n]):.5f}", f"{np.mean(loss[-n:]):.5f}",
                            f"{tr.final['loss']:.5f}", f"{s.min():.5f}", f"{s.max():.5f}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()

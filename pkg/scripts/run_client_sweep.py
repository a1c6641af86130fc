#!/usr/bin/env python3
"""Client-count sweep: accuracy of AgnosticFair vs LocalFair as the same
training data is spread over more clients.

Usage: python3 scripts/run_client_sweep.py --seeds 5 --out sweep.csv
"""

import argparse
import csv
from dataclasses import replace

import numpy as np

from fedfair import engine


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--counts", nargs="*", type=int, default=[2, 4, 6, 8, 10])
    ap.add_argument(
        "--algorithms", nargs="*", default=["AgnosticFair", "LocalFair"]
    )
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    rows = []
    for kind in args.algorithms:
        for p in args.counts:
            accs = []
            for seed in range(args.seeds):
                train, test, shards = engine.prepare_census(
                    seed=seed,
                    split_kwargs={"client_assignment": "even", "num_clients": p},
                )
                spec = engine.AlgorithmSpec(
                    kind=kind, hyper=replace(engine.HyperParams(), seed=seed)
                )
                accs.append(engine.run(spec, train, test, shards).final["test_acc"])
            rows.append(
                {
                    "algorithm": kind,
                    "clients": p,
                    "test_acc_mean": float(np.mean(accs)),
                    "test_acc_sd": float(np.std(accs)),
                }
            )
            print(
                f"{kind} clients={p}: acc={rows[-1]['test_acc_mean']:.4f} "
                f"(sd {rows[-1]['test_acc_sd']:.4f})",
                flush=True,
            )

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


if __name__ == "__main__":
    main()

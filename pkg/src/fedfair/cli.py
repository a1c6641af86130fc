"""Command-line entry point: prepare data, run experiments, verify math.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
Progress goes to stderr; machine-readable results go to files/stdout.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
import yaml

from fedfair import data, engine, fairness, kernels, logistic, lp, protocol
from fedfair.errors import FedFairError

log = logging.getLogger("fedfair")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _output_dir(args) -> str:
    out = args.output or os.environ.get("FEDFAIR_OUTPUT", "fedfair-out")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_prepare(args) -> int:
    schema, split = data.load_schema_file(args.schema)
    if split is None:
        log.error("schema file %s has no 'split' section", args.schema)
        return EXIT_USAGE
    if args.seed is not None:
        split = data.ShiftSplitSpec(
            split_column=split.split_column,
            split_predicate=split.split_predicate,
            train_fraction_group_a=split.train_fraction_group_a,
            train_fraction_group_b=split.train_fraction_group_b,
            client_assignment=split.client_assignment,
            num_clients=split.num_clients,
            seed=args.seed,
        )
    raw = data.load_csv(args.data, schema)
    ds = data.encode(raw)
    train, test, shards = data.shift_split(ds, split)

    out = _output_dir(args)
    data.save_encoded_csv(os.path.join(out, "train.csv"), train)
    data.save_encoded_csv(os.path.join(out, "test.csv"), test)
    shard_files = []
    for shard in shards:
        name = f"shard{shard.client_id}.csv"
        data.save_encoded_csv(
            os.path.join(out, name),
            data.EncodedDataset(
                features=shard.features,
                labels=shard.labels,
                sensitive=shard.sensitive,
                feature_names=train.feature_names,
            ),
        )
        shard_files.append({"client_id": shard.client_id, "file": name, "rows": shard.n})
    manifest = {
        "source": os.path.abspath(args.data),
        "seed": split.seed,
        "train_rows": train.n,
        "test_rows": test.n,
        "features": train.feature_names,
        "shards": shard_files,
    }
    with open(os.path.join(out, "manifest.yaml"), "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    log.info("prepared %d train / %d test rows into %s", train.n, test.n, out)
    return EXIT_OK


def _load_run_config(args) -> dict:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            return yaml.safe_load(fh) or {}
    return {}


def cmd_run(args) -> int:
    cfg = _load_run_config(args)
    hyper_cfg = dict(cfg.get("hyper", {}))
    if "lambda" in hyper_cfg:
        hyper_cfg["lam"] = hyper_cfg.pop("lambda")
    if args.rounds is not None:
        hyper_cfg["rounds"] = args.rounds
    if args.seed is not None:
        hyper_cfg["seed"] = args.seed
    hyper = engine.HyperParams(**hyper_cfg)

    algorithm = args.algorithm or cfg.get("algorithm", "AgnosticFair")
    if algorithm not in engine.ALGORITHMS:
        log.error(
            "unknown algorithm %r; valid names: %s",
            algorithm,
            ", ".join(engine.ALGORITHMS),
        )
        return EXIT_USAGE

    split_cfg = (cfg.get("splits") or [cfg.get("split", {})])[0]
    data_cfg = dict(cfg.get("dataset", {}))
    out = _output_dir(args)

    if data_cfg.get("kind", "census") == "csv":
        schema, split = data.load_schema_file(data_cfg["schema"])
        raw = data.load_csv(data_cfg["path"], schema)
        train, test, shards = data.shift_split(data.encode(raw), split)
    else:
        split_kwargs = {
            k: split_cfg[k]
            for k in (
                "train_fraction_group_a",
                "train_fraction_group_b",
                "client_assignment",
                "num_clients",
            )
            if k in split_cfg
        }
        train, test, shards = engine.prepare_census(
            seed=hyper.seed,
            n=int(data_cfg.get("n", 6000)),
            split_kwargs=split_kwargs,
            census_kwargs=data_cfg.get("census"),
        )

    spec = engine.AlgorithmSpec(kind=algorithm, hyper=hyper)
    dump = os.path.join(out, "lp_dump.txt") if args.debug_lp_dump else None
    if hyper.rounds == 0:
        w0 = np.zeros(train.dim)
        final = engine._evaluate(w0, train, test, shards)
        result = engine.RunResult([], final, np.array([]), w0)
    else:
        result = engine.run(spec, train, test, shards, debug_lp_dump=dump)
        engine.write_round_csv(os.path.join(out, "rounds.csv"), result)
    with open(os.path.join(out, "result.yaml"), "w") as fh:
        yaml.safe_dump(
            {
                "algorithm": algorithm,
                "final": {
                    k: (v if not isinstance(v, list) else [float(x) for x in v])
                    for k, v in result.final.items()
                },
            },
            fh,
            sort_keys=False,
        )
    print(
        f"{algorithm}: test_acc={result.final['test_acc']:.4f} "
        f"test_rd={result.final['test_rd']:.4f}"
    )
    return EXIT_OK


def cmd_grid(args) -> int:
    if not args.config:
        log.error("grid requires --config")
        return EXIT_USAGE
    with open(args.config, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    out = _output_dir(args)
    summary = engine.experiment_grid(cfg, output_dir=out)
    for row in summary:
        acc = row.get("test_acc")
        rd = row.get("test_rd")
        print(
            f"{row['algorithm']:>16s} {row['split']:>8s} "
            f"test_acc={acc:.4f} test_rd={rd:.4f}"
            if acc is not None
            else f"{row['algorithm']:>16s} {row['split']:>8s} FAILED"
        )
    failed = any(r["repetitions_ok"] == 0 for r in summary)
    return EXIT_RUNTIME if failed else EXIT_OK


# ---------------------------------------------------------------------------
# verify: embedded oracle suite
# ---------------------------------------------------------------------------


def _check_lp(inject_fault: bool) -> bool:
    rng = np.random.default_rng(7)
    for _ in range(40):
        m = int(rng.integers(1, 5))
        problem = lp.AlphaLP(
            objective=rng.normal(size=m),
            equality=np.abs(rng.normal(size=m)) + 0.05,
            fairness_row=rng.normal(size=m) * 0.5,
            tau=float(rng.uniform(0.01, 0.5)),
            box_upper=5.0,
        )
        got = lp.solve(problem)
        ref = lp.brute_force_oracle(problem)
        val = got.objective_value + (0.01 if inject_fault else 0.0)
        if got.status != ref.status or abs(val - ref.objective_value) > 1e-6:
            return False
    return True


def _check_gradient(inject_fault: bool) -> bool:
    rng = np.random.default_rng(11)
    for lam in (0.0, 2.0, 100.0):
        for _ in range(10):
            n, d = 5, 3
            shard = data.ClientShard(
                client_id=0,
                features=np.hstack([rng.normal(size=(n, d)), np.ones((n, 1))]),
                labels=rng.integers(0, 2, size=n),
                sensitive=rng.integers(0, 2, size=n),
            )
            w = rng.normal(size=d + 1)
            th = rng.uniform(0.1, 2.0, size=n)
            pen = logistic.PenaltySpec(lam=lam, tau=0.05, phi_c=rng.normal(size=d + 1))
            grad = logistic.loss_gradient(w, shard, th, pen)
            if inject_fault:
                grad = grad + 1e-2
            fd = np.zeros_like(w)
            h = 1e-6
            for j in range(d + 1):
                e = np.zeros_like(w)
                e[j] = h
                fd[j] = (
                    logistic.local_objective(w + e, shard, th, pen)
                    - logistic.local_objective(w - e, shard, th, pen)
                ) / (2 * h)
            rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
            if rel > 1e-4:
                return False
    return True


def _check_aggregation(inject_fault: bool) -> bool:
    ds = engine.generate_synthetic(engine.SyntheticSpec(n=60, d=3, seed=3))
    shards = engine.even_shards(ds, 3, seed=5)
    basis = kernels.select_basis(shards, 6, seed=9)
    cfg = protocol.ProtocolConfig(
        optimize_alpha=True,
        fairness_row_in_lp=True,
        penalty_mode=protocol.PENALTY_GLOBAL,
        lam=2.0,
        opt=logistic.OptimizerSpec(epochs=5),
    )
    server, clients, bc = protocol.init_protocol(shards, basis, cfg)
    bundles = [protocol.client_round(c, bc, cfg) for c in clients]

    # centralized recomputation over the pooled data at the clients' new w
    stats = server.stats
    n = stats.n_total
    psi_L = np.zeros(basis.num_bases)
    psi_theta = np.zeros(basis.num_bases)
    psi_C = np.zeros(basis.num_bases)
    phi_C = np.zeros(ds.dim)
    for client, bundle in zip(clients, bundles):
        km = kernels.kernel_matrix(client.shard, basis)
        th = kernels.theta(km, bc.alpha)
        losses = logistic.per_sample_logloss(
            bundle.w_local, client.shard.features, client.shard.labels
        )
        psi_L += km.T @ losses / n
        psi_theta += km.sum(axis=0) / n
        psi_C += fairness.covariance_coeff_alpha(client.shard, km, bundle.w_local, stats)
        phi_C += fairness.covariance_coeff_w(client.shard, th, stats)
    sums = {
        "psi_L": np.sum([b.psi_L for b in bundles], axis=0),
        "psi_theta": np.sum([b.psi_theta for b in bundles], axis=0),
        "psi_C": np.sum([b.psi_C for b in bundles], axis=0),
        "phi_C": np.sum([b.phi_C for b in bundles], axis=0),
    }
    if inject_fault:
        sums["psi_theta"] = sums["psi_theta"] + 1e-3
    expected = {"psi_L": psi_L, "psi_theta": psi_theta, "psi_C": psi_C, "phi_C": phi_C}
    return all(np.allclose(sums[k], expected[k], atol=1e-10) for k in sums)


CHECKS = {
    "lp": _check_lp,
    "gradient": _check_gradient,
    "aggregation": _check_aggregation,
}


def cmd_verify(args) -> int:
    names = [args.only] if args.only else list(CHECKS)
    for name in names:
        if name not in CHECKS:
            log.error("unknown check %r; valid: %s", name, ", ".join(CHECKS))
            return EXIT_USAGE
    failed = False
    for name in names:
        ok = CHECKS[name](args.inject_fault)
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
        failed = failed or not ok
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedfair",
        description="Fairness-aware agnostic federated learning simulator",
    )
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("prepare", help="encode, split and shard a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="run one training experiment")
    p.add_argument("--config", default=None)
    p.add_argument("--algorithm", default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--debug-lp-dump", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="run an experiment grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify", help="run the embedded oracle checks")
    p.add_argument("--only", default=None)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FedFairError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.error("runtime failure: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Training orchestration: algorithm variants, synthetic data, experiment grid.

All algorithm variants run through the same client/server machinery and
differ only in basis kind, whether alpha is optimized, whether the LP
carries the fairness row, and the local penalty mode:

==================  =========  ==============  ============  ===========
variant             basis      alpha           LP fair row   penalty
==================  =========  ==============  ============  ===========
FL                  constant   frozen at 1     --            none
FairFL              constant   frozen at 1     --            global
AFL                 indicator  LP              no            none
AgnosticFair        gaussian   LP              yes           global
AgnosticFair-a      gaussian   LP              no            none
AgnosticFair-b      gaussian   LP              no            unweighted
LocalFair           constant   frozen at 1     --            local
==================  =========  ==============  ============  ===========

LocalFair trains a global (averaged) model like the others, but its
reported metrics follow the protocol of recording the global classifier
when fairness is achieved on every client: the best round (by training
accuracy) whose per-client risk differences are all within the fairness
threshold, falling back to the least-unfair round when no round
qualifies. More clients means more simultaneous local constraints, so
the qualifying rounds sit earlier (less accurate) in training.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from fedfair import fairness, kernels, logistic, protocol
from fedfair.data import (
    ClientShard,
    ColumnSpec,
    EncodedDataset,
    RawTable,
    Schema,
    ShiftSplitSpec,
    encode,
    shift_split,
)
from fedfair.errors import ConfigError

log = logging.getLogger(__name__)

ALGORITHMS = (
    "FL",
    "FairFL",
    "AFL",
    "AgnosticFair",
    "AgnosticFair-a",
    "AgnosticFair-b",
    "LocalFair",
)

_NO_PENALTY = ("FL", "AFL", "AgnosticFair-a")
_GAUSSIAN = ("AgnosticFair", "AgnosticFair-a", "AgnosticFair-b")


@dataclass(frozen=True)
class HyperParams:
    lam: float = 2.0
    tau: float = 0.05
    bound: float = 5.0
    sigma: float = 1.0
    num_bases: int = 200
    rounds: int = 300
    local_epochs: int = 20
    learning_rate: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: str
    hyper: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        if self.kind not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.kind!r}; valid: {', '.join(ALGORITHMS)}"
            )
        if self.kind in _NO_PENALTY and self.hyper.lam != 0.0:
            object.__setattr__(self, "hyper", replace(self.hyper, lam=0.0))


@dataclass
class RunResult:
    per_round: list[dict]
    final: dict
    alpha_final: np.ndarray
    w_final: np.ndarray


def _make_basis(spec: AlgorithmSpec, shards: list[ClientShard]) -> kernels.KernelBasis:
    h = spec.hyper
    dim = shards[0].features.shape[1]
    if spec.kind in _GAUSSIAN:
        return kernels.select_basis(
            shards, h.num_bases, seed=h.seed, sigma=h.sigma, bound=h.bound
        )
    if spec.kind == "AFL":
        return kernels.client_weight_basis(shards)
    return kernels.constant_basis(dim, bound=h.bound)


def _protocol_config(spec: AlgorithmSpec) -> protocol.ProtocolConfig:
    h = spec.hyper
    penalty = {
        "FL": protocol.PENALTY_NONE,
        "AFL": protocol.PENALTY_NONE,
        "AgnosticFair-a": protocol.PENALTY_NONE,
        "AgnosticFair": protocol.PENALTY_GLOBAL,
        "FairFL": protocol.PENALTY_GLOBAL,
        "AgnosticFair-b": protocol.PENALTY_UNWEIGHTED,
        "LocalFair": protocol.PENALTY_LOCAL,
    }[spec.kind]
    return protocol.ProtocolConfig(
        lam=h.lam,
        tau=h.tau,
        penalty_mode=penalty,
        optimize_alpha=spec.kind in ("AFL",) + _GAUSSIAN,
        fairness_row_in_lp=spec.kind == "AgnosticFair",
        opt=logistic.OptimizerSpec(
            learning_rate=h.learning_rate, epochs=h.local_epochs
        ),
    )


def _evaluate(w, train: EncodedDataset, test: EncodedDataset, shards) -> dict:
    train_pred = logistic.predict_label(w, train.features)
    test_pred = logistic.predict_label(w, test.features)
    row = {
        "train_acc": float((train_pred == train.labels).mean()),
        "test_acc": float((test_pred == test.labels).mean()),
        "train_rd": fairness.risk_difference(train_pred, train.sensitive).rd,
        "test_rd": fairness.risk_difference(test_pred, test.sensitive).rd,
    }
    per_client = []
    for shard in shards:
        pred = logistic.predict_label(w, shard.features)
        per_client.append(fairness.risk_difference(pred, shard.sensitive).rd)
    row["per_client_rd"] = per_client
    return row


#: per-client risk-difference bound defining "fairness achieved on every
#: client" for the LocalFair round-selection rule
LOCAL_FAIR_RD_MAX = 0.05


def _select_local_fair_round(per_round: list[dict]) -> dict:
    """Best round (by train accuracy) that is fair on all clients.

    A round qualifies when every client's local risk difference under
    the global model is within LOCAL_FAIR_RD_MAX; if no round qualifies
    the least-unfair round (smallest worst-client RD) is recorded.
    """
    achieved = [
        r for r in per_round if max(r["per_client_rd"]) <= LOCAL_FAIR_RD_MAX
    ]
    pool = achieved or [min(per_round, key=lambda r: max(r["per_client_rd"]))]
    return max(pool, key=lambda r: r["train_acc"])


def run(
    spec: AlgorithmSpec,
    train: EncodedDataset,
    test: EncodedDataset,
    shards: list[ClientShard],
    debug_lp_dump: str | None = None,
) -> RunResult:
    """Execute the full synchronous training loop and evaluate per round."""
    cfg = _protocol_config(spec)
    if debug_lp_dump:
        cfg = replace(cfg, debug_lp_dump=debug_lp_dump)
    basis = _make_basis(spec, shards)
    server, clients, bc = protocol.init_protocol(shards, basis, cfg)

    per_round = []
    for t in range(spec.hyper.rounds):
        bundles = [protocol.client_round(c, bc, cfg) for c in clients]
        alpha_old = server.alpha.copy()
        bc = protocol.server_round(server, bundles, cfg)
        row = {"round": t + 1}
        row.update(_evaluate(bc.w_avg, train, test, shards))
        if cfg.optimize_alpha:
            psi_L = np.sum([b.psi_L for b in bundles], axis=0)
            row["adversary_loss_before"] = float(psi_L @ alpha_old)
            row["adversary_loss_after"] = float(psi_L @ server.alpha)
            row["lp_status"] = server.last_lp.status
            row["lp_slack"] = server.last_lp.slack_used
            if server.last_lp.status == protocol.lp.STATUS_RELAXED:
                log.warning(
                    "round %d: fairness row relaxed by %.3g",
                    t + 1,
                    server.last_lp.slack_used,
                )
        per_round.append(row)

    if not per_round:
        final_row = _evaluate(bc.w_avg, train, test, shards)
    elif spec.kind == "LocalFair":
        final_row = _select_local_fair_round(per_round)
    else:
        final_row = per_round[-1]
    final = {
        "train_acc": final_row["train_acc"],
        "test_acc": final_row["test_acc"],
        "train_rd": final_row["train_rd"],
        "test_rd": final_row["test_rd"],
        "per_client_rd": final_row["per_client_rd"],
    }
    return RunResult(
        per_round=per_round,
        final=final,
        alpha_final=server.alpha.copy(),
        w_final=bc.w_avg.copy(),
    )


def run_fedavg_reference(
    shards: list[ClientShard], rounds: int, opt: logistic.OptimizerSpec
) -> list[np.ndarray]:
    """Plain federated averaging, written directly (reduction oracle).

    Each round every client minimizes its unweighted mean log-loss from
    the averaged weights; the server averages. Returns the w-bar sequence.
    """
    dim = shards[0].features.shape[1]
    w_avg = np.zeros(dim)
    penalty = logistic.PenaltySpec.disabled(dim)
    history = []
    for _ in range(rounds):
        locals_ = [
            logistic.fit_local(w_avg, s, np.ones(s.n), penalty, opt) for s in shards
        ]
        w_avg = np.mean(locals_, axis=0)
        history.append(w_avg.copy())
    return history


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-Gaussian-blob binary task used as a self-contained test fixture."""

    n: int = 200
    d: int = 2
    group_gap: float = 2.0  # distance between the label blobs
    sensitive_correlation: float = 0.0  # corr between sensitive bit and label
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError("synthetic spec needs n >= 4")
        if not -1.0 <= self.sensitive_correlation <= 1.0:
            raise ConfigError("sensitive_correlation outside [-1, 1]")


def generate_synthetic(spec: SyntheticSpec) -> EncodedDataset:
    """Deterministic blob dataset with both labels and both groups present."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    y = (np.arange(n) % 2).astype(int)  # exact class balance
    flip = rng.random(n) < (0.5 + 0.5 * spec.sensitive_correlation)
    s = np.where(flip, y, 1 - y)
    means = np.zeros((2, spec.d))
    means[1, 0] = spec.group_gap
    x = rng.normal(size=(n, spec.d)) + means[y]
    # min-max scale columns into [0, 1] like the real pipeline
    lo, hi = x.min(axis=0), x.max(axis=0)
    x = (x - lo) / np.where(hi > lo, hi - lo, 1.0)
    features = np.hstack([x, s[:, None].astype(float), np.ones((n, 1))])
    names = [f"x{j}" for j in range(spec.d)] + ["sensitive", "__bias__"]
    if len(set(s.tolist())) < 2 or len(set(y.tolist())) < 2:
        raise ConfigError("degenerate synthetic spec: one group or label missing")
    return EncodedDataset(
        features=features, labels=y, sensitive=s.astype(int), feature_names=names
    )


def even_shards(ds: EncodedDataset, num_clients: int, seed: int) -> list[ClientShard]:
    """Shuffle and split an encoded dataset into near-equal client shards."""
    rng = np.random.default_rng(seed)
    parts = np.array_split(rng.permutation(ds.n), num_clients)
    return [
        ClientShard(
            client_id=k,
            features=ds.features[idx],
            labels=ds.labels[idx],
            sensitive=ds.sensitive[idx],
        )
        for k, idx in enumerate(parts)
    ]


@dataclass(frozen=True)
class CensusSpec:
    """Census-like generator standing in for restricted survey data.

    Two sectors with different feature distributions and different
    sector-conditional label rules (so a single linear model is
    misspecified and sample reweighing matters), and a gender term in
    the label logit (so the unconstrained fit is demographically unfair).
    """

    n: int = 6000
    seed: int = 0
    p_private: float = 0.72
    p_male_private: float = 0.67
    p_male_other: float = 0.67
    gender_logit_private: float = 0.0  # direct label bias toward men (private)
    gender_logit_other: float = 0.0  # direct label bias toward men (other)
    skill_shift_private: float = 0.0  # male skill-score inflation, private
    skill_shift_other: float = 0.15  # male skill-score inflation, other
    latent_mean_private: float = 0.58
    latent_mean_other: float = 0.38
    latent_sd_private: float = 0.18  # skill varies (and matters) in private
    latent_sd_other: float = 0.06  # near-constant skill in the other sector
    hours_mean_private: float = 0.45
    hours_mean_other: float = 0.55
    hours_sd_private: float = 0.15  # hours vary in private too, but carry
    # no private-sector signal; this keeps the hours direction well
    # conditioned while the two sectors still disagree on its slope
    hours_sd_other: float = 0.18  # hours vary (and matter) in other
    private_coef: tuple = (-14.0, 24.0, 0.0)  # skill-driven sector
    other_coef: tuple = (-11.2, 1.0, 20.0)  # hours-driven sector
    # occupation effect on the other-sector logit (manual, service,
    # clerical, technical): spreads the other-sector rule over more
    # coordinates -- including two rare categories -- so it takes a
    # sizeable sample to estimate well
    occ_coef_other: tuple = (-1.4, 1.4, -1.6, 1.8)
    label_flip_other: float = 0.2  # label flip probability, other sector
    pension_p_private: float = 0.90  # enrollment rates control how far the
    pension_p_other: float = 0.10  # sectors sit apart in kernel space


CENSUS_SCHEMA = Schema(
    (
        ColumnSpec("skill", "numeric"),
        ColumnSpec("hours", "numeric"),
        ColumnSpec("education", "categorical"),
        ColumnSpec("occupation", "categorical"),
        ColumnSpec("schedule", "categorical"),
        ColumnSpec("pension", "categorical"),
        ColumnSpec("sector", "categorical", split_key=True),
        ColumnSpec("gender", "sensitive"),
        ColumnSpec("income", "label"),
    )
)

_EDU_LEVELS = ("basic", "highschool", "college", "bachelor", "advanced")
# bin edges bracket the private-sector decision threshold so the coarse
# credential alone supports an accurate (and unbiased) private-sector rule
_EDU_EDGES = (0.40, 0.52, 0.60, 0.68)
_OCC_LEVELS = ("manual", "service", "clerical", "technical")
# occupation mix per sector; mostly disjoint so sectors stay well
# separated in kernel space
_OCC_P_PRIVATE = (0.05, 0.05, 0.35, 0.55)
_OCC_P_OTHER = (0.50, 0.40, 0.05, 0.05)


def generate_census_like(spec: CensusSpec) -> RawTable:
    """Sample a raw census-like table (strings/floats, pre-encoding)."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    private = rng.random(n) < spec.p_private
    male = rng.random(n) < np.where(
        private, spec.p_male_private, spec.p_male_other
    )

    latent = np.where(
        private,
        rng.normal(spec.latent_mean_private, spec.latent_sd_private, n),
        rng.normal(spec.latent_mean_other, spec.latent_sd_other, n),
    )
    # the recorded skill score overstates men's ability (sector-dependent
    # measurement bias); labels are driven by the latent value
    skill = latent + np.where(
        private, spec.skill_shift_private, spec.skill_shift_other
    ) * male
    hours = np.where(
        private,
        rng.normal(spec.hours_mean_private, spec.hours_sd_private, n),
        rng.normal(spec.hours_mean_other, spec.hours_sd_other, n),
    )
    occ_private = rng.choice(len(_OCC_LEVELS), size=n, p=_OCC_P_PRIVATE)
    occ_other = rng.choice(len(_OCC_LEVELS), size=n, p=_OCC_P_OTHER)
    occ_idx = np.where(private, occ_private, occ_other)
    c0p, c1p, c2p = spec.private_coef
    c0o, c1o, c2o = spec.other_coef
    occ_term = np.asarray(spec.occ_coef_other, dtype=float)[occ_idx]
    logit = np.where(
        private,
        c0p + c1p * latent + c2p * hours + spec.gender_logit_private * male,
        c0o + c1o * latent + c2o * hours + occ_term
        + spec.gender_logit_other * male,
    )
    y = rng.random(n) < 1.0 / (1.0 + np.exp(-logit))
    # uniform label flips keep the optimal decision boundary intact but
    # put a floor under the sector's log-loss
    flips = (~private) & (rng.random(n) < spec.label_flip_other)
    y = np.where(flips, ~y, y)

    edu_latent = latent + rng.normal(0.0, 0.06, n)
    edu_idx = np.clip(
        np.digitize(edu_latent, _EDU_EDGES), 0, len(_EDU_LEVELS) - 1
    )
    regular = np.where(private, rng.random(n) < 0.92, rng.random(n) < 0.08)
    pension = np.where(
        private,
        rng.random(n) < spec.pension_p_private,
        rng.random(n) < spec.pension_p_other,
    )
    rows = [
        {
            "skill": float(skill[i]),
            "hours": float(hours[i]),
            "education": _EDU_LEVELS[edu_idx[i]],
            "occupation": _OCC_LEVELS[occ_idx[i]],
            "schedule": "regular" if regular[i] else "flexible",
            "pension": "enrolled" if pension[i] else "none",
            "sector": "private" if private[i] else "other",
            "gender": "male" if male[i] else "female",
            "income": "high" if y[i] else "low",
        }
        for i in range(n)
    ]
    return RawTable(schema=CENSUS_SCHEMA, rows=rows)


def write_census_csv(path, table: RawTable) -> None:
    names = [c.name for c in table.schema.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for row in table.rows:
            w.writerow({k: row[k] for k in names})


def census_split_spec(
    seed: int,
    train_fraction_group_a: float = 0.8,
    train_fraction_group_b: float = 0.2,
    client_assignment: str = "by_group",
    num_clients: int = 2,
) -> ShiftSplitSpec:
    return ShiftSplitSpec(
        split_column="sector",
        split_predicate=frozenset({"private"}),
        train_fraction_group_a=train_fraction_group_a,
        train_fraction_group_b=train_fraction_group_b,
        client_assignment=client_assignment,
        num_clients=num_clients,
        seed=seed,
    )


def prepare_census(
    seed: int,
    n: int = 6000,
    split_kwargs: dict | None = None,
    census_kwargs: dict | None = None,
):
    """Generate, encode and split a census-like dataset in one call."""
    table = generate_census_like(CensusSpec(n=n, seed=seed, **(census_kwargs or {})))
    ds = encode(table)
    split = census_split_spec(seed=seed, **(split_kwargs or {}))
    return shift_split(ds, split)


# ---------------------------------------------------------------------------
# experiment grid
# ---------------------------------------------------------------------------


def _grid_cell(algorithm: str, split_cfg: dict, hyper: HyperParams, data_cfg: dict, seed: int) -> dict:
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
    train, test, shards = prepare_census(
        seed=seed,
        n=int(data_cfg.get("n", 6000)),
        split_kwargs=split_kwargs,
        census_kwargs=data_cfg.get("census", None),
    )
    spec = AlgorithmSpec(kind=algorithm, hyper=replace(hyper, seed=seed))
    return run(spec, train, test, shards).final


def experiment_grid(config: dict, output_dir=None) -> list[dict]:
    """Run every (algorithm, split) cell, averaging over repetitions.

    Repetition r uses seed base_seed + r. Partial failures are recorded
    per cell and the grid continues.
    """
    algorithms = config.get("algorithms", ["FL", "AgnosticFair"])
    splits = config.get("splits", [{"name": "shift"}])
    reps = int(config.get("repetitions", 1))
    base_seed = int(config.get("base_seed", 0))
    hyper_cfg = dict(config.get("hyper", {}))
    if "lambda" in hyper_cfg:
        hyper_cfg["lam"] = hyper_cfg.pop("lambda")
    hyper = HyperParams(**hyper_cfg)
    data_cfg = dict(config.get("dataset", {}))

    summary = []
    for algorithm in algorithms:
        for split_cfg in splits:
            finals, errors = [], []
            for r in range(reps):
                try:
                    finals.append(
                        _grid_cell(algorithm, split_cfg, hyper, data_cfg, base_seed + r)
                    )
                except Exception as exc:  # noqa: BLE001 - grid must continue
                    log.error(
                        "cell (%s, %s) rep %d failed: %s",
                        algorithm,
                        split_cfg.get("name", "?"),
                        r,
                        exc,
                    )
                    errors.append(str(exc))
            row = {
                "algorithm": algorithm,
                "split": split_cfg.get("name", "unnamed"),
                "repetitions_ok": len(finals),
                "repetitions_failed": len(errors),
            }
            if finals:
                for key in ("train_acc", "test_acc", "test_rd"):
                    row[key] = float(np.mean([f[key] for f in finals]))
            if errors:
                row["errors"] = errors
            summary.append(row)

    if output_dir is not None:
        _write_summary(output_dir, summary)
    return summary


def _write_summary(output_dir, summary: list[dict]) -> None:
    import os

    os.makedirs(output_dir, exist_ok=True)
    cols = ["algorithm", "split", "repetitions_ok", "repetitions_failed",
            "train_acc", "test_acc", "test_rd"]
    with open(os.path.join(output_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in summary:
            w.writerow([row.get(c, "") for c in cols])
    with open(os.path.join(output_dir, "summary.yaml"), "w") as fh:
        yaml.safe_dump(summary, fh, sort_keys=False)


def write_round_csv(path, result: RunResult) -> None:
    """Per-round metric CSV: round, accuracies, risk differences."""
    if not result.per_round:
        return
    base_cols = ["round", "train_acc", "test_acc", "train_rd", "test_rd"]
    n_clients = len(result.per_round[0]["per_client_rd"])
    client_cols = [f"client{k}_rd" for k in range(n_clients)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(base_cols + client_cols)
        for row in result.per_round:
            w.writerow(
                [row[c] for c in base_cols]
                + [f"{v:.6f}" for v in row["per_client_rd"]]
            )


"""Client and server state machines with typed round messages.

One synchronous round: every client receives the broadcast (averaged
weights, mixture coefficients, global covariance vector), fits its local
weights, and replies with a coefficient bundle; the server aggregates
the bundles, refreshes the mixture coefficients by LP, averages the
weights and emits the next broadcast. Messages carry only length-M and
length-(d+1) vectors plus scalars -- never raw samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from fedfair import fairness, kernels, logistic, lp
from fedfair.data import ClientShard
from fedfair.errors import ConfigError, ProtocolError

#: penalty modes for the local fairness term
PENALTY_GLOBAL = "global"  # weighted global covariance (flagship algorithm)
PENALTY_UNWEIGHTED = "unweighted"  # theta == 1 inside the covariance
PENALTY_LOCAL = "local"  # per-client covariance with local sensitive mean
PENALTY_NONE = "none"


@dataclass(frozen=True)
class ProtocolConfig:
    lam: float = 2.0
    tau: float = 0.05
    penalty_mode: str = PENALTY_NONE
    optimize_alpha: bool = True
    fairness_row_in_lp: bool = False
    opt: logistic.OptimizerSpec = field(default_factory=logistic.OptimizerSpec)
    debug_lp_dump: str | None = None

    def __post_init__(self):
        if self.penalty_mode not in (
            PENALTY_GLOBAL,
            PENALTY_UNWEIGHTED,
            PENALTY_LOCAL,
            PENALTY_NONE,
        ):
            raise ConfigError(f"unknown penalty mode {self.penalty_mode!r}")


@dataclass(frozen=True)
class CoefficientBundle:
    client_id: int
    psi_L: np.ndarray  # (M,)
    psi_theta: np.ndarray  # (M,)
    psi_C: np.ndarray  # (M,)
    phi_C: np.ndarray  # (d+1,)
    w_local: np.ndarray  # (d+1,)

    def to_dict(self) -> dict:
        return {
            "type": "bundle",
            "client_id": self.client_id,
            "psi_L": self.psi_L.tolist(),
            "psi_theta": self.psi_theta.tolist(),
            "psi_C": self.psi_C.tolist(),
            "phi_C": self.phi_C.tolist(),
            "w_local": self.w_local.tolist(),
        }


@dataclass(frozen=True)
class ServerBroadcast:
    round: int
    w_avg: np.ndarray
    alpha: np.ndarray
    phi_C_global: np.ndarray

    def to_dict(self) -> dict:
        return {
            "type": "broadcast",
            "round": self.round,
            "w_avg": self.w_avg.tolist(),
            "alpha": self.alpha.tolist(),
            "phi_C_global": self.phi_C_global.tolist(),
        }


@dataclass
class ClientState:
    shard: ClientShard
    kernel_matrix: np.ndarray
    w: np.ndarray
    stats: fairness.FairnessStats
    local_s_bar: float
    expected_round: int = 0


@dataclass
class ServerState:
    round: int
    alpha: np.ndarray
    w_avg: np.ndarray
    stats: fairness.FairnessStats
    basis: kernels.KernelBasis
    num_clients: int
    last_lp: lp.LPSolution | None = None


class MessageLog:
    """Line-delimited JSON log of every exchanged message."""

    def __init__(self, path):
        self.path = path

    def record(self, sender: str, message) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"sender": sender, **message.to_dict()}) + "\n")


def _penalty_for(state: ClientState, bc: ServerBroadcast, cfg: ProtocolConfig):
    dim = state.shard.features.shape[1]
    if cfg.penalty_mode == PENALTY_NONE or cfg.lam == 0.0:
        return logistic.PenaltySpec.disabled(dim)
    if cfg.penalty_mode == PENALTY_LOCAL:
        # covariance over this shard only, with the local sensitive mean;
        # the target is exact local parity (zero covariance), not the
        # relaxed tau used by the agnostic constraint
        weights = (state.shard.sensitive - state.local_s_bar).astype(float)
        phi = state.shard.features.T @ weights / state.shard.n
        return logistic.PenaltySpec(lam=cfg.lam, tau=0.0, phi_c=phi)
    return logistic.PenaltySpec(lam=cfg.lam, tau=cfg.tau, phi_c=bc.phi_C_global)


def _phi_weights(state: ClientState, bc: ServerBroadcast, cfg: ProtocolConfig):
    if cfg.penalty_mode in (PENALTY_UNWEIGHTED, PENALTY_LOCAL):
        return np.ones(state.shard.n)
    return kernels.theta(state.kernel_matrix, bc.alpha)


def client_round(
    state: ClientState, bc: ServerBroadcast, cfg: ProtocolConfig
) -> CoefficientBundle:
    """Local weight fit followed by coefficient extraction at the new w."""
    if bc.round != state.expected_round:
        raise ProtocolError(
            f"client {state.shard.client_id} expected round "
            f"{state.expected_round}, got {bc.round}"
        )
    th = kernels.theta(state.kernel_matrix, bc.alpha)
    penalty = _penalty_for(state, bc, cfg)
    w_new = logistic.fit_local(bc.w_avg, state.shard, th, penalty, cfg.opt)

    n = state.stats.n_total
    losses = logistic.per_sample_logloss(w_new, state.shard.features, state.shard.labels)
    psi_L = state.kernel_matrix.T @ losses / n
    psi_theta = state.kernel_matrix.sum(axis=0) / n
    psi_C = fairness.covariance_coeff_alpha(
        state.shard, state.kernel_matrix, w_new, state.stats
    )
    phi_C = fairness.covariance_coeff_w(
        state.shard, _phi_weights(state, bc, cfg), state.stats
    )

    bundle = CoefficientBundle(
        client_id=state.shard.client_id,
        psi_L=psi_L,
        psi_theta=psi_theta,
        psi_C=psi_C,
        phi_C=phi_C,
        w_local=w_new,
    )
    for name, vec in (
        ("psi_L", psi_L),
        ("psi_theta", psi_theta),
        ("psi_C", psi_C),
        ("phi_C", phi_C),
        ("w_local", w_new),
    ):
        if not np.all(np.isfinite(vec)):
            raise ProtocolError(
                f"client {state.shard.client_id}: non-finite {name} in bundle"
            )
    state.w = w_new
    state.expected_round += 1
    return bundle


def server_round(
    state: ServerState, bundles: list[CoefficientBundle], cfg: ProtocolConfig
) -> ServerBroadcast:
    """Aggregate bundles, refresh alpha by LP, average weights, broadcast."""
    if len(bundles) != state.num_clients:
        raise ProtocolError(
            f"round {state.round}: got {len(bundles)} bundles, "
            f"expected {state.num_clients}"
        )
    psi_L = np.sum([b.psi_L for b in bundles], axis=0)
    psi_theta = np.sum([b.psi_theta for b in bundles], axis=0)
    psi_C = np.sum([b.psi_C for b in bundles], axis=0)
    phi_C = np.sum([b.phi_C for b in bundles], axis=0)
    w_avg = np.mean([b.w_local for b in bundles], axis=0)

    if cfg.optimize_alpha:
        problem = lp.AlphaLP(
            objective=psi_L,
            equality=psi_theta,
            fairness_row=psi_C if cfg.fairness_row_in_lp else None,
            tau=cfg.tau,
            box_upper=state.basis.bound,
        )
        if cfg.debug_lp_dump:
            lp.dump_lp(problem, cfg.debug_lp_dump)
        solution = lp.solve(problem)
        if solution.status == lp.STATUS_ERROR:
            raise ProtocolError(f"round {state.round}: alpha LP unsolvable")
        state.last_lp = solution
        state.alpha = solution.alpha

    state.w_avg = w_avg
    state.round += 1
    return ServerBroadcast(
        round=state.round,
        w_avg=w_avg,
        alpha=state.alpha.copy(),
        phi_C_global=phi_C,
    )


def init_protocol(
    shards: list[ClientShard],
    basis: kernels.KernelBasis,
    cfg: ProtocolConfig,
) -> tuple[ServerState, list[ClientState], ServerBroadcast]:
    """Stats round plus kernel precomputation; returns round-0 broadcast.

    Initial weights are zero; initial alpha is the uniform vector solving
    the sum-to-one row, alpha_m = 1 / sum_m psi_theta_m.
    """
    if not shards:
        raise ConfigError("init_protocol needs at least one shard")
    stats = fairness.compute_stats(shards)
    kms = [kernels.kernel_matrix(s, basis) for s in shards]
    psi_theta = np.sum([km.sum(axis=0) for km in kms], axis=0) / stats.n_total
    total = float(psi_theta.sum())
    if total <= 0.0:
        raise ConfigError("all-zero equality row; cannot initialize alpha")
    alpha0 = np.full(basis.num_bases, 1.0 / total)
    dim = shards[0].features.shape[1]
    w0 = np.zeros(dim)

    clients = [
        ClientState(
            shard=s,
            kernel_matrix=km,
            w=w0.copy(),
            stats=stats,
            local_s_bar=float(s.sensitive.mean()),
        )
        for s, km in zip(shards, kms)
    ]
    # phi_C does not depend on w, so the stats round can already ship the
    # exact alpha0-weighted covariance vector; otherwise the first local
    # fit would run with a zero (disabled) penalty.
    phi0 = np.sum(
        [
            fairness.covariance_coeff_w(s, kernels.theta(km, alpha0), stats)
            for s, km in zip(shards, kms)
        ],
        axis=0,
    )
    server = ServerState(
        round=0,
        alpha=alpha0,
        w_avg=w0,
        stats=stats,
        basis=basis,
        num_clients=len(shards),
    )
    bc0 = ServerBroadcast(
        round=0, w_avg=w0, alpha=alpha0.copy(), phi_C_global=phi0
    )
    return server, clients, bc0

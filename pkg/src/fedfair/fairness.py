"""Fairness metrics and covariance-constraint coefficient algebra.

Risk difference (plain and reweighted) is evaluation-only; training uses
the decision-boundary covariance surrogate, which is linear separately
in the model weights w and in the mixture coefficients alpha:

    cov = (1/n) sum_i (s_i - s_bar) * theta_i * (w . x_i)
        = w . phi_C            with phi_C  = (1/n) sum_i (s_i - s_bar) theta_i x_i
        = alpha . psi_C        with psi_C,m = (1/n) sum_i (s_i - s_bar) K_m(x_i) (w . x_i)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from fedfair.data import ClientShard
from fedfair.errors import MetricUndefinedError


@dataclass(frozen=True)
class FairnessStats:
    s_bar: float
    n_total: int
    per_client_counts: tuple[tuple[int, int], ...]  # (n_k, sum of s)


@dataclass
class RiskDifferenceReport:
    rd: float
    group_rates: dict[int, float]
    group_counts: dict[int, int]


def compute_stats(shards: list[ClientShard]) -> FairnessStats:
    """Pool per-client (n_k, sum s) into the global sensitive mean."""
    counts = tuple((int(s.n), int(s.sensitive.sum())) for s in shards)
    n = sum(c[0] for c in counts)
    s_sum = sum(c[1] for c in counts)
    s_bar = s_sum / n
    if s_bar in (0.0, 1.0):
        warnings.warn(
            "sensitive attribute is constant; covariance constraint degenerates"
        )
    return FairnessStats(s_bar=s_bar, n_total=n, per_client_counts=counts)


def risk_difference(predictions: np.ndarray, sensitive: np.ndarray) -> RiskDifferenceReport:
    """|P(yhat=1 | s=1) - P(yhat=1 | s=0)| over the given samples."""
    predictions = np.asarray(predictions)
    sensitive = np.asarray(sensitive)
    rates, counts = {}, {}
    for g in (0, 1):
        mask = sensitive == g
        counts[g] = int(mask.sum())
        if counts[g] == 0:
            raise MetricUndefinedError(f"sensitive group {g} is empty")
        rates[g] = float(predictions[mask].mean())
    return RiskDifferenceReport(
        rd=abs(rates[1] - rates[0]), group_rates=rates, group_counts=counts
    )


def reweighted_risk_difference(
    predictions: np.ndarray, sensitive: np.ndarray, theta: np.ndarray
) -> float:
    """Risk difference under sample weights theta; reduces to the plain
    metric when theta is uniform."""
    predictions = np.asarray(predictions)
    sensitive = np.asarray(sensitive)
    theta = np.asarray(theta, dtype=float)
    rates = {}
    for g in (0, 1):
        mask = sensitive == g
        denom = float(theta[mask].sum())
        if denom <= 0.0:
            raise MetricUndefinedError(f"group {g} has zero total weight")
        rates[g] = float(theta[mask & (predictions == 1)].sum()) / denom
    return abs(rates[1] - rates[0])


def covariance_coeff_w(
    shard: ClientShard, theta: np.ndarray, stats: FairnessStats
) -> np.ndarray:
    """phi_C,k = (1/n) sum_{i in k} (s_i - s_bar) theta_i x_i."""
    weights = (shard.sensitive - stats.s_bar) * theta
    return shard.features.T @ weights / stats.n_total


def covariance_coeff_alpha(
    shard: ClientShard, km: np.ndarray, w: np.ndarray, stats: FairnessStats
) -> np.ndarray:
    """psi_C,k with entry m = (1/n) sum_{i in k} (s_i - s_bar) K_m(x_i) (w . x_i)."""
    margins = shard.features @ w
    weights = (shard.sensitive - stats.s_bar) * margins
    return km.T @ weights / stats.n_total

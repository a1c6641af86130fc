"""Kernel bases and the linearly parametrized sample-reweighing function.

Sample weights are mixtures theta_i = sum_m alpha_m * K_m(x_i) with
nonnegative, box-bounded mixture coefficients alpha. Three basis kinds
are supported:

* ``gaussian``  -- K_m(x) = exp(-||b_m - x||^2 / (2 sigma^2)) with centers
  b_m sampled from the training data,
* ``constant``  -- K == 1 with M = 1, making plain federated averaging an
  exact special case of the same machinery,
* ``indicator`` -- M = p with K_k(x) = 1 iff x belongs to client k,
  realizing client-level mixture weighting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from fedfair.data import ClientShard
from fedfair.errors import ConfigError

GAUSSIAN = "gaussian"
CONSTANT = "constant"
INDICATOR = "indicator"


@dataclass(frozen=True)
class KernelBasis:
    kind: str
    centers: np.ndarray  # (M, d+1); unused for constant/indicator kinds
    sigma: float
    bound: float  # upper box bound B on each mixture coefficient

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, CONSTANT, INDICATOR):
            raise ConfigError(f"unknown basis kind {self.kind!r}")
        if self.num_bases < 1:
            raise ConfigError("basis needs at least one component")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.bound <= 0:
            raise ConfigError("coefficient bound must be positive")

    @property
    def num_bases(self) -> int:
        return self.centers.shape[0]


def proportional_quotas(sizes: list[int], total: int) -> list[int]:
    """Split *total* across shards proportionally to their sizes.

    Floors the exact quotas, then hands the remainder to the largest
    shards (ties broken by lower index).
    """
    n = sum(sizes)
    exact = [total * s / n for s in sizes]
    quotas = [int(q) for q in exact]
    remainder = total - sum(quotas)
    order = sorted(range(len(sizes)), key=lambda k: (-sizes[k], k))
    for k in order[:remainder]:
        quotas[k] += 1
    return quotas


def select_basis(
    shards: list[ClientShard],
    num_bases: int,
    seed: int,
    sigma: float = 1.0,
    bound: float = 5.0,
) -> KernelBasis:
    """Sample Gaussian centers from client data, proportionally per shard.

    Each client nominates local rows (without replacement); the per-shard
    quota is proportional to its sample count. Note the centers are raw
    rows, so this leaks M samples to the server by construction.
    """
    sizes = [s.n for s in shards]
    if num_bases > sum(sizes):
        raise ConfigError(
            f"cannot select {num_bases} centers from {sum(sizes)} samples"
        )
    quotas = proportional_quotas(sizes, num_bases)
    rng = np.random.default_rng(seed)
    picked = []
    for shard, quota in zip(shards, quotas):
        if quota > shard.n:
            raise ConfigError(
                f"client {shard.client_id} quota {quota} exceeds its {shard.n} rows"
            )
        idx = rng.choice(shard.n, size=quota, replace=False)
        picked.append(shard.features[np.sort(idx)])
    centers = np.vstack(picked)
    return KernelBasis(kind=GAUSSIAN, centers=centers, sigma=sigma, bound=bound)


def constant_basis(dim: int, bound: float = 5.0) -> KernelBasis:
    """Single constant basis K == 1; theta is then uniform alpha_1."""
    return KernelBasis(
        kind=CONSTANT, centers=np.zeros((1, dim)), sigma=1.0, bound=bound
    )


def client_weight_basis(shards: list[ClientShard]) -> KernelBasis:
    """Indicator basis with one component per client (M = p).

    The bound is n / min_k n_k rather than the Gaussian-mixture default:
    the client-level adversary ranges over every mixture of client
    distributions, and committing all mass to the smallest client needs
    a per-sample weight of n / n_k, which a small fixed box would clip.
    """
    if not shards:
        raise ConfigError("client_weight_basis needs at least one shard")
    dim = shards[0].features.shape[1]
    total = sum(s.n for s in shards)
    bound = total / min(s.n for s in shards)
    return KernelBasis(
        kind=INDICATOR, centers=np.zeros((len(shards), dim)), sigma=1.0, bound=bound
    )


def kernel_matrix(shard: ClientShard, basis: KernelBasis) -> np.ndarray:
    """Evaluate every basis function on every shard sample: (n_k, M)."""
    if basis.kind == CONSTANT:
        return np.ones((shard.n, 1))
    if basis.kind == INDICATOR:
        km = np.zeros((shard.n, basis.num_bases))
        km[:, shard.client_id] = 1.0
        return km
    if shard.features.shape[1] != basis.centers.shape[1]:
        raise ConfigError(
            f"feature dim {shard.features.shape[1]} != basis dim "
            f"{basis.centers.shape[1]}"
        )
    # squared distances via (x - b)^2 expansion
    x2 = np.sum(shard.features**2, axis=1)[:, None]
    b2 = np.sum(basis.centers**2, axis=1)[None, :]
    cross = shard.features @ basis.centers.T
    sq = np.maximum(x2 + b2 - 2.0 * cross, 0.0)
    return np.exp(-sq / (2.0 * basis.sigma**2))


def theta(km: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Per-sample weights theta_i = sum_m alpha_m K_m(x_i)."""
    alpha = np.asarray(alpha, dtype=float)
    if km.shape[1] != alpha.shape[0]:
        raise ConfigError(
            f"kernel matrix has {km.shape[1]} bases, alpha has {alpha.shape[0]}"
        )
    return km @ alpha


def save_basis_csv(path, basis: KernelBasis) -> None:
    """Persist centers with sigma/B in the header for reproducibility."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"kind={basis.kind}", f"sigma={basis.sigma}", f"bound={basis.bound}"])
        for row in basis.centers:
            w.writerow([f"{v:.12g}" for v in row])

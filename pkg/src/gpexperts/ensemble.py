"""Pools of exact GP experts sharing one set of hyperparameters.

Per-expert work (LML terms, gradients, factorizations, predictions) is a map
over experts on a thread pool; results are always reduced in expert-index
order so the output does not depend on the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .aggregate import ExpertSlice
from .errors import InvalidArgumentError, NumericalFailureError
from .gp import (
    Dataset,
    FitOptions,
    FitResult,
    Space,
    TrainedGP,
    default_init,
    lml_and_grad,
    log_marginal_likelihood,
    maximize,
    predict,
    train_gp,
)
from .numerics import Hyperparameters
from .partition import Partition

__all__ = [
    "GrbcmStructure",
    "ExpertPool",
    "pool_lml",
    "pool_lml_and_grad",
    "train_pool",
    "build_grbcm",
    "with_grbcm",
    "predict_experts",
    "predict_grbcm",
]


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _per_expert(fn):
    def run(args):
        j, item = args
        try:
            return fn(item)
        except NumericalFailureError as err:
            raise NumericalFailureError(f"expert {j}: {err}", expert=j, **err.details) from err
    return run


@dataclass(frozen=True, eq=False)
class GrbcmStructure:
    """Master expert on the global sample ``D^c`` and children on ``D^c ∪ D^(j)``."""

    master: TrainedGP
    children: tuple[TrainedGP, ...]
    master_rows: np.ndarray
    child_rows: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class ExpertPool:
    experts: tuple[TrainedGP, ...]
    shared_hyp: Hyperparameters
    partition: Partition
    fit: FitResult | None = None
    grbcm: GrbcmStructure | None = None

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    def sizes(self) -> list[int]:
        return [e.n for e in self.experts]

    def jitter_events(self) -> int:
        """Number of factorizations in the pool that needed diagonal jitter."""
        gps = list(self.experts)
        if self.grbcm is not None:
            gps += [self.grbcm.master, *self.grbcm.children]
        return sum(1 for g in gps if g.factor.jitter > 0)


def pool_lml(datasets, hyp: Hyperparameters, workers: int = 1) -> float:
    """Sum of per-expert log marginal likelihoods (independent experts)."""
    run = _per_expert(lambda d: log_marginal_likelihood(d, hyp))
    terms = _map(run, enumerate(datasets), workers)
    return float(np.sum(np.asarray(terms)))


def pool_lml_and_grad(datasets, hyp: Hyperparameters, workers: int = 1) -> tuple[float, np.ndarray]:
    run = _per_expert(lambda d: lml_and_grad(d, hyp))
    terms = _map(run, enumerate(datasets), workers)
    vals = np.asarray([t[0] for t in terms])
    grads = np.stack([t[1] for t in terms])
    return float(np.sum(vals)), np.sum(grads, axis=0)


def _factorize_all(datasets, hyp, workers, label="expert"):
    def one(args):
        j, d = args
        return train_gp(d, hyp, name=f"{label} {j} covariance")
    return tuple(_map(one, enumerate(datasets), workers))


def train_pool(data: Dataset, partition: Partition, init: Hyperparameters | None = None,
               opts: FitOptions | None = None, workers: int = 1) -> ExpertPool:
    """Fit shared hyperparameters on the summed expert LML, then factorize each expert.

    Parameters
    ----------
    data : Dataset
        Standardized training data; ``partition`` indexes its rows.
    init : Hyperparameters, optional
        Starting point, defaulting to ``default_init(data.X)``.
    workers : int
        Thread count for the per-expert map. Results do not depend on it.
    """
    if partition.n != data.n:
        raise InvalidArgumentError(f"partition covers {partition.n} rows, dataset has {data.n}")
    init = default_init(data.X) if init is None else init
    datasets = [data.subset(rows) for rows in partition.subsets()]
    result = maximize(lambda h: pool_lml_and_grad(datasets, h, workers), init, opts)
    experts = _factorize_all(datasets, result.hyp, workers)
    return ExpertPool(experts, result.hyp, partition, result)


def build_grbcm(data: Dataset, partition: Partition, hyp: Hyperparameters,
                master_fraction: float | None = None, seed: int = 0, workers: int = 1) -> GrbcmStructure:
    """Build grBCM's master and augmented children with fixed hyperparameters.

    The master gets a seeded uniform sample of all training rows. Its size is
    the mean expert size ``n / J``, or ``master_fraction * n`` if that is
    smaller. Children are built for partition subsets 1..J-1; each child sees
    the master rows plus its own rows that were not sampled into the master.
    Subset 0 contributes only through the master sample.
    """
    J = partition.n_experts
    n = data.n
    if partition.n != n:
        raise InvalidArgumentError(f"partition covers {partition.n} rows, dataset has {n}")
    if J < 2:
        raise InvalidArgumentError("grBCM needs at least two partition subsets (one master slot, one child)")
    size = max(1, round(n / J))
    if master_fraction is not None:
        if not 0.0 < master_fraction < 1.0:
            raise InvalidArgumentError(f"master_fraction must lie in (0, 1), got {master_fraction}")
        size = min(size, round(master_fraction * n))
    if size < 1:
        raise InvalidArgumentError("master sample would be empty")
    rng = np.random.default_rng(seed)
    master_rows = np.sort(rng.choice(n, size=size, replace=False))
    in_master = np.zeros(n, dtype=bool)
    in_master[master_rows] = True
    child_rows = []
    for j in range(1, J):
        own = partition.rows(j)
        child_rows.append(np.concatenate([master_rows, own[~in_master[own]]]))
    master = train_gp(data.subset(master_rows), hyp, name="grBCM master covariance")
    children = _factorize_all([data.subset(r) for r in child_rows], hyp, workers, label="grBCM child")
    return GrbcmStructure(master, children, master_rows, tuple(child_rows))


def with_grbcm(pool: ExpertPool, data: Dataset, master_fraction: float | None = None,
               seed: int = 0, workers: int = 1) -> ExpertPool:
    """Return ``pool`` with its grBCM structure attached (shared hyperparameters, no refit)."""
    g = build_grbcm(data, pool.partition, pool.shared_hyp, master_fraction, seed, workers)
    return replace(pool, grbcm=g)


def _stack_predictions(gps, X_star, space, workers):
    preds = _map(lambda g: predict(g, X_star, space), gps, workers)
    return np.stack([p.mean for p in preds], axis=-1), np.stack([p.variance for p in preds], axis=-1)


def _prior_variance(hyp, t, space):
    v = hyp.signal_var + (hyp.noise_var if space is Space.Y_SPACE else 0.0)
    return np.full(t, v)


def _as_test_matrix(X_star, dim):
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[:, None] if dim == 1 else X_star[None, :]
    return X_star


def predict_experts(pool: ExpertPool, X_star, space: Space = Space.F_SPACE, workers: int = 1) -> ExpertSlice:
    """Every expert's predictive marginals at every test point, shape ``(t, J)``.

    The slice also carries the prior variance ``k(x*, x*)`` (plus σ_y² in
    y-space) that the rBCM correction needs.
    """
    X_star = _as_test_matrix(X_star, pool.shared_hyp.dim)
    means, variances = _stack_predictions(pool.experts, X_star, space, workers)
    return ExpertSlice(means, variances, _prior_variance(pool.shared_hyp, X_star.shape[0], space), space)


def predict_grbcm(pool: ExpertPool, X_star, space: Space = Space.F_SPACE, workers: int = 1) -> ExpertSlice:
    """Children predictions plus the master's, ready for ``aggregate_grbcm``."""
    if pool.grbcm is None:
        raise InvalidArgumentError("pool has no grBCM structure; call with_grbcm first")
    X_star = _as_test_matrix(X_star, pool.shared_hyp.dim)
    means, variances = _stack_predictions(pool.grbcm.children, X_star, space, workers)
    master = predict(pool.grbcm.master, X_star, space)
    return ExpertSlice(means, variances, _prior_variance(pool.shared_hyp, X_star.shape[0], space), space,
                       master.mean, master.variance)


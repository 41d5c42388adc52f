"""Experiment harness: split, train one pool, score every aggregation cell."""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..aggregate import AggregationConfig, Functional, Method, WeightingSpec, aggregate
from ..ensemble import ExpertPool, predict_experts, predict_grbcm, train_pool, with_grbcm
from ..errors import InvalidArgumentError, NumericalFailureError, ParseError
from ..gp import Dataset, FitOptions, Space, fit, lift_to_y, predict, train_gp
from ..partition import Strategy, kmeans_partition, random_partition
from .data import read_table, split_indices, synth_1d_arrays, synth_1d_test_arrays
from .metrics import mean_nlpd, rmse

__all__ = [
    "CellSpec",
    "DatasetSpec",
    "ExperimentConfig",
    "MetricsRow",
    "SweepAxis",
    "Split",
    "PRESETS",
    "preset_cell",
    "bench_options",
    "prepare_split",
    "train_for",
    "run_experiment",
    "sweep",
]


class SweepAxis(enum.Enum):
    TEMPERATURE = "temperature"
    POINTS_PER_EXPERT = "points_per_expert"


@dataclass(frozen=True)
class CellSpec:
    """A named aggregation setting evaluated on the shared pool."""

    name: str
    config: AggregationConfig

    def to_dict(self) -> dict:
        c = self.config
        return {
            "name": self.name,
            "method": c.method.value,
            "functional": c.weighting.functional.value,
            "transform": c.weighting.transform.value,
            "temperature": c.weighting.temperature,
            "normalized": c.weighting.normalized,
            "space": c.space.value,
            "barycenter_mode": c.barycenter_mode.value,
        }

    @classmethod
    def from_dict(cls, d, temperature: float = 100.0) -> "CellSpec":
        if isinstance(d, str):
            return preset_cell(d, temperature)
        d = dict(d)
        base = preset_cell(d.pop("preset"), temperature) if "preset" in d else None
        try:
            name = d.pop("name") if "name" in d else (base.name if base else None)
            if name is None:
                raise ParseError("cell needs a name or a preset")
            cur = base.to_dict() if base else {}
            cur.update(d)
            w = WeightingSpec(cur.get("functional", "uniform"), cur.get("transform", "softmax"),
                              cur.get("temperature", temperature), cur.get("normalized", True))
            cfg = AggregationConfig(cur.get("method", "gpoe"), w, cur.get("space", "f"),
                                    cur.get("barycenter_mode", "variance_avg"))
        except (ValueError, TypeError) as err:
            if isinstance(err, ParseError):
                raise
            raise ParseError(f"invalid cell {d!r}: {err}") from err
        return cls(name, cfg)

    def with_temperature(self, T: float) -> "CellSpec":
        return CellSpec(self.name, replace(self.config, weighting=replace(self.config.weighting, temperature=T)))


def _cell(name, method, weighting, space=Space.F_SPACE):
    return CellSpec(name, AggregationConfig(method, weighting, space))


PRESETS = {
    "PoE": lambda T: _cell("PoE", Method.POE, WeightingSpec.uniform(False)),
    "BCM": lambda T: _cell("BCM", Method.BCM, WeightingSpec.uniform(False)),
    "gPoE_unif": lambda T: _cell("gPoE_unif", Method.GPOE, WeightingSpec.uniform()),
    "rBCM_unif": lambda T: _cell("rBCM_unif", Method.RBCM, WeightingSpec.uniform()),
    "gPoE_var": lambda T: _cell("gPoE_var", Method.GPOE, WeightingSpec.softmax(Functional.VARIANCE, T)),
    "rBCM_var": lambda T: _cell("rBCM_var", Method.RBCM, WeightingSpec.softmax(Functional.VARIANCE, T)),
    "rBCM_entr": lambda T: _cell("rBCM_entr", Method.RBCM, WeightingSpec.diff_entropy()),
    "BAR_var": lambda T: _cell("BAR_var", Method.BARYCENTER, WeightingSpec.softmax(Functional.VARIANCE, T)),
    "grBCM_f": lambda T: _cell("grBCM_f", Method.GRBCM, WeightingSpec.diff_entropy()),
    "grBCM_y": lambda T: _cell("grBCM_y", Method.GRBCM, WeightingSpec.diff_entropy(), Space.Y_SPACE),
}

TABLE_CELLS = ("gPoE_unif", "gPoE_var", "rBCM_entr", "BAR_var", "grBCM_f")


def preset_cell(name: str, temperature: float = 100.0) -> CellSpec:
    try:
        return PRESETS[name](temperature)
    except KeyError:
        raise ParseError(f"unknown cell preset {name!r}; known: {', '.join(PRESETS)}") from None


@dataclass(frozen=True)
class DatasetSpec:
    """Either a CSV file or the synthetic 1-D gap benchmark.

    For the synthetic kind, ``test_points`` switches from a held-out split to
    a separate evaluation set spread over the whole input domain.
    """

    path: str | None = None
    target: str | int | None = None
    synthetic_n: int | None = None
    noise_std: float = 0.1
    test_points: int | None = None

    def __post_init__(self):
        if (self.path is None) == (self.synthetic_n is None):
            raise InvalidArgumentError("dataset needs exactly one of a path or a synthetic size")

    @property
    def synthetic(self) -> bool:
        return self.synthetic_n is not None

    @property
    def name(self) -> str:
        return "synthetic" if self.synthetic else Path(self.path).stem

    def to_dict(self) -> dict:
        if self.synthetic:
            return {"synthetic": {"n": self.synthetic_n, "noise_std": self.noise_std,
                                  "test_points": self.test_points}}
        return {"path": self.path, "target": self.target}

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "DatasetSpec":
        if not isinstance(d, dict):
            raise ParseError("dataset must be an object")
        if "synthetic" in d:
            s = d["synthetic"]
            return cls(synthetic_n=int(s.get("n", 300)), noise_std=float(s.get("noise_std", 0.1)),
                       test_points=None if s.get("test_points") is None else int(s["test_points"]))
        if "path" not in d:
            raise ParseError("dataset needs 'path' or 'synthetic'")
        path = Path(d["path"]).expanduser()
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return cls(path=str(path), target=d.get("target"))


# one extra start with short lengthscales keeps fast-varying targets out of
# the all-noise optimum that the default init can fall into
BENCH_RESTARTS = (0.1,)


def bench_options(**kw) -> FitOptions:
    kw.setdefault("lengthscale_restarts", BENCH_RESTARTS)
    return FitOptions(**kw)


def _options_from_dict(d: dict) -> FitOptions:
    known = {f.name for f in fields(FitOptions)}
    extra = set(d) - known
    if extra:
        raise ParseError(f"unknown optimizer setting(s): {', '.join(sorted(extra))}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return bench_options(**kw)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    cells: tuple[CellSpec, ...] = ()
    test_fraction: float = 0.1
    seed: int = 0
    partition: Strategy = Strategy.KMEANS
    points_per_expert: int = 100
    optimizer: FitOptions = field(default_factory=bench_options)
    grbcm_master_fraction: float | None = None
    baselines: bool = True
    baseline_max_n: int = 2000
    kmeans_max_iter: int = 100
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "partition", Strategy(self.partition))
        object.__setattr__(self, "cells", tuple(self.cells))
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidArgumentError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.points_per_expert < 1:
            raise InvalidArgumentError("points_per_expert must be at least 1")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be at least 1")
        names = [c.name for c in self.cells]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"duplicate cell names in {names}")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "partition": self.partition.value,
            "points_per_expert": self.points_per_expert,
            "cells": [c.to_dict() for c in self.cells],
            "optimizer": self.optimizer.to_dict(),
            "grbcm_master_fraction": self.grbcm_master_fraction,
            "baselines": self.baselines,
            "baseline_max_n": self.baseline_max_n,
            "kmeans_max_iter": self.kmeans_max_iter,
            "workers": self.workers,
        }

    def provenance(self, **extra) -> dict:
        """Report provenance: the config minus ``workers``, which never changes results."""
        cfg = self.to_dict()
        del cfg["workers"]
        return {"config": cfg, "seed": self.seed, **extra}

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ParseError("config must be a JSON object")
        known = {f.name for f in fields(cls)} | {"temperature"}
        extra = set(d) - known
        if extra:
            raise ParseError(f"unknown config key(s): {', '.join(sorted(extra))}")
        if "dataset" not in d:
            raise ParseError("config needs a 'dataset'")
        T = float(d.get("temperature", 100.0))
        try:
            return cls(
                dataset=DatasetSpec.from_dict(d["dataset"], base_dir),
                cells=tuple(CellSpec.from_dict(c, T) for c in d.get("cells", TABLE_CELLS)),
                test_fraction=float(d.get("test_fraction", 0.1)),
                seed=int(d.get("seed", 0)),
                partition=Strategy(d.get("partition", "kmeans")),
                points_per_expert=int(d.get("points_per_expert", 100)),
                optimizer=_options_from_dict(d.get("optimizer", {})),
                grbcm_master_fraction=d.get("grbcm_master_fraction"),
                baselines=bool(d.get("baselines", True)),
                baseline_max_n=int(d.get("baseline_max_n", 2000)),
                kmeans_max_iter=int(d.get("kmeans_max_iter", 100)),
                workers=int(d.get("workers", 1)),
            )
        except ParseError:
            raise
        except (ValueError, TypeError) as err:
            raise ParseError(f"invalid config: {err}") from err

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as err:
            raise ParseError(f"cannot read config {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: invalid JSON: {err}") from err
        return cls.from_dict(raw, base_dir=path.parent)


@dataclass
class MetricsRow:
    """One evaluated cell. ``seconds`` is excluded from equality."""

    dataset: str
    partition: str
    points_per_expert: int
    n_experts: int
    cell: str
    method: str
    functional: str
    transform: str
    temperature: float | None
    normalized: bool | None
    space: str
    barycenter_mode: str
    sweep_axis: str
    sweep_value: float | None
    n_train: int
    n_test: int
    nlpd: float
    rmse: float
    seconds: float = field(default=0.0, compare=False)
    expert_sizes: list[int] = field(default_factory=list)
    jitter_events: int = 0
    precision_failures: int = 0
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class Split:
    """Standardized training set plus the test set in the same units."""

    name: str
    train: Dataset
    X_test: np.ndarray
    y_test: np.ndarray


def prepare_split(config: ExperimentConfig) -> Split:
    """Load or generate data and standardize on the training rows only."""
    spec = config.dataset
    if spec.synthetic:
        x, y = synth_1d_arrays(spec.synthetic_n, config.seed, spec.noise_std)
        X = x[:, None]
        if spec.test_points is not None:
            xt, yt = synth_1d_test_arrays(spec.test_points, config.seed, spec.noise_std)
            train = Dataset.from_raw(X, y)
            return Split(spec.name, train, train.standardize_X(xt[:, None]), train.standardize_y(yt))
    else:
        X, y, _, _ = read_table(spec.path, spec.target)
    tr, te = split_indices(X.shape[0], config.test_fraction, config.seed)
    train = Dataset.from_raw(X[tr], y[tr])
    return Split(spec.name, train, train.standardize_X(X[te]), train.standardize_y(y[te]))


def _effective_ppe(config, n):
    return min(config.points_per_expert, n)


def train_for(config: ExperimentConfig, split: Split, points_per_expert: int | None = None) -> ExpertPool:
    """Partition the training rows and fit the shared pool (plus grBCM if any cell needs it)."""
    data = split.train
    ppe = min(points_per_expert or config.points_per_expert, data.n)
    if config.partition is Strategy.KMEANS:
        part = kmeans_partition(data.X, ppe, config.seed, config.kmeans_max_iter)
    else:
        part = random_partition(data.n, ppe, config.seed)
    pool = train_pool(data, part, opts=config.optimizer, workers=config.workers)
    needs_grbcm = any(c.config.method is Method.GRBCM for c in config.cells)
    if needs_grbcm and part.n_experts >= 2:
        pool = with_grbcm(pool, data, config.grbcm_master_fraction, config.seed, config.workers)
    return pool


def _row(config, split, pool, ppe, name, **kw) -> MetricsRow:
    base = dict(
        dataset=split.name, partition=config.partition.value, points_per_expert=ppe,
        n_experts=pool.n_experts if pool else 1, cell=name, method="", functional="", transform="",
        temperature=None, normalized=None, space="", barycenter_mode="", sweep_axis="", sweep_value=None,
        n_train=split.train.n, n_test=split.y_test.shape[0], nlpd=math.inf, rmse=math.nan,
        expert_sizes=[int(s) for s in pool.sizes()] if pool else [split.train.n],
        jitter_events=pool.jitter_events() if pool else 0,
    )
    base.update(kw)
    return MetricsRow(**base)


def _score(mean, variance, y):
    return mean_nlpd(mean, variance, y), rmse(mean, y)


def _evaluate_cells(config, split, pool, cells, ppe, train_seconds):
    slices = {}

    def slice_for(cfg):
        kind = "grbcm" if cfg.method is Method.GRBCM else "experts"
        key = (kind, cfg.space)
        if key not in slices:
            if kind == "grbcm":
                if pool.grbcm is None:
                    raise InvalidArgumentError("grBCM needs at least two experts")
                slices[key] = predict_grbcm(pool, split.X_test, cfg.space, config.workers)
            else:
                slices[key] = predict_experts(pool, split.X_test, cfg.space, config.workers)
        return slices[key]

    rows = []
    noise_var = pool.shared_hyp.noise_var
    for cell in cells:
        c = cell.config
        ident = dict(method=c.method.value, functional=c.weighting.functional.value,
                     transform=c.weighting.transform.value, temperature=c.weighting.temperature,
                     normalized=c.weighting.normalized, space=c.space.value,
                     barycenter_mode=c.barycenter_mode.value if c.method is Method.BARYCENTER else "")
        t0 = time.perf_counter()
        try:
            res = aggregate(c, slice_for(c), on_failure="nan")
            failures = int(np.count_nonzero(res.failed))
            if failures:
                out = dict(precision_failures=failures, failed=True,
                           error=f"non-positive aggregate precision at {failures} test point(s)")
            else:
                pred = res.prediction
                if c.space is Space.F_SPACE:
                    pred = lift_to_y(pred, noise_var)
                nl, rm = _score(pred.mean, pred.variance, split.y_test)
                out = dict(nlpd=nl, rmse=rm)
        except (NumericalFailureError, InvalidArgumentError) as err:
            out = dict(failed=True, error=str(err))
        seconds = train_seconds + time.perf_counter() - t0
        rows.append(_row(config, split, pool, ppe, cell.name, seconds=seconds, **ident, **out))
    return rows


def _linear_baseline(split):
    X = np.column_stack([np.ones(split.train.n), split.train.X])
    n, p = X.shape
    if n <= p:
        raise InvalidArgumentError("linear baseline needs more rows than columns")
    coef, *_ = np.linalg.lstsq(X, split.train.y, rcond=None)
    resid = split.train.y - X @ coef
    s2 = float(resid @ resid) / (n - p)
    Xt = np.column_stack([np.ones(split.X_test.shape[0]), split.X_test])
    G = np.linalg.pinv(X.T @ X)
    var = s2 * (1.0 + np.einsum("ij,jk,ik->i", Xt, G, Xt))
    return Xt @ coef, var


def _baseline_rows(config, split):
    rows = []
    n = split.train.n
    for name, method in (("full_GP", "full_gp"), ("linear", "linear")):
        t0 = time.perf_counter()
        try:
            if method == "full_gp":
                res = fit(split.train, opts=config.optimizer)
                pred = predict(train_gp(split.train, res.hyp), split.X_test, Space.Y_SPACE)
                mean, var = pred.mean, pred.variance
            else:
                mean, var = _linear_baseline(split)
            nl, rm = _score(mean, var, split.y_test)
            out = dict(nlpd=nl, rmse=rm)
        except (NumericalFailureError, InvalidArgumentError) as err:
            out = dict(failed=True, error=str(err))
        rows.append(_row(config, split, None, n, name, method=method, space="y",
                         seconds=time.perf_counter() - t0, **out))
    return rows


def run_experiment(config: ExperimentConfig, split: Split | None = None) -> list[MetricsRow]:
    """Train one pool and evaluate every configured cell on it.

    Cell failures are recorded in their rows; the run continues. Baselines
    (full GP and ordinary least squares) are added when enabled and the
    training set has at most ``baseline_max_n`` rows. Each cell's
    ``seconds`` includes the shared pool training time.
    """
    split = split or prepare_split(config)
    ppe = _effective_ppe(config, split.train.n)
    t0 = time.perf_counter()
    pool = train_for(config, split, ppe)
    train_seconds = time.perf_counter() - t0
    rows = _evaluate_cells(config, split, pool, config.cells, ppe, train_seconds)
    if config.baselines and split.train.n <= config.baseline_max_n:
        rows += _baseline_rows(config, split)
    return rows


def sweep(config: ExperimentConfig, axis: SweepAxis, values, split: Split | None = None) -> list[MetricsRow]:
    """One row per (cell, value).

    A temperature sweep reuses a single pool since temperature only acts at
    prediction time; a points-per-expert sweep retrains for every value.
    """
    axis = SweepAxis(axis)
    values = list(values)
    if not values:
        raise InvalidArgumentError("sweep needs at least one value")
    split = split or prepare_split(config)
    rows = []
    if axis is SweepAxis.TEMPERATURE:
        ppe = _effective_ppe(config, split.train.n)
        t0 = time.perf_counter()
        pool = train_for(config, split, ppe)
        train_seconds = time.perf_counter() - t0
        for T in values:
            cells = [c.with_temperature(float(T)) for c in config.cells]
            for r in _evaluate_cells(config, split, pool, cells, ppe, train_seconds):
                r.sweep_axis, r.sweep_value = axis.value, float(T)
                rows.append(r)
    else:
        for v in values:
            v = int(v)
            if v < 1:
                raise InvalidArgumentError(f"points per expert must be >= 1, got {v}")
            ppe = min(v, split.train.n)
            t0 = time.perf_counter()
            pool = train_for(config, split, ppe)
            train_seconds = time.perf_counter() - t0
            for r in _evaluate_cells(config, split, pool, config.cells, ppe, train_seconds):
                r.sweep_axis, r.sweep_value = axis.value, float(v)
                rows.append(r)
    return rows

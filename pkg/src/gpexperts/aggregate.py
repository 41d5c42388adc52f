"""Combining expert predictive Gaussians into a single Gaussian per test point.

All functions are vectorized: expert-indexed quantities carry experts on the
last axis and any leading axes index test points. A single test point is just
the case with no leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .gp import GaussianPrediction, Space

__all__ = [
    "Method",
    "Functional",
    "Transform",
    "BarycenterMode",
    "WeightingSpec",
    "AggregationConfig",
    "ExpertSlice",
    "AggregateResult",
    "psi",
    "weights",
    "aggregate_gpoe",
    "aggregate_rbcm",
    "aggregate_grbcm",
    "aggregate_barycenter",
    "w2_gaussian",
    "aggregate",
]


class Method(enum.Enum):
    POE = "poe"
    GPOE = "gpoe"
    BCM = "bcm"
    RBCM = "rbcm"
    GRBCM = "grbcm"
    BARYCENTER = "barycenter"


class Functional(enum.Enum):
    """Per-expert confidence score ψ; smaller means more confident."""

    UNIFORM = "uniform"
    VARIANCE = "variance"
    DIFF_ENTROPY = "diff_entropy"
    WASSERSTEIN = "wasserstein"


class Transform(enum.Enum):
    SOFTMAX = "softmax"
    RAW = "raw"


class BarycenterMode(enum.Enum):
    PAPER_VARIANCE_AVG = "variance_avg"  # σ² = Σ β σ_j²
    EXACT_W2 = "exact_w2"                # σ  = Σ β σ_j


@dataclass(frozen=True)
class WeightingSpec:
    """How ψ is turned into expert weights β.

    ``SOFTMAX`` gives ``β ∝ exp(-T ψ)`` normalized to sum to one. ``RAW`` leaves
    the weights unnormalized unless ``normalized`` is set: for ``DIFF_ENTROPY``
    it yields the classic ``½(log σ_*² - log σ_j²)`` and for the other
    functionals the unnormalized ``exp(-T ψ)``. ``UNIFORM`` gives ``1/J`` when
    normalized and ``1`` otherwise.
    """

    functional: Functional = Functional.UNIFORM
    transform: Transform = Transform.SOFTMAX
    temperature: float = 1.0
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "functional", Functional(self.functional))
        object.__setattr__(self, "transform", Transform(self.transform))
        object.__setattr__(self, "temperature", float(self.temperature))
        if not (np.isfinite(self.temperature) and self.temperature >= 0):
            raise InvalidArgumentError(f"temperature must be finite and >= 0, got {self.temperature}")
        if self.transform is Transform.SOFTMAX and not self.normalized:
            raise InvalidArgumentError("softmax weights are normalized by construction")

    @classmethod
    def softmax(cls, functional=Functional.VARIANCE, temperature: float = 100.0) -> "WeightingSpec":
        return cls(functional, Transform.SOFTMAX, temperature, True)

    @classmethod
    def uniform(cls, normalized: bool = True) -> "WeightingSpec":
        return cls(Functional.UNIFORM, Transform.RAW, 1.0, normalized)

    @classmethod
    def diff_entropy(cls) -> "WeightingSpec":
        return cls(Functional.DIFF_ENTROPY, Transform.RAW, 1.0, False)


@dataclass(frozen=True)
class AggregationConfig:
    method: Method = Method.GPOE
    weighting: WeightingSpec = field(default_factory=WeightingSpec)
    space: Space = Space.F_SPACE
    barycenter_mode: BarycenterMode = BarycenterMode.PAPER_VARIANCE_AVG

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "space", Space(self.space))
        object.__setattr__(self, "barycenter_mode", BarycenterMode(self.barycenter_mode))
        if self.method is Method.BARYCENTER and not self.weighting.normalized:
            raise InvalidArgumentError("barycenter requires normalized weights")


@dataclass(frozen=True, eq=False)
class ExpertSlice:
    """Expert predictions at one or more test points.

    ``means``/``variances`` have shape ``(..., J)``; ``prior_variance`` has the
    leading shape ``(...)``. For grBCM the experts are the augmented children
    and ``master_mean``/``master_variance`` hold the master's prediction.
    """

    means: np.ndarray
    variances: np.ndarray
    prior_variance: np.ndarray
    space: Space = Space.F_SPACE
    master_mean: np.ndarray | None = None
    master_variance: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        p = np.asarray(self.prior_variance, dtype=float)
        if m.shape != v.shape or m.ndim < 1 or m.shape[-1] < 1:
            raise InvalidArgumentError(f"means {m.shape} and variances {v.shape} must match with J >= 1")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidArgumentError("expert variances must be strictly positive and finite")
        if not np.all(np.isfinite(m)):
            raise InvalidArgumentError("expert means must be finite")
        p = np.broadcast_to(p, m.shape[:-1])
        if np.any(~(p > 0)) or not np.all(np.isfinite(p)):
            raise InvalidArgumentError("prior variance must be strictly positive and finite")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "prior_variance", p)
        object.__setattr__(self, "space", Space(self.space))
        if (self.master_mean is None) != (self.master_variance is None):
            raise InvalidArgumentError("master mean and variance must be given together")
        if self.master_mean is not None:
            mm = np.broadcast_to(np.asarray(self.master_mean, dtype=float), m.shape[:-1])
            mv = np.broadcast_to(np.asarray(self.master_variance, dtype=float), m.shape[:-1])
            if np.any(~(mv > 0)) or not np.all(np.isfinite(mv)):
                raise InvalidArgumentError("master variance must be strictly positive and finite")
            object.__setattr__(self, "master_mean", mm)
            object.__setattr__(self, "master_variance", mv)

    @property
    def n_experts(self) -> int:
        return self.means.shape[-1]

    def take(self, experts) -> "ExpertSlice":
        """Restrict to a subset (or reordering) of experts."""
        idx = np.asarray(experts)
        return ExpertSlice(self.means[..., idx], self.variances[..., idx], self.prior_variance,
                           self.space, self.master_mean, self.master_variance)


@dataclass(frozen=True, eq=False)
class AggregateResult:
    prediction: GaussianPrediction
    weights: np.ndarray
    failed: np.ndarray  # boolean mask of test points whose precision was not positive

    @property
    def mean(self):
        return self.prediction.mean

    @property
    def variance(self):
        return self.prediction.variance


def w2_gaussian(m1, v1, m2, v2):
    """Squared 2-Wasserstein distance between N(m1, v1) and N(m2, v2) on the real line."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if np.any(v1 < 0) or np.any(v2 < 0):
        raise InvalidArgumentError("variances must be non-negative")
    dm = np.asarray(m1, dtype=float) - np.asarray(m2, dtype=float)
    ds = np.sqrt(v1) - np.sqrt(v2)
    return dm * dm + ds * ds


def psi(slice: ExpertSlice, functional: Functional, reference_variance=None) -> np.ndarray:
    """Confidence scores, one per expert; smaller is more confident.

    ``reference_variance`` overrides the prior variance as the uninformed
    reference for ``DIFF_ENTROPY`` and ``WASSERSTEIN`` (grBCM uses the master).
    """
    functional = Functional(functional)
    ref = slice.prior_variance if reference_variance is None else np.asarray(reference_variance, dtype=float)
    ref = ref[..., None]
    v = slice.variances
    if functional is Functional.UNIFORM:
        return np.zeros_like(v)
    if functional is Functional.VARIANCE:
        return v.copy()
    if functional is Functional.DIFF_ENTROPY:
        return -0.5 * (np.log(ref) - np.log(v))
    return -w2_gaussian(slice.means, v, 0.0, ref)


def weights(psi_values, spec: WeightingSpec) -> np.ndarray:
    """Expert weights β from confidence scores ψ (experts on the last axis)."""
    s = np.asarray(psi_values, dtype=float)
    finite = np.isfinite(s)
    if np.any(~finite.any(axis=-1)):
        raise InvalidArgumentError("every ψ value is non-finite for at least one test point")
    J = s.shape[-1]

    if spec.functional is Functional.UNIFORM:
        beta = np.ones_like(s)
        return beta / J if spec.normalized else beta

    if spec.transform is Transform.SOFTMAX:
        low = np.min(np.where(finite, s, np.inf), axis=-1, keepdims=True)
        shifted = np.where(finite, s - low, 0.0)
        e = np.where(finite, np.exp(-spec.temperature * shifted), 0.0)
        return e / e.sum(axis=-1, keepdims=True)

    if spec.functional is Functional.DIFF_ENTROPY:
        # posterior variance never exceeds its reference in exact arithmetic;
        # clip the rounding-level negatives that appear when they coincide
        beta = np.where(finite, np.maximum(-s, 0.0), 0.0)
    else:
        beta = np.where(finite, np.exp(-spec.temperature * np.where(finite, s, 0.0)), 0.0)
    if spec.normalized:
        total = beta.sum(axis=-1, keepdims=True)
        if np.any(~(total > 0)):
            raise InvalidArgumentError("raw weights sum to zero; cannot normalize")
        beta = beta / total
    return beta


def _check_beta(beta, slice):
    beta = np.broadcast_to(np.asarray(beta, dtype=float), slice.means.shape)
    if np.any(beta < 0) or not np.all(np.isfinite(beta)):
        raise InvalidArgumentError("weights must be finite and non-negative")
    return beta


def _finish(mean_num, precision, slice, on_failure, what, beta):
    bad = ~(precision > 0) | ~np.isfinite(precision)
    if np.any(bad):
        if on_failure == "raise":
            idx = np.argwhere(np.atleast_1d(bad))
            raise NumericalFailureError(
                f"{what}: non-positive aggregate precision at {int(bad.sum())} test point(s)",
                indices=idx.tolist()[:20], precision=np.atleast_1d(precision)[np.atleast_1d(bad)][:20].tolist(),
                weight_sums=np.atleast_1d(beta.sum(axis=-1))[np.atleast_1d(bad)][:20].tolist())
        safe = np.where(bad, 1.0, precision)
        var = np.where(bad, np.nan, 1.0 / safe)
        mean = np.where(bad, np.nan, mean_num / safe)
    else:
        var = 1.0 / precision
        mean = mean_num * var
    return GaussianPrediction(mean, var, slice.space), bad


def aggregate_gpoe(slice: ExpertSlice, beta, on_failure: str = "raise") -> GaussianPrediction:
    """(Generalized) product of experts: precision Σ β_j σ_j⁻²; PoE is β ≡ 1."""
    return _gpoe(slice, beta, on_failure)[0]


def _gpoe(slice, beta, on_failure):
    if on_failure not in ("raise", "nan"):
        raise InvalidArgumentError(f"unknown on_failure mode {on_failure!r}")
    beta = _check_beta(beta, slice)
    prec_j = 1.0 / slice.variances
    precision = np.sum(beta * prec_j, axis=-1)
    num = np.sum(beta * prec_j * slice.means, axis=-1)
    return _finish(num, precision, slice, on_failure, "gPoE", beta)


def aggregate_rbcm(slice: ExpertSlice, beta, on_failure: str = "raise") -> GaussianPrediction:
    """(Robust) Bayesian committee machine; BCM is β ≡ 1.

    precision = Σ β_j (σ_j⁻² - σ_*⁻²) + σ_*⁻², which can turn non-positive
    for unnormalized weights.
    """
    return _rbcm(slice, beta, on_failure)[0]


def _rbcm(slice, beta, on_failure):
    if on_failure not in ("raise", "nan"):
        raise InvalidArgumentError(f"unknown on_failure mode {on_failure!r}")
    beta = _check_beta(beta, slice)
    prec_j = 1.0 / slice.variances
    prior_prec = 1.0 / slice.prior_variance
    precision = np.sum(beta * (prec_j - prior_prec[..., None]), axis=-1) + prior_prec
    num = np.sum(beta * prec_j * slice.means, axis=-1)
    return _finish(num, precision, slice, on_failure, "rBCM", beta)


def aggregate_grbcm(slice: ExpertSlice, beta, on_failure: str = "raise") -> GaussianPrediction:
    """Generalized rBCM over augmented children with a master correction.

    ``slice`` holds the children's predictions plus the master's
    ``(μ_c, σ_c²)``. The prior is not involved.
    """
    return _grbcm(slice, beta, on_failure)[0]


def _grbcm(slice, beta, on_failure):
    if on_failure not in ("raise", "nan"):
        raise InvalidArgumentError(f"unknown on_failure mode {on_failure!r}")
    if slice.master_mean is None:
        raise InvalidArgumentError("grBCM needs the master expert's prediction")
    beta = _check_beta(beta, slice)
    prec_j = 1.0 / slice.variances
    prec_c = 1.0 / slice.master_variance
    total = beta.sum(axis=-1)
    precision = np.sum(beta * (prec_j - prec_c[..., None]), axis=-1) + prec_c
    num = np.sum(beta * prec_j * slice.means, axis=-1) - (total - 1.0) * prec_c * slice.master_mean
    return _finish(num, precision, slice, on_failure, "grBCM", beta)


def aggregate_barycenter(slice: ExpertSlice, beta,
                         mode: BarycenterMode = BarycenterMode.PAPER_VARIANCE_AVG) -> GaussianPrediction:
    """Weighted 2-Wasserstein barycenter of the experts' Gaussians.

    The mean is Σ β_j m_j. ``PAPER_VARIANCE_AVG`` averages variances;
    ``EXACT_W2`` averages standard deviations, which is the true barycenter
    on the real line.
    """
    beta = _check_beta(beta, slice)
    if np.any(np.abs(beta.sum(axis=-1) - 1.0) > 1e-9):
        raise InvalidArgumentError("barycenter weights must sum to one")
    mean = np.sum(beta * slice.means, axis=-1)
    if BarycenterMode(mode) is BarycenterMode.PAPER_VARIANCE_AVG:
        var = np.sum(beta * slice.variances, axis=-1)
    else:
        var = np.sum(beta * np.sqrt(slice.variances), axis=-1) ** 2
    return GaussianPrediction(mean, var, slice.space)


def _grbcm_weights(slice: ExpertSlice, spec: WeightingSpec) -> np.ndarray:
    # first child gets weight 1; the rest are weighted among themselves,
    # scoring each child against the master rather than the prior
    beta = np.ones_like(slice.means)
    if slice.n_experts > 1:
        rest = slice.take(np.arange(1, slice.n_experts))
        beta[..., 1:] = weights(psi(rest, spec.functional, reference_variance=slice.master_variance), spec)
    return beta


def aggregate(config: AggregationConfig, slice: ExpertSlice, on_failure: str = "raise") -> AggregateResult:
    """Compute ψ, then β, then dispatch to the configured aggregation rule."""
    if slice.space is not config.space:
        raise InvalidArgumentError(f"slice is in {slice.space.name}, config expects {config.space.name}")
    method = config.method
    if method in (Method.POE, Method.BCM):
        beta = np.ones_like(slice.means)
    elif method is Method.GRBCM:
        beta = _grbcm_weights(slice, config.weighting)
    else:
        beta = weights(psi(slice, config.weighting.functional), config.weighting)

    no_fail = np.zeros(slice.means.shape[:-1], dtype=bool)
    if method in (Method.POE, Method.GPOE):
        pred, bad = _gpoe(slice, beta, on_failure)
    elif method in (Method.BCM, Method.RBCM):
        pred, bad = _rbcm(slice, beta, on_failure)
    elif method is Method.GRBCM:
        pred, bad = _grbcm(slice, beta, on_failure)
    else:
        pred, bad = aggregate_barycenter(slice, beta, config.barycenter_mode), no_fail
    return AggregateResult(pred, beta, bad)

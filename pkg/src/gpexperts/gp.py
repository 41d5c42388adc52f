"""Exact GP regression with a zero prior mean on standardized targets."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.optimize as so

from .errors import InvalidArgumentError, NumericalFailureError
from .numerics import (
    CholeskyFactor,
    Hyperparameters,
    chol_solve,
    cholesky_with_jitter,
    kernel_diag,
    kernel_gradients,
    kernel_matrix,
    log_det,
)

__all__ = [
    "Space",
    "Dataset",
    "TrainedGP",
    "GaussianPrediction",
    "FitOptions",
    "FitResult",
    "default_init",
    "log_marginal_likelihood",
    "lml_gradient",
    "lml_and_grad",
    "maximize",
    "fit",
    "train_gp",
    "predict",
    "lift_to_y",
    "nlpd",
    "gaussian_nlpd",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class Space(enum.Enum):
    """Whether a predictive distribution is over latent ``f`` or noisy ``y``."""

    F_SPACE = "f"
    Y_SPACE = "y"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Standardized inputs/targets plus the constants needed to undo the scaling."""

    X: np.ndarray
    y: np.ndarray
    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(f"X {X.shape} and y {y.shape} disagree")
        if X.shape[0] < 1:
            raise InvalidArgumentError("dataset must contain at least one row")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("dataset contains non-finite values")
        fm = np.asarray(self.feature_means, dtype=float).reshape(-1)
        fs = np.asarray(self.feature_stds, dtype=float).reshape(-1)
        if fm.shape[0] != X.shape[1] or fs.shape[0] != X.shape[1]:
            raise InvalidArgumentError("standardization record does not match feature count")
        if np.any(fs <= 0) or self.target_std <= 0:
            raise InvalidArgumentError("standardization scales must be strictly positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_means", fm)
        object.__setattr__(self, "feature_stds", fs)
        object.__setattr__(self, "target_mean", float(self.target_mean))
        object.__setattr__(self, "target_std", float(self.target_std))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_raw(cls, X, y, fit_rows=None) -> "Dataset":
        """Z-score ``X`` and ``y`` using statistics of ``fit_rows`` only.

        Constant columns get a scale of 1 (with a warning) so they stay finite.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(y, dtype=float).reshape(-1)
        rows = np.arange(X.shape[0]) if fit_rows is None else np.asarray(fit_rows)
        mu = X[rows].mean(axis=0)
        sd = X[rows].std(axis=0)
        const = ~(sd > 0)
        if np.any(const):
            warnings.warn(f"constant feature column(s) {np.flatnonzero(const).tolist()}; scale clamped to 1",
                          stacklevel=2)
            sd = np.where(const, 1.0, sd)
        ym = float(y[rows].mean())
        ys = float(y[rows].std())
        if not ys > 0:
            warnings.warn("constant target; scale clamped to 1", stacklevel=2)
            ys = 1.0
        return cls((X - mu) / sd, (y - ym) / ys, mu, sd, ym, ys)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.feature_means, self.feature_stds,
                       self.target_mean, self.target_std)

    def raw_X(self) -> np.ndarray:
        return self.X * self.feature_stds + self.feature_means

    def raw_y(self, y=None) -> np.ndarray:
        y = self.y if y is None else np.asarray(y, dtype=float)
        return y * self.target_std + self.target_mean

    def standardize_X(self, X_raw) -> np.ndarray:
        X_raw = np.asarray(X_raw, dtype=float)
        if X_raw.ndim == 1:
            X_raw = X_raw[:, None]
        return (X_raw - self.feature_means) / self.feature_stds

    def standardize_y(self, y_raw) -> np.ndarray:
        return (np.asarray(y_raw, dtype=float) - self.target_mean) / self.target_std

    def standardization(self) -> dict:
        return {
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }


@dataclass(frozen=True)
class GaussianPrediction:
    """Per-test-point Gaussian marginals; ``mean`` and ``variance`` share a shape."""

    mean: np.ndarray
    variance: np.ndarray
    space: Space = Space.F_SPACE

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "variance", np.asarray(self.variance, dtype=float))


@dataclass(frozen=True, eq=False)
class TrainedGP:
    data: Dataset
    hyp: Hyperparameters
    factor: CholeskyFactor
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.data.n


def default_init(X) -> Hyperparameters:
    """Starting point: ℓ_d = std of column d, σ_f = 1, σ_y = 0.1."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    sd = X.std(axis=0) if X.shape[0] > 1 else np.ones(X.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return Hyperparameters(np.log(sd), 0.0, np.log(0.1))


def _factorize(data: Dataset, hyp: Hyperparameters, name="K_x + σ_y² I"):
    K = kernel_matrix(data.X, data.X, hyp)
    Ky = K + hyp.noise_var * np.eye(data.n)
    return K, cholesky_with_jitter(Ky, name=name)


def log_marginal_likelihood(data: Dataset, hyp: Hyperparameters) -> float:
    """``log N(y | 0, K_x + σ_y² I)``."""
    _, F = _factorize(data, hyp)
    alpha = chol_solve(F, data.y)
    return float(-0.5 * data.y @ alpha - 0.5 * log_det(F) - 0.5 * data.n * LOG_2PI)


def lml_and_grad(data: Dataset, hyp: Hyperparameters) -> tuple[float, np.ndarray]:
    """LML together with its gradient w.r.t. ``hyp.to_vector()``.

    Each component is ``½ tr((ααᵀ - Ky⁻¹) ∂Ky/∂θ)``; the noise derivative of
    ``Ky`` is ``2σ_y² I``.
    """
    K, F = _factorize(data, hyp)
    alpha = chol_solve(F, data.y)
    lml = float(-0.5 * data.y @ alpha - 0.5 * log_det(F) - 0.5 * data.n * LOG_2PI)
    W = np.outer(alpha, alpha) - chol_solve(F, np.eye(data.n))
    grad = [0.5 * np.sum(W * dK) for dK in kernel_gradients(data.X, hyp, K)]
    grad.append(hyp.noise_var * np.trace(W))
    return lml, np.asarray(grad)


def lml_gradient(data: Dataset, hyp: Hyperparameters) -> np.ndarray:
    return lml_and_grad(data, hyp)[1]


@dataclass(frozen=True)
class FitOptions:
    """Settings for L-BFGS-B in log-hyperparameter space.

    Bounds are ``(low, high)`` pairs on natural-log values.
    """

    maxiter: int = 100
    gtol: float = 1e-5
    ftol: float = 2.220446049250313e-09
    log_lengthscale_bounds: tuple[float, float] = (np.log(1e-3), np.log(1e4))
    log_signal_bounds: tuple[float, float] = (np.log(1e-3), np.log(1e3))
    log_noise_bounds: tuple[float, float] = (np.log(1e-4), np.log(1e2))
    # extra starts: the init with every lengthscale multiplied by each factor
    lengthscale_restarts: tuple[float, ...] = ()

    def __post_init__(self):
        r = tuple(float(f) for f in self.lengthscale_restarts)
        if any(not (np.isfinite(f) and f > 0) for f in r):
            raise InvalidArgumentError(f"restart factors must be positive and finite, got {r}")
        object.__setattr__(self, "lengthscale_restarts", r)

    def bounds(self, dim: int) -> list[tuple[float, float]]:
        return [self.log_lengthscale_bounds] * dim + [self.log_signal_bounds, self.log_noise_bounds]

    def to_dict(self) -> dict:
        return {
            "maxiter": self.maxiter,
            "gtol": self.gtol,
            "ftol": self.ftol,
            "log_lengthscale_bounds": list(self.log_lengthscale_bounds),
            "log_signal_bounds": list(self.log_signal_bounds),
            "log_noise_bounds": list(self.log_noise_bounds),
            "lengthscale_restarts": list(self.lengthscale_restarts),
        }


@dataclass
class FitResult:
    hyp: Hyperparameters
    lml: float
    n_iter: int
    n_eval: int
    converged: bool
    message: str
    trace: list[float] = field(default_factory=list)  # LML at each accepted iterate, starting with init


_FAILED_OBJECTIVE = 1e25


def maximize(fun_and_grad, init: Hyperparameters, opts: FitOptions | None = None) -> FitResult:
    """Maximize ``fun_and_grad(hyp) -> (value, grad)`` over log-hyperparameters.

    Evaluations that fail numerically are reported to the optimizer as a huge
    objective so the line search backs off. If the optimizer stops abnormally
    the best evaluated point is returned with ``converged=False``. With
    ``opts.lengthscale_restarts`` each extra start runs to completion and the
    highest LML wins (the first start on ties).
    """
    opts = opts or FitOptions()
    result = _maximize_from(fun_and_grad, init, opts)
    n_eval = result.n_eval
    for factor in opts.lengthscale_restarts:
        start = Hyperparameters(init.log_lengthscales + np.log(factor), init.log_signal_std, init.log_noise_std)
        try:
            other = _maximize_from(fun_and_grad, start, opts)
        except NumericalFailureError:
            continue
        n_eval += other.n_eval
        if other.lml > result.lml:
            result = other
    result.n_eval = n_eval
    return result


def _maximize_from(fun_and_grad, init, opts):
    theta0 = init.to_vector()
    bounds = opts.bounds(init.dim)
    theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
    best = {"f": np.inf, "x": theta0.copy()}
    cache = {}
    n_eval = 0

    def objective(theta):
        nonlocal n_eval
        n_eval += 1
        try:
            val, grad = fun_and_grad(Hyperparameters.from_vector(theta))
        except NumericalFailureError:
            return _FAILED_OBJECTIVE, np.zeros_like(theta)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return _FAILED_OBJECTIVE, np.zeros_like(theta)
        f = -val
        cache[theta.tobytes()] = f
        if f < best["f"]:
            best["f"], best["x"] = f, theta.copy()
        return f, -grad

    f0, _ = objective(theta0)
    trace = [-f0]

    def callback(intermediate_result):
        x = intermediate_result.x
        f = cache.get(x.tobytes(), intermediate_result.fun)
        trace.append(-float(f))

    res = so.minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                      callback=callback,
                      options={"maxiter": opts.maxiter, "gtol": opts.gtol, "ftol": opts.ftol})
    x, f = res.x, res.fun
    converged = bool(res.success)
    if best["f"] < f:
        x, f = best["x"], best["f"]
    if f >= _FAILED_OBJECTIVE:
        raise NumericalFailureError("objective could not be evaluated at any point", optimizer_message=str(res.message))
    msg = res.message if isinstance(res.message, str) else res.message.decode()
    return FitResult(Hyperparameters.from_vector(x), -float(f), int(res.nit), n_eval, converged, msg, trace)


def fit(data: Dataset, init: Hyperparameters | None = None, opts: FitOptions | None = None) -> FitResult:
    """Type-II maximum likelihood for a single exact GP."""
    init = default_init(data.X) if init is None else init
    if init.dim != data.dim:
        raise InvalidArgumentError(f"init has {init.dim} lengthscales, data has {data.dim} features")
    return maximize(lambda h: lml_and_grad(data, h), init, opts)


def train_gp(data: Dataset, hyp: Hyperparameters, name: str = "K_x + σ_y² I") -> TrainedGP:
    """Factorize the training covariance once for prediction."""
    if hyp.dim != data.dim:
        raise InvalidArgumentError(f"hyperparameters have {hyp.dim} lengthscales, data has {data.dim} features")
    _, F = _factorize(data, hyp, name=name)
    return TrainedGP(data, hyp, F, chol_solve(F, data.y))


def predict(gp: TrainedGP, X_star, space: Space = Space.F_SPACE) -> GaussianPrediction:
    """Posterior predictive marginals at the rows of ``X_star``.

    A 1-D ``X_star`` is read as one point when the model has D > 1 features
    and as a column of points when D == 1.
    """
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[:, None] if gp.data.dim == 1 else X_star[None, :]
    if X_star.shape[1] != gp.data.dim:
        raise InvalidArgumentError(f"test inputs have {X_star.shape[1]} columns, model expects {gp.data.dim}")
    Ks = kernel_matrix(gp.data.X, X_star, gp.hyp)
    mean = Ks.T @ gp.alpha
    V = sla.solve_triangular(gp.factor.L, Ks, lower=True, check_finite=False)
    var = kernel_diag(X_star, gp.hyp) - np.sum(V * V, axis=0)
    var = np.maximum(var, 0.0)
    if space is Space.Y_SPACE:
        var = var + gp.hyp.noise_var
    return GaussianPrediction(mean, var, space)


def lift_to_y(pred: GaussianPrediction, noise_var: float) -> GaussianPrediction:
    """Apply the Gaussian likelihood to an f-space prediction."""
    if pred.space is Space.Y_SPACE:
        return pred
    return GaussianPrediction(pred.mean, pred.variance + noise_var, Space.Y_SPACE)


def gaussian_nlpd(mean, variance, y_true) -> np.ndarray:
    """``½ log(2π v) + (y - m)² / (2v)`` elementwise."""
    variance = np.asarray(variance, dtype=float)
    if np.any(~(variance > 0)):
        raise InvalidArgumentError("predictive variance must be strictly positive")
    r = np.asarray(y_true, dtype=float) - np.asarray(mean, dtype=float)
    return 0.5 * (LOG_2PI + np.log(variance)) + r * r / (2.0 * variance)


def nlpd(pred: GaussianPrediction, y_true) -> np.ndarray:
    """Negative log predictive density of ``y_true``; requires a y-space prediction."""
    if pred.space is not Space.Y_SPACE:
        raise InvalidArgumentError("NLPD is defined on y-space predictions; lift f-space ones first")
    return gaussian_nlpd(pred.mean, pred.variance, y_true)

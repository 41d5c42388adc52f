"""Kernel evaluation and dense Cholesky utilities.

Everything here is a pure function of its arguments, so it can be called
from many worker threads at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "Hyperparameters",
    "CholeskyFactor",
    "kernel_matrix",
    "kernel_diag",
    "kernel_gradients",
    "cholesky_with_jitter",
    "chol_solve",
    "log_det",
    "JITTER_SCHEDULE",
]

# multiples of mean(diag(A)), tried in order after a plain factorization fails
JITTER_SCHEDULE = (1e-10, 1e-8, 1e-6, 1e-4)


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """Shared RBF-ARD kernel and Gaussian noise parameters, stored in log space."""

    log_lengthscales: np.ndarray
    log_signal_std: float
    log_noise_std: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=float)).copy()
        if ls.ndim != 1:
            raise InvalidArgumentError("log_lengthscales must be a vector")
        ls.setflags(write=False)
        object.__setattr__(self, "log_lengthscales", ls)
        object.__setattr__(self, "log_signal_std", float(self.log_signal_std))
        object.__setattr__(self, "log_noise_std", float(self.log_noise_std))
        if not (np.all(np.isfinite(ls)) and np.isfinite(self.log_signal_std)
                and np.isfinite(self.log_noise_std)):
            raise InvalidArgumentError("hyperparameters must be finite")

    @property
    def dim(self) -> int:
        return self.log_lengthscales.shape[0]

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(self.log_lengthscales)

    @property
    def signal_var(self) -> float:
        return float(np.exp(2.0 * self.log_signal_std))

    @property
    def noise_var(self) -> float:
        return float(np.exp(2.0 * self.log_noise_std))

    def to_vector(self) -> np.ndarray:
        """Flatten as ``[log ℓ_1..log ℓ_D, log σ_f, log σ_y]``."""
        return np.concatenate([self.log_lengthscales, [self.log_signal_std, self.log_noise_std]])

    @classmethod
    def from_vector(cls, theta) -> "Hyperparameters":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:-2], theta[-2], theta[-1])

    @classmethod
    def from_values(cls, lengthscales, signal_std: float, noise_std: float) -> "Hyperparameters":
        return cls(np.log(np.atleast_1d(lengthscales)), np.log(signal_std), np.log(noise_std))

    def to_dict(self) -> dict:
        return {
            "log_lengthscales": [float(v) for v in self.log_lengthscales],
            "log_signal_std": self.log_signal_std,
            "log_noise_std": self.log_noise_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(d["log_lengthscales"], d["log_signal_std"], d["log_noise_std"])

    def __eq__(self, other):
        if not isinstance(other, Hyperparameters):
            return NotImplemented
        return np.array_equal(self.to_vector(), other.to_vector())

    def __repr__(self):
        ls = np.array2string(self.lengthscales, precision=4)
        return (f"Hyperparameters(lengthscales={ls}, signal_std={np.exp(self.log_signal_std):.4g}, "
                f"noise_std={np.exp(self.log_noise_std):.4g})")


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower factor ``L`` with ``L Lᵀ = A + jitter·I``."""

    L: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.L.shape[0]


def _as_2d(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a 2-D array, got shape {X.shape}")
    return X


def _scaled_sqdist(X1, X2, lengthscales):
    # per-dimension accumulation keeps memory at n1*n2 and the result exactly
    # symmetric when X1 is X2
    d2 = np.zeros((X1.shape[0], X2.shape[0]))
    for d, ell in enumerate(lengthscales):
        diff = (X1[:, d, None] - X2[None, :, d]) / ell
        d2 += diff * diff
    return d2


def kernel_matrix(X1, X2, hyp: Hyperparameters) -> np.ndarray:
    """Squared-exponential ARD covariance between the rows of ``X1`` and ``X2``.

    ``k(x, x') = σ_f² exp(-½ Σ_d (x_d - x'_d)² / ℓ_d²)``
    """
    X1 = _as_2d(X1, "X1")
    X2 = _as_2d(X2, "X2")
    if X1.shape[1] != hyp.dim or X2.shape[1] != hyp.dim:
        raise InvalidArgumentError(
            f"dimension mismatch: X1 has {X1.shape[1]} columns, X2 has {X2.shape[1]}, "
            f"hyperparameters expect {hyp.dim}")
    return hyp.signal_var * np.exp(-0.5 * _scaled_sqdist(X1, X2, hyp.lengthscales))


def kernel_diag(X, hyp: Hyperparameters) -> np.ndarray:
    """Diagonal of ``kernel_matrix(X, X)``; constant σ_f² for a stationary kernel."""
    X = _as_2d(X, "X")
    if X.shape[1] != hyp.dim:
        raise InvalidArgumentError(f"dimension mismatch: X has {X.shape[1]} columns, expected {hyp.dim}")
    return np.full(X.shape[0], hyp.signal_var)


def kernel_gradients(X, hyp: Hyperparameters, K: np.ndarray | None = None) -> list[np.ndarray]:
    """Derivatives of ``kernel_matrix(X, X)`` w.r.t. each log lengthscale and log σ_f."""
    X = _as_2d(X, "X")
    if K is None:
        K = kernel_matrix(X, X, hyp)
    grads = []
    for d, ell in enumerate(hyp.lengthscales):
        diff = (X[:, d, None] - X[None, :, d]) / ell
        grads.append(K * diff * diff)
    grads.append(2.0 * K)
    return grads


def cholesky_with_jitter(A, name: str = "matrix") -> CholeskyFactor:
    """Factor a symmetric positive-definite matrix, adding diagonal jitter if needed.

    A plain factorization is tried first. On failure the diagonal is inflated by
    ``JITTER_SCHEDULE[k] * mean(diag(A))`` for increasing ``k``.

    Raises
    ------
    InvalidArgumentError
        If ``A`` is not square or not symmetric within 1e-10.
    NumericalFailureError
        If the largest jitter still does not yield a valid factor.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise InvalidArgumentError(f"{name} is not symmetric")
    if not np.all(np.isfinite(A)):
        raise NumericalFailureError(f"{name} contains non-finite entries", matrix=name)

    n = A.shape[0]
    mean_diag = float(np.mean(np.diag(A))) if n else 0.0
    base = mean_diag if mean_diag > 0 else 1.0
    for jitter in (0.0,) + tuple(j * base for j in JITTER_SCHEDULE):
        Aj = A + jitter * np.eye(n) if jitter else A
        try:
            L = sla.cholesky(Aj, lower=True, check_finite=False)
        except sla.LinAlgError:
            continue
        if np.all(np.diag(L) > 0):
            return CholeskyFactor(L, jitter)
    raise NumericalFailureError(
        f"Cholesky factorization of {name} failed even with jitter "
        f"{JITTER_SCHEDULE[-1]:g} * mean(diag)",
        matrix=name, max_jitter=JITTER_SCHEDULE[-1] * base)


def chol_solve(F: CholeskyFactor, B) -> np.ndarray:
    """Solve ``(A + jitter·I) X = B`` given the factor of ``A``."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != F.n:
        raise InvalidArgumentError(f"right-hand side has {B.shape[0]} rows, factor is {F.n}x{F.n}")
    return sla.cho_solve((F.L, True), B, check_finite=False)


def log_det(F: CholeskyFactor) -> float:
    """``log det(A + jitter·I) = 2 Σ log L_ii``."""
    return 2.0 * float(np.sum(np.log(np.diag(F.L))))

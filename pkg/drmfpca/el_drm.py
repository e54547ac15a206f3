"""Empirical likelihood fitting of the density ratio model.

With basis q(x), the model says log(g_r / g_0)(x) = alpha_r + beta_r' q(x),
with alpha_0 = 0 and beta_0 = 0. Profiling the base distribution out of the
empirical likelihood gives the concave objective

    l(alpha, beta) = -sum_i log sum_r n_r exp(eta_r(x_i)) + sum_i eta_{g(i)}(x_i)

where eta_r = alpha_r + beta_r' q and g(i) is the sample of observation i.
It is maximized here by damped Newton iterations with Armijo backtracking.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .exceptions import ConvergenceError, NumericError, ValidationError
from .multisample import MultiSample

logger = logging.getLogger(__name__)

BasisFunction = Callable[[np.ndarray], np.ndarray]

ARMIJO_SLOPE = 1e-4
MAX_BACKTRACKS = 60
MAX_DAMPING_STEPS = 30


@dataclass(frozen=True)
class DrmParams:
    """Model parameters for populations 1..m.

    Attributes:
        alpha: Length-m intercepts
        beta: m x d slopes
    """

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2:
            beta = beta.reshape(alpha.size, -1)
        if beta.shape[0] != alpha.size:
            raise ValidationError(
                f"DrmParams: beta has {beta.shape[0]} rows for {alpha.size} alphas"
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValidationError("DrmParams must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zeros(cls, m: int, d: int) -> "DrmParams":
        return cls(alpha=np.zeros(m), beta=np.zeros((m, d)))

    @property
    def m(self) -> int:
        return int(self.alpha.size)

    @property
    def d(self) -> int:
        return int(self.beta.shape[1])

    def to_vector(self) -> np.ndarray:
        """Flatten as per-population blocks (alpha_r, beta_r1, ..., beta_rd)."""
        return np.column_stack([self.alpha, self.beta]).ravel()

    @classmethod
    def from_vector(cls, theta: Sequence[float], m: int, d: int) -> "DrmParams":
        blocks = np.asarray(theta, dtype=float).reshape(m, d + 1)
        return cls(alpha=blocks[:, 0], beta=blocks[:, 1:])

    def coefficient_matrix(self) -> np.ndarray:
        """(m+1) x (1+d) matrix of (alpha_r, beta_r) rows with a zero base row."""
        rows = np.column_stack([self.alpha, self.beta]) if self.m else np.zeros((0, self.d + 1))
        return np.vstack([np.zeros((1, self.d + 1)), rows])


def _groups(counts: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(counts.size), counts)


def _design(basis_values: np.ndarray) -> np.ndarray:
    values = np.asarray(basis_values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return np.column_stack([np.ones(values.shape[0]), values])


def _check_inputs(design: np.ndarray, counts: Sequence[int]) -> np.ndarray:
    counts = np.asarray(counts, dtype=int)
    if np.any(counts < 1):
        raise ValidationError("Every sample size must be positive")
    if design.shape[0] != counts.sum():
        raise ValidationError(
            f"Basis values have {design.shape[0]} rows but the samples hold "
            f"{counts.sum()} observations"
        )
    return counts


def _profile_terms(
    coefficients: np.ndarray, design: np.ndarray, counts: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Objective value, eta (N x (m+1)), and tilt weights w (N x (m+1))."""
    eta = design @ coefficients.T
    shifted = eta + np.log(counts)
    lse = logsumexp(shifted, axis=1)
    own = eta[np.arange(eta.shape[0]), _groups(counts)]
    value = float(own.sum() - lse.sum())
    if not math.isfinite(value):
        raise NumericError("profile_loglik: objective is not finite")
    weights = np.exp(shifted - lse[:, None])
    return value, eta, weights


def _gradient(design: np.ndarray, counts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    own = np.zeros((counts.size, design.shape[1]))
    np.add.at(own, _groups(counts), design)
    return (own - weights.T @ design)[1:].ravel()


def _hessian(design: np.ndarray, weights: np.ndarray) -> np.ndarray:
    w = weights[:, 1:]
    m, p = w.shape[1], design.shape[1]
    tilted = (w[:, :, None] * design[:, None, :]).reshape(design.shape[0], m * p)
    hess = tilted.T @ tilted
    for r in range(m):
        block = slice(r * p, (r + 1) * p)
        hess[block, block] -= (design * w[:, r : r + 1]).T @ design
    return (hess + hess.T) / 2.0


def profile_loglik(
    params: DrmParams, basis_values: np.ndarray, counts: Sequence[int]
) -> float:
    """Profile log empirical likelihood.

    Args:
        params: Model parameters
        basis_values: N x d basis values, rows in sample order
        counts: Sample sizes n_0..n_m

    Returns:
        The objective value

    Raises:
        NumericError: If the objective overflows

    Example:
        ```python
        profile_loglik(DrmParams.zeros(1, 1), np.zeros((4, 1)), [2, 2])  # -4 log 4
        ```
    """
    design = _design(basis_values)
    counts = _check_inputs(design, counts)
    value, _, _ = _profile_terms(params.coefficient_matrix(), design, counts)
    return value


def profile_grad(
    params: DrmParams, basis_values: np.ndarray, counts: Sequence[int]
) -> np.ndarray:
    """Exact gradient of ``profile_loglik``, in ``DrmParams.to_vector`` order.

    The alpha_r entry is n_r - sum_i w_r(x_i); the beta_r block is the sum of
    q over sample r minus sum_i w_r(x_i) q(x_i), where w_r(x) is the softmax
    of log n_s + eta_s(x) over s.
    """
    design = _design(basis_values)
    counts = _check_inputs(design, counts)
    _, _, weights = _profile_terms(params.coefficient_matrix(), design, counts)
    return _gradient(design, counts, weights)


@dataclass(frozen=True)
class DrmFit:
    """A fitted density ratio model.

    Attributes:
        params: Fitted (alpha, beta)
        points: Pooled observations in sample order
        counts: Sample sizes
        basis_values: N x d basis values at ``points``
        weights: Fitted base masses p_i = 1 / sum_r n_r exp(eta_r(x_i))
        tilts: N x (m+1) matrix of p_i exp(eta_r(x_i)), each column summing to 1
        loglik: Profile log-EL at the optimum
        converged: Whether the gradient criterion was met
        iterations: Newton iterations used
        gradient_norm: Final gradient sup-norm
        constraint_residual: Max over r of |sum_i p_i exp(eta_r(x_i)) - 1|
        basis: The basis function, for evaluation away from the data
    """

    params: DrmParams
    points: np.ndarray
    counts: np.ndarray
    basis_values: np.ndarray
    weights: np.ndarray
    tilts: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    gradient_norm: float
    constraint_residual: float
    basis: Optional[BasisFunction] = None

    @property
    def m(self) -> int:
        return int(self.counts.size) - 1

    def population_weights(self, r: int) -> np.ndarray:
        """Masses of the fitted G_r on ``points``."""
        if not 0 <= r <= self.m:
            raise ValidationError(f"Population index {r} outside 0..{self.m}")
        return self.tilts[:, r]

    def cdf(self, r: int, x: Union[float, np.ndarray]) -> np.ndarray:
        """Fitted G_r(x), a right-continuous step function."""
        order = np.argsort(self.points, kind="mergesort")
        sorted_points = self.points[order]
        cumulative = np.concatenate([[0.0], np.cumsum(self.population_weights(r)[order])])
        index = np.searchsorted(sorted_points, np.asarray(x, dtype=float), side="right")
        return cumulative[index]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": 1,
            "alpha": self.params.alpha.tolist(),
            "beta": self.params.beta.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "constraint_residual": self.constraint_residual,
        }


def _ascent_direction(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Newton direction for the concave objective, damped when ill-conditioned."""
    curvature = -hess
    eigenvalues = np.linalg.eigvalsh(curvature)
    top = max(float(eigenvalues[-1]), 0.0)
    damping = 0.0
    if eigenvalues[0] < 1e-10 * top or top == 0.0:
        damping = 1e-10 * top - float(eigenvalues[0]) + max(1e-12 * top, 1e-12)
    identity = np.eye(grad.size)
    for _ in range(MAX_DAMPING_STEPS):
        try:
            factor = scipy.linalg.cho_factor(curvature + damping * identity)
            return scipy.linalg.cho_solve(factor, grad)
        except scipy.linalg.LinAlgError:
            damping = max(10.0 * damping, 1e-12 * max(top, 1.0))
    raise ConvergenceError(
        "fit_drm: Hessian damping exhausted", details={"damping": damping}
    )


def _evaluate_basis(ms: MultiSample, basis: Optional[BasisFunction]) -> np.ndarray:
    if basis is None:
        if ms.m > 0:
            raise ValidationError("fit_drm: a basis is required when m >= 1")
        return np.zeros((ms.total, 0))
    values = np.asarray(basis(ms.values), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != ms.total:
        raise ValidationError("fit_drm: basis returned the wrong number of rows")
    if not np.all(np.isfinite(values)):
        raise NumericError("fit_drm: basis is not finite at every observation")
    return values


def fit_drm(
    ms: MultiSample,
    basis: Optional[BasisFunction],
    tolerance: float = 1e-8,
    max_iterations: int = 200,
) -> DrmFit:
    """Maximize the profile empirical likelihood.

    Basis coordinates are centered and scaled by their pooled mean and
    standard deviation before optimizing; the reported parameters are mapped
    back to the original basis. Iterations start from zero and stop once the
    gradient sup-norm drops below ``tolerance``.

    Args:
        ms: The multi-sample data
        basis: Callable mapping an array of points to an N x d matrix
            (an ``AdaptiveBasis``, a ``FixedBasis`` or any function); may be
            None when there is a single population
        tolerance: Gradient sup-norm stopping threshold
        max_iterations: Newton iteration limit

    Returns:
        DrmFit with fitted weights and diagnostics

    Raises:
        ConvergenceError: If the fit does not converge; ``details`` carries the
            last iterate and gradient norm
        NumericError: If a basis coordinate is constant or not finite

    Example:
        ```python
        fit = fit_drm(ms, FixedBasis(("x",)))
        print(fit.params.alpha, fit.params.beta, fit.loglik)
        ```
    """
    values = _evaluate_basis(ms, basis)
    counts = ms.sizes
    total = ms.total
    m, d = ms.m, values.shape[1]

    if m == 0:
        weights = np.full(total, 1.0 / total)
        return DrmFit(
            params=DrmParams.zeros(0, d),
            points=ms.values,
            counts=counts,
            basis_values=values,
            weights=weights,
            tilts=weights[:, None].copy(),
            loglik=-total * math.log(total),
            converged=True,
            iterations=0,
            gradient_norm=0.0,
            constraint_residual=0.0,
            basis=basis,
        )
    if d == 0:
        raise ValidationError("fit_drm: basis must have at least one coordinate")

    center = values.mean(axis=0)
    scale = values.std(axis=0)
    if np.any(scale <= 0):
        raise NumericError(
            "fit_drm: a basis coordinate is constant over the data",
            details={"constant_columns": np.nonzero(scale <= 0)[0].tolist()},
        )
    design = _design((values - center) / scale)

    def to_original(theta: np.ndarray) -> DrmParams:
        std = DrmParams.from_vector(theta, m, d)
        beta = std.beta / scale
        return DrmParams(alpha=std.alpha - beta @ center, beta=beta)

    def original_gradient(grad: np.ndarray) -> np.ndarray:
        blocks = grad.reshape(m, d + 1)
        mapped = blocks.copy()
        mapped[:, 1:] = blocks[:, :1] * center + blocks[:, 1:] * scale
        return mapped.ravel()

    def coefficients(theta: np.ndarray) -> np.ndarray:
        return DrmParams.from_vector(theta, m, d).coefficient_matrix()

    theta = np.zeros(m * (d + 1))
    value, _, weights = _profile_terms(coefficients(theta), design, counts)
    grad = _gradient(design, counts, weights)
    grad_norm = float(np.max(np.abs(original_gradient(grad))))
    iterations = 0
    converged = grad_norm < tolerance

    while not converged and iterations < max_iterations:
        iterations += 1
        direction = _ascent_direction(grad, _hessian(design, weights))
        slope = float(grad @ direction)
        if not slope > 0:
            direction, slope = grad, float(grad @ grad)

        accepted = False
        for candidate_direction, candidate_slope in ((direction, slope), (grad, float(grad @ grad))):
            step = 1.0
            for _ in range(MAX_BACKTRACKS):
                trial = theta + step * candidate_direction
                try:
                    trial_value, _, trial_weights = _profile_terms(
                        coefficients(trial), design, counts
                    )
                except NumericError:
                    trial_value = -math.inf
                rounding = 1e-13 * abs(value)
                if trial_value >= value + ARMIJO_SLOPE * step * candidate_slope - rounding:
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                break

        if not accepted:
            logger.debug("fit_drm: line search stalled at iteration %d", iterations)
            break

        theta, value, weights = trial, trial_value, trial_weights
        grad = _gradient(design, counts, weights)
        grad_norm = float(np.max(np.abs(original_gradient(grad))))
        converged = grad_norm < tolerance

    params = to_original(theta)
    if not converged:
        raise ConvergenceError(
            f"fit_drm: no convergence after {iterations} iterations "
            f"(gradient sup-norm {grad_norm:.3g})",
            details={
                "alpha": params.alpha.tolist(),
                "beta": params.beta.tolist(),
                "gradient_norm": grad_norm,
                "iterations": iterations,
            },
        )

    base_masses = weights[:, 0] / counts[0]
    tilts = weights / counts
    residual = float(np.max(np.abs(tilts.sum(axis=0) - 1.0)))
    logger.debug(
        "fit_drm: converged in %d iterations, loglik %.10g, residual %.2e",
        iterations,
        value,
        residual,
    )
    return DrmFit(
        params=params,
        points=ms.values,
        counts=counts,
        basis_values=values,
        weights=base_masses,
        tilts=tilts,
        loglik=value,
        converged=True,
        iterations=iterations,
        gradient_norm=grad_norm,
        constraint_residual=residual,
        basis=basis,
    )


def fitted_cdf(fit: DrmFit, r: int, x: Union[float, np.ndarray]) -> np.ndarray:
    """Fitted distribution function G_r(x) = sum_i p_i exp(eta_r(x_i)) 1(x_i <= x).

    Example:
        ```python
        fitted_cdf(fit, 0, 2.5)
        ```
    """
    return fit.cdf(r, x)

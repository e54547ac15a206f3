"""Quantile and density estimators built on a fitted density ratio model."""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import stats

from .el_drm import DrmFit
from .exceptions import DomainError, ValidationError
from .kde import weighted_silverman_bandwidth


@dataclass(frozen=True)
class QuantileRequest:
    """A quantile level for one population."""

    population: int
    tau: float

    def __post_init__(self) -> None:
        check_level(self.tau)


def check_level(tau: float) -> None:
    """Raise DomainError unless 0 < tau < 1."""
    if not 0.0 < tau < 1.0:
        raise DomainError(f"Quantile level must lie in (0, 1), got {tau}")


def _inf_quantile(sorted_points: np.ndarray, masses: np.ndarray, tau: float) -> float:
    """inf{t : F(t) >= tau} for a discrete distribution on sorted points."""
    cumulative = np.cumsum(masses)
    index = int(np.searchsorted(cumulative, tau - 1e-12, side="left"))
    return float(sorted_points[min(index, sorted_points.size - 1)])


def drm_quantile(fit: DrmFit, r: int, tau: float) -> float:
    """EL-DRM quantile, the smallest pooled point t with G_r(t) >= tau.

    Args:
        fit: Converged fit
        r: Population index
        tau: Level in (0, 1)

    Returns:
        The quantile estimate

    Raises:
        DomainError: If tau is outside (0, 1)

    Example:
        ```python
        medians = [drm_quantile(fit, r, 0.5) for r in range(fit.m + 1)]
        ```
    """
    check_level(tau)
    order = np.argsort(fit.points, kind="mergesort")
    return _inf_quantile(fit.points[order], fit.population_weights(r)[order], tau)


def empirical_quantile(sample: Sequence[float], tau: float) -> float:
    """Type-1 sample quantile, inf{t : F_n(t) >= tau}."""
    check_level(tau)
    points = np.sort(np.asarray(sample, dtype=float), kind="mergesort")
    return _inf_quantile(points, np.full(points.size, 1.0 / points.size), tau)


def weighted_kde(
    x: Union[float, np.ndarray], points: np.ndarray, masses: np.ndarray, bandwidth: float
) -> np.ndarray:
    """Gaussian kernel smoothing of a discrete distribution."""
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    out = np.empty(flat.size)
    chunk = max(1, 2_000_000 // points.size)
    for start in range(0, flat.size, chunk):
        z = (flat[start : start + chunk, None] - points[None, :]) / bandwidth
        out[start : start + chunk] = stats.norm.pdf(z) @ masses
    return (out / bandwidth).reshape(x.shape)


def drm_bandwidth(fit: DrmFit, r: int) -> float:
    """Silverman bandwidth of the fitted distribution G_r."""
    return weighted_silverman_bandwidth(
        fit.points, fit.population_weights(r), int(fit.counts[r])
    )


def drm_density(fit: DrmFit, r: int, x: Union[float, np.ndarray]) -> np.ndarray:
    """DRM-smoothed density of population r.

    The fitted G_r is smoothed with a standard normal kernel whose bandwidth
    is Silverman's rule applied to G_r itself.

    Args:
        fit: Converged fit
        r: Population index
        x: Evaluation point(s)

    Returns:
        Density values, same shape as ``x``

    Raises:
        DegenerateSampleError: If G_r has zero spread
    """
    masses = fit.population_weights(r)
    masses = masses / masses.sum()
    return weighted_kde(x, fit.points, masses, drm_bandwidth(fit, r))


def quantile_table(fit: DrmFit, levels: Sequence[float]) -> np.ndarray:
    """(m+1) x len(levels) matrix of EL-DRM quantiles."""
    if len(levels) == 0:
        raise ValidationError("quantile_table: no levels requested")
    return np.array(
        [[drm_quantile(fit, r, tau) for tau in levels] for r in range(fit.m + 1)]
    )


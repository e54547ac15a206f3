"""Kernel density estimation and bandwidth selection.

The kernel is always the standard normal density. Besides Silverman's rule,
this module implements the eigen-matching bandwidth search: a pilot
eigensystem is computed from normal or gamma fits to each sample, and the
scale factor k in h_r = k n_r^(-1/5) sd_r is chosen so that the estimated
eigenfunctions best match the pilot ones.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .exceptions import (
    DegenerateSampleError,
    DomainError,
    DRMError,
    SelectionError,
    ValidationError,
)
from .multisample import MultiSample, PooledEmpirical, pool
from .runtime import parallel_map

if TYPE_CHECKING:
    from .fpca_basis import AdaptiveBasis

logger = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# Kernel matrix entries evaluated per chunk.
_CHUNK_ELEMENTS = 2_000_000


class ReferenceFamily(Enum):
    """Parametric families for the pilot eigensystem."""

    NORMAL = "normal"
    GAMMA = "gamma"


class BandwidthPolicy(Enum):
    """How KDE bandwidths are chosen."""

    SILVERMAN = "silverman"
    ADAPTIVE = "adaptive"
    FIXED = "fixed"


def sample_sd(sample: Sequence[float]) -> float:
    """Sample standard deviation with divisor n - 1."""
    values = np.asarray(sample, dtype=float)
    if values.size < 2:
        raise DegenerateSampleError(
            f"Need at least 2 observations for a spread estimate, got {values.size}"
        )
    return float(np.std(values, ddof=1))


def silverman_bandwidth(sample: Sequence[float]) -> float:
    """Silverman's rule of thumb, h = 0.9 n^(-1/5) min(sd, IQR / 1.34).

    The IQR uses linear interpolation between order statistics (type 7). When
    the IQR is zero but the standard deviation is not, the standard deviation
    alone is used.

    Args:
        sample: One population's observations (n >= 2)

    Returns:
        Positive bandwidth

    Raises:
        DegenerateSampleError: If the sample has zero spread

    Example:
        ```python
        h = silverman_bandwidth([0.0, 1.0])  # 0.9 * 2 ** -0.2 * 0.5 / 1.34
        ```
    """
    values = np.asarray(sample, dtype=float)
    sd = sample_sd(values)
    if sd <= 0:
        raise DegenerateSampleError("silverman_bandwidth: sample has zero spread")
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * values.size ** (-0.2)


def _weighted_type7_quantile(
    sorted_points: np.ndarray, weights: np.ndarray, tau: float
) -> float:
    """Weighted quantile by linear interpolation, equal to type 7 for uniform weights.

    Point k sits at plotting position (W_k - w_k) / (1 - w_last), where W_k is
    the cumulative weight; uniform weights give positions k / (n - 1).
    """
    keep = weights > 0
    xs, ws = sorted_points[keep], weights[keep]
    before = np.cumsum(ws) - ws
    positions = before / before[-1]
    return float(np.interp(tau, positions, xs))


def weighted_silverman_bandwidth(
    points: Sequence[float], weights: Sequence[float], sample_size: int
) -> float:
    """Silverman's rule applied to a discrete fitted distribution.

    The spread is taken from the weighted support ``(points, weights)``: a
    weighted mean, the variance sum w (x - mean)^2 / (1 - sum w^2), and
    weighted quartiles interpolated between support points. Uniform weights
    give the n - 1 divisor and type-7 quartiles, so the result equals
    ``silverman_bandwidth`` of the points.

    Args:
        points: Support points
        weights: Nonnegative weights (normalized internally)
        sample_size: The n_r entering the n^(-1/5) factor

    Returns:
        Positive bandwidth

    Raises:
        DegenerateSampleError: If the fitted distribution has zero spread
    """
    x = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mean = float(np.dot(w, x))
    correction = 1.0 - float(np.dot(w, w))
    if correction <= 0:
        raise DegenerateSampleError("Fitted distribution is a single point mass")
    sd = math.sqrt(float(np.dot(w, (x - mean) ** 2)) / correction)
    if sd <= 0:
        raise DegenerateSampleError("Fitted distribution has zero spread")

    order = np.argsort(x, kind="mergesort")
    xs, ws = x[order], w[order]
    iqr = _weighted_type7_quantile(xs, ws, 0.75) - _weighted_type7_quantile(xs, ws, 0.25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * sample_size ** (-0.2)


def scaled_bandwidth(sample: Sequence[float], k: float) -> float:
    """Bandwidth h = k n^(-1/5) sd with sd the n - 1 divisor standard deviation.

    Raises:
        ValidationError: If k is not positive
        DegenerateSampleError: If the sample has zero spread
    """
    if not k > 0:
        raise ValidationError(f"scaled_bandwidth: k must be positive, got {k}")
    values = np.asarray(sample, dtype=float)
    sd = sample_sd(values)
    if sd <= 0:
        raise DegenerateSampleError("scaled_bandwidth: sample has zero spread")
    return k * values.size ** (-0.2) * sd


@dataclass(frozen=True)
class KdeEstimate:
    """Gaussian kernel density estimate of one sample, optionally floored.

    Attributes:
        sample: The population's observations
        bandwidth: Kernel bandwidth h
        floor: Lower clamp C (log N / N)^(2/5), or None when disabled
    """

    sample: np.ndarray
    bandwidth: float
    floor: Optional[float] = None

    def log_density(self, x: Union[float, np.ndarray]) -> np.ndarray:
        """Evaluate the log density, stabilized by log-sum-exp."""
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.empty(flat.size)
        chunk = max(1, _CHUNK_ELEMENTS // self.sample.size)
        for start in range(0, flat.size, chunk):
            z = (flat[start : start + chunk, None] - self.sample[None, :]) / self.bandwidth
            out[start : start + chunk] = logsumexp(-0.5 * z * z, axis=1)
        out -= math.log(self.sample.size * self.bandwidth) + _LOG_SQRT_2PI
        if self.floor is not None:
            np.maximum(out, math.log(self.floor), out=out)
        return out.reshape(x.shape)

    def __call__(self, x: Union[float, np.ndarray]) -> np.ndarray:
        return np.exp(self.log_density(x))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "kde",
            "sample": self.sample.tolist(),
            "bandwidth": self.bandwidth,
            "floor": self.floor,
        }


def kde_floor_value(floor_constant: float, total: int) -> float:
    """The floor C (log N / N)^(2/5)."""
    if not floor_constant > 0:
        raise ValidationError(f"Floor constant must be positive, got {floor_constant}")
    if total < 2:
        raise ValidationError(f"Floor needs N >= 2, got {total}")
    return floor_constant * (math.log(total) / total) ** 0.4


def kde_fit(
    sample: Sequence[float],
    bandwidth: float,
    floor_constant: Optional[float] = None,
    total: Optional[int] = None,
) -> KdeEstimate:
    """Build a kernel density estimate.

    Args:
        sample: One population's observations
        bandwidth: Positive bandwidth
        floor_constant: C in the floor C (log N / N)^(2/5); no floor when None
        total: Pooled size N used by the floor (defaults to the sample size)

    Returns:
        KdeEstimate evaluating max{(n h)^-1 sum K((x - x_j) / h), floor}

    Raises:
        ValidationError: If the bandwidth or floor constant is not positive

    Example:
        ```python
        kde = kde_fit([-1.0, 1.0], bandwidth=1.0)
        kde(0.0)  # phi(1) = 0.241971
        ```
    """
    if not bandwidth > 0:
        raise ValidationError(f"kde_fit: bandwidth must be positive, got {bandwidth}")
    values = np.array(sample, dtype=float).ravel()
    values.setflags(write=False)
    floor = None
    if floor_constant is not None:
        floor = kde_floor_value(floor_constant, total if total is not None else values.size)
    return KdeEstimate(sample=values, bandwidth=float(bandwidth), floor=floor)


def default_floor_constant(sample_size: int, bandwidth: float) -> float:
    """Default floor constant C_r = 0.1 (n_r h_r)^-1."""
    return 0.1 / (sample_size * bandwidth)


@dataclass(frozen=True)
class ParametricDensity:
    """A closed-form normal or gamma density.

    Attributes:
        family: The parametric family
        params: (mean, variance) for normal, (shape, scale) for gamma
    """

    family: ReferenceFamily
    params: Tuple[float, float]

    def log_density(self, x: Union[float, np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family is ReferenceFamily.NORMAL:
            mean, variance = self.params
            return stats.norm.logpdf(x, loc=mean, scale=math.sqrt(variance))
        shape, scale = self.params
        return stats.gamma.logpdf(x, a=shape, scale=scale)

    def __call__(self, x: Union[float, np.ndarray]) -> np.ndarray:
        return np.exp(self.log_density(x))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "parametric", "family": self.family.value, "params": list(self.params)}


def fit_reference(
    ms: MultiSample, family: Union[ReferenceFamily, str]
) -> List[Tuple[float, float]]:
    """Fit a normal or gamma distribution to each sample by moments.

    Args:
        ms: The multi-sample data
        family: ``normal`` gives (mean, variance); ``gamma`` gives (shape, scale)
            with shape = mean^2 / variance and scale = variance / mean

    Returns:
        One parameter pair per population

    Raises:
        DomainError: If gamma is requested for data with nonpositive values
        DegenerateSampleError: If a sample has zero variance
    """
    family = ReferenceFamily(family)
    params = []
    for k, sample in enumerate(ms.samples):
        mean = float(np.mean(sample))
        variance = float(np.var(sample, ddof=1))
        if variance <= 0:
            raise DegenerateSampleError(f"fit_reference: population {k} has zero variance")
        if family is ReferenceFamily.NORMAL:
            params.append((mean, variance))
        else:
            if np.any(sample <= 0):
                raise DomainError(
                    f"fit_reference: gamma family needs positive data; population {k} "
                    "has nonpositive values",
                    details={"population": k},
                )
            params.append((mean * mean / variance, variance / mean))
    return params


@dataclass(frozen=True)
class ReferenceEigensystem:
    """Pilot eigensystem computed from parametric log density ratios.

    Attributes:
        eigenvalues: The top d_ref eigenvalues
        psi_values: N x d_ref eigenfunction values at the pooled points
        densities: The parametric densities used
    """

    eigenvalues: np.ndarray
    psi_values: np.ndarray
    densities: Tuple[ParametricDensity, ...]


def reference_eigensystem(
    ms: MultiSample,
    params: Sequence[Tuple[float, float]],
    family: Union[ReferenceFamily, str] = ReferenceFamily.NORMAL,
    d_ref: int = 2,
    pooled: Optional[PooledEmpirical] = None,
) -> ReferenceEigensystem:
    """Eigensystem of the parametric log density ratios under the pooled measure.

    Args:
        ms: The multi-sample data
        params: Fitted parameters per population (see ``fit_reference``)
        family: Family the parameters belong to
        d_ref: Number of eigenpairs to keep
        pooled: Pooled measure (computed from ``ms`` when omitted)

    Returns:
        ReferenceEigensystem with the top ``d_ref`` pairs

    Raises:
        RankDeficiencyError: If fewer than ``d_ref`` eigenvalues are nonzero
    """
    from .fpca_basis import build_basis, eigensystem, log_ratios, m_hat

    family = ReferenceFamily(family)
    pooled = pooled if pooled is not None else pool(ms)
    densities = tuple(
        ParametricDensity(family, (float(p[0]), float(p[1]))) for p in params
    )
    lr = log_ratios(densities, pooled)
    basis = build_basis(lr, eigensystem(m_hat(lr, pooled)), d_ref)
    return ReferenceEigensystem(
        eigenvalues=basis.eigenvalues, psi_values=basis.values, densities=densities
    )


def default_k_grid() -> np.ndarray:
    """Scale factors 0.3, 0.4, ..., 3.0."""
    return np.round(np.arange(3, 31) / 10.0, 10)


def k_grid_from_range(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid lo, lo + step, ..., hi."""
    if not (lo > 0 and hi >= lo and step > 0):
        raise ValidationError(f"Invalid bandwidth grid {lo}:{hi}:{step}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 10)


@dataclass(frozen=True)
class BandwidthSearch:
    """Result of the eigen-matching bandwidth search.

    Attributes:
        k_grid: Candidate scale factors, strictly increasing
        family: Reference family of the pilot eigensystem
        objective: Objective per candidate (inf where the candidate failed)
        chosen_k: The grid argmin, ties broken toward smaller k
        bandwidths: Per-population bandwidths at ``chosen_k``
        failures: Candidate k mapped to its failure message
    """

    k_grid: np.ndarray
    family: ReferenceFamily
    objective: np.ndarray
    chosen_k: float
    bandwidths: np.ndarray
    failures: Dict[float, str] = field(default_factory=dict)


def _eigen_mismatch(estimated: "AdaptiveBasis", reference: ReferenceEigensystem) -> float:
    est = estimated.values / np.sqrt(estimated.eigenvalues)
    ref = reference.psi_values / np.sqrt(reference.eigenvalues)
    total = 0.0
    for j in range(ref.shape[1]):
        same = float(np.mean((est[:, j] - ref[:, j]) ** 2))
        flipped = float(np.mean((est[:, j] + ref[:, j]) ** 2))
        total += min(same, flipped)
    return total


def select_bandwidth(
    ms: MultiSample,
    family: Union[ReferenceFamily, str] = ReferenceFamily.NORMAL,
    k_grid: Optional[Sequence[float]] = None,
    threads: Optional[int] = None,
    pooled: Optional[PooledEmpirical] = None,
) -> BandwidthSearch:
    """Choose the bandwidth scale k by matching a pilot eigensystem.

    For each k, every population gets h_r = k n_r^(-1/5) sd_r, the adaptive
    basis is rebuilt, and the objective

        sum_j min_sign integral (lambda_hat_j^(-1/2) psi_hat_j
                                 - lambda_j^(-1/2) psi_j)^2 dF_n

    is evaluated against the pilot eigensystem of ``family`` fits, using the
    top min(2, m) pairs.

    Args:
        ms: The multi-sample data (m >= 1)
        family: Reference family for the pilot eigensystem
        k_grid: Candidate scale factors (default 0.3 to 3.0 by 0.1)
        threads: Worker count for evaluating candidates
        pooled: Pooled measure (computed from ``ms`` when omitted)

    Returns:
        BandwidthSearch with the chosen k and bandwidths

    Raises:
        ValidationError: If the grid is empty, nonpositive or not increasing
        RankDeficiencyError: If the pilot eigensystem is rank deficient
        SelectionError: If every candidate fails

    Example:
        ```python
        search = select_bandwidth(ms, family="gamma")
        print(search.chosen_k, search.bandwidths)
        ```
    """
    from .fpca_basis import build_basis, eigensystem, log_ratios, m_hat

    family = ReferenceFamily(family)
    grid = default_k_grid() if k_grid is None else np.asarray(k_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("select_bandwidth: empty k grid")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValidationError("select_bandwidth: k grid must be positive and increasing")
    if ms.m < 1:
        raise ValidationError("select_bandwidth: needs at least two populations")

    pooled = pooled if pooled is not None else pool(ms)
    d_ref = min(2, ms.m)
    reference = reference_eigensystem(
        ms, fit_reference(ms, family), family, d_ref=d_ref, pooled=pooled
    )

    def evaluate(k: float) -> Tuple[float, Optional[str]]:
        try:
            kdes = [kde_fit(s, scaled_bandwidth(s, k)) for s in ms.samples]
            lr = log_ratios(kdes, pooled)
            basis = build_basis(lr, eigensystem(m_hat(lr, pooled)), d_ref)
            return _eigen_mismatch(basis, reference), None
        except DRMError as e:
            return math.inf, str(e)

    results = parallel_map(evaluate, [float(k) for k in grid], threads)
    objective = np.array([value for value, _ in results])
    failures = {float(k): msg for k, (_, msg) in zip(grid, results) if msg is not None}
    for k, msg in failures.items():
        logger.warning("Bandwidth candidate k=%g failed: %s", k, msg)

    if not np.any(np.isfinite(objective)):
        raise SelectionError(
            "select_bandwidth: every bandwidth candidate failed",
            details={"failures": failures},
        )

    best = int(np.argmin(objective))
    chosen = float(grid[best])
    bandwidths = np.array([scaled_bandwidth(s, chosen) for s in ms.samples])
    logger.info("Selected bandwidth scale k=%g (objective %.6g)", chosen, objective[best])
    return BandwidthSearch(
        k_grid=grid,
        family=family,
        objective=objective,
        chosen_k=chosen,
        bandwidths=bandwidths,
        failures=failures,
    )

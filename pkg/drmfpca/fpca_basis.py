"""Adaptive basis functions from functional PCA of estimated log density ratios.

The pipeline is:

1. ``log_ratios`` estimates log(g_k / g_0) at the pooled points, removes the
   pooled-measure mean, then subtracts the across-population average so the
   result does not depend on which population is the base.
2. ``m_hat`` forms the (m+1) x (m+1) Gram matrix of the centered ratios under
   the pooled empirical measure.
3. ``eigensystem`` diagonalizes it with a reproducible sign convention.
4. ``build_basis`` turns the top d eigenvectors into eigenfunctions
   psi_j(x) = lambda_j^(-1/2) sum_k p_kj Q_k^c(x), evaluable anywhere.
5. ``select_d`` picks d from the explained-variance threshold and BIC.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .el_drm import fit_drm
from .exceptions import (
    DRMError,
    EvaluationError,
    NumericError,
    RankDeficiencyError,
    SelectionError,
    ValidationError,
)
from .kde import KdeEstimate, ParametricDensity, ReferenceFamily
from .multisample import MultiSample, PooledEmpirical
from .runtime import parallel_map

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# Eigenvalues below this fraction of the largest are numerically zero.
ZERO_EIGENVALUE_RATIO = 1e-12


class LogDensity(Protocol):
    """A density that evaluates its log at an array of points and serializes itself."""

    def log_density(self, x: np.ndarray) -> np.ndarray:
        ...  # pragma: no cover

    def to_dict(self) -> Dict[str, Any]:
        ...  # pragma: no cover


def _log_density_matrix(densities: Sequence[LogDensity], x: np.ndarray) -> np.ndarray:
    logs = np.vstack([np.asarray(d.log_density(x), dtype=float) for d in densities])
    bad = ~np.isfinite(logs)
    if np.any(bad):
        k, i = (int(v[0]) for v in np.nonzero(bad))
        raise EvaluationError(
            f"log_ratios: density of population {k} is zero or undefined at "
            f"x={x[i]!r}; enable the KDE floor or widen the bandwidth",
            details={"population": k, "point": float(x[i])},
        )
    return logs


@dataclass(frozen=True)
class LogRatioSet:
    """Centered log density ratio estimates.

    Attributes:
        densities: Density estimates, one per population (index 0 is the base)
        offsets: Pooled-measure means of log(g_k / g_0), one per population
        points: The pooled points
        values: (m+1) x N matrix of Q_k^c at the pooled points
    """

    densities: Tuple[LogDensity, ...]
    offsets: np.ndarray
    points: np.ndarray
    values: np.ndarray

    @property
    def m(self) -> int:
        return len(self.densities) - 1

    def plain(self, x: Union[float, np.ndarray]) -> np.ndarray:
        """Q_k(x) = log(g_k(x) / g_0(x)) - offset_k, as an (m+1) x len(x) matrix."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        logs = _log_density_matrix(self.densities, x)
        return logs - logs[0] - self.offsets[:, None]

    def evaluate(self, x: Union[float, np.ndarray]) -> np.ndarray:
        """Q_k^c(x) as an (m+1) x len(x) matrix, reusing the cached offsets."""
        plain = self.plain(x)
        return plain - plain.mean(axis=0)


def _assemble(
    densities: Sequence[LogDensity],
    points: np.ndarray,
    offsets: Optional[np.ndarray] = None,
) -> LogRatioSet:
    logs = _log_density_matrix(densities, points)
    ratios = logs - logs[0]
    if offsets is None:
        offsets = ratios.mean(axis=1)
    plain = ratios - offsets[:, None]
    values = plain - plain.mean(axis=0)
    return LogRatioSet(
        densities=tuple(densities), offsets=offsets, points=points, values=values
    )


def log_ratios(densities: Sequence[LogDensity], pooled: PooledEmpirical) -> LogRatioSet:
    """Estimate the centered log density ratios at the pooled points.

    Args:
        densities: One density estimate per population, base first
        pooled: The pooled empirical measure

    Returns:
        LogRatioSet with both centerings applied

    Raises:
        EvaluationError: If a density is zero or NaN at a pooled point
    """
    return _assemble(densities, pooled.points)


@dataclass(frozen=True)
class MHat:
    """Gram matrix of centered log ratios under the pooled measure."""

    matrix: np.ndarray


def m_hat(lr: LogRatioSet, pooled: Optional[PooledEmpirical] = None) -> MHat:
    """Build M(i, j) = integral Q_i^c Q_j^c dF_n, stored symmetrized.

    Args:
        lr: Centered log ratios
        pooled: Pooled measure; only used to check alignment with ``lr``

    Returns:
        MHat of size (m+1) x (m+1)
    """
    if pooled is not None and pooled.size != lr.points.size:
        raise ValidationError("m_hat: log ratios were not computed on this pooled measure")
    values = lr.values
    matrix = values @ values.T / values.shape[1]
    return MHat(matrix=(matrix + matrix.T) / 2.0)


@dataclass(frozen=True)
class Eigensystem:
    """Eigenpairs in descending eigenvalue order.

    Attributes:
        eigenvalues: Descending eigenvalues
        eigenvectors: Unit eigenvectors as columns, largest-magnitude entry positive
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def rank(self) -> int:
        """Number of numerically nonzero eigenvalues."""
        top = self.eigenvalues[0] if self.eigenvalues.size else 0.0
        if top <= 0:
            return 0
        return int(np.sum(self.eigenvalues > ZERO_EIGENVALUE_RATIO * top))


def eigensystem(M: Union[MHat, np.ndarray]) -> Eigensystem:
    """Diagonalize a symmetric matrix.

    Eigenvalues are sorted in descending order. Each eigenvector has its
    largest-magnitude entry positive, ties going to the lowest index.

    Args:
        M: Symmetric matrix or MHat

    Returns:
        Eigensystem with all pairs

    Raises:
        NumericError: If the eigensolver fails

    Example:
        ```python
        eig = eigensystem(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        eig.eigenvalues  # array([2., 0.])
        ```
    """
    matrix = M.matrix if isinstance(M, MHat) else np.asarray(M, dtype=float)
    try:
        values, vectors = scipy.linalg.eigh(matrix)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"eigensystem: eigensolver failed: {e}")

    order = np.argsort(values, kind="mergesort")[::-1]
    values = values[order]
    vectors = vectors[:, order]
    # Near-equal magnitudes count as ties so the lowest index wins.
    magnitudes = np.abs(vectors)
    pivots = np.argmax(magnitudes >= magnitudes.max(axis=0) - 1e-12, axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return Eigensystem(eigenvalues=values, eigenvectors=vectors * signs)


@dataclass(frozen=True)
class AdaptiveBasis:
    """The data-adaptive basis q(x) = (psi_0(x), ..., psi_{d-1}(x)).

    Attributes:
        log_ratios: Log ratios the basis was built from
        eigenvalues: lambda_0 >= ... >= lambda_{d-1} > 0
        eigenvectors: (m+1) x d matrix of p_j columns
        spectrum: All m+1 eigenvalues of M
        provenance: Bandwidth and d-selection record
    """

    log_ratios: LogRatioSet
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    spectrum: np.ndarray
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def coefficients(self) -> np.ndarray:
        """(m+1) x d matrix mapping Q^c to psi."""
        return self.eigenvectors / np.sqrt(self.eigenvalues)

    @property
    def values(self) -> np.ndarray:
        """N x d matrix of psi_j at the pooled points."""
        return self.log_ratios.values.T @ self.coefficients

    def __call__(self, x: Union[float, np.ndarray]) -> np.ndarray:
        """Evaluate the basis at arbitrary points, returning a len(x) x d matrix."""
        return self.log_ratios.evaluate(x).T @ self.coefficients

    def to_dict(self) -> Dict[str, Any]:
        """Serialize at full precision, including centering constants."""
        lr = self.log_ratios
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "adaptive_basis",
            "densities": [d.to_dict() for d in lr.densities],
            "offsets": lr.offsets.tolist(),
            "points": lr.points.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
            "spectrum": self.spectrum.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AdaptiveBasis":
        """Rebuild a basis serialized by ``to_dict``.

        Raises:
            ValidationError: If the schema version or layout is not recognized
        """
        if data.get("schema_version") != SCHEMA_VERSION or data.get("kind") != "adaptive_basis":
            raise ValidationError(
                f"Unsupported basis file (schema_version={data.get('schema_version')!r})"
            )
        densities: List[LogDensity] = []
        for entry in data["densities"]:
            if entry["kind"] == "kde":
                sample = np.array(entry["sample"], dtype=float)
                sample.setflags(write=False)
                densities.append(
                    KdeEstimate(sample=sample, bandwidth=entry["bandwidth"], floor=entry["floor"])
                )
            elif entry["kind"] == "parametric":
                first, second = (float(v) for v in entry["params"])
                densities.append(
                    ParametricDensity(ReferenceFamily(entry["family"]), (first, second))
                )
            else:
                raise ValidationError(f"Unknown density kind {entry['kind']!r}")
        lr = _assemble(
            densities,
            np.array(data["points"], dtype=float),
            offsets=np.array(data["offsets"], dtype=float),
        )
        return cls(
            log_ratios=lr,
            eigenvalues=np.array(data["eigenvalues"], dtype=float),
            eigenvectors=np.array(data["eigenvectors"], dtype=float).reshape(
                len(densities), -1
            ),
            spectrum=np.array(data["spectrum"], dtype=float),
            provenance=dict(data.get("provenance", {})),
        )


def build_basis(
    lr: LogRatioSet,
    eig: Eigensystem,
    d: int,
    provenance: Optional[Dict[str, Any]] = None,
) -> AdaptiveBasis:
    """Build the adaptive basis from the top ``d`` eigenpairs.

    Args:
        lr: Centered log ratios
        eig: Eigensystem of ``m_hat(lr)``
        d: Number of eigenfunctions, 1 <= d <= m
        provenance: Optional record stored on the basis

    Returns:
        AdaptiveBasis, orthonormal under the pooled measure

    Raises:
        ValidationError: If d is outside 1..m
        RankDeficiencyError: If lambda_{d-1} is numerically zero
    """
    if not 1 <= d <= lr.m:
        raise ValidationError(f"build_basis: d must lie in 1..{lr.m}, got {d}")
    values = eig.eigenvalues
    if not values[d - 1] > ZERO_EIGENVALUE_RATIO * values[0]:
        raise RankDeficiencyError(
            f"build_basis: eigenvalue {d - 1} is numerically zero; use a smaller d "
            f"(at most {eig.rank})",
            details={"d": d, "rank": eig.rank, "eigenvalues": values.tolist()},
        )
    return AdaptiveBasis(
        log_ratios=lr,
        eigenvalues=values[:d].copy(),
        eigenvectors=eig.eigenvectors[:, :d].copy(),
        spectrum=values.copy(),
        provenance=dict(provenance or {}),
    )


@dataclass(frozen=True)
class DSelection:
    """Record of the choice of the number of eigenfunctions.

    Attributes:
        d: Chosen number, max(j1, j2)
        j1: Smallest J whose explained variance reaches the threshold
        j2: BIC minimizer over the candidates that could be fitted
        bic: Candidate J mapped to its BIC
        explained: Cumulative proportion of variance explained
        failures: Candidate J mapped to the reason it was excluded
    """

    d: int
    j1: int
    j2: int
    bic: Dict[int, float]
    explained: np.ndarray
    failures: Dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "j1": self.j1,
            "j2": self.j2,
            "bic": {str(k): v for k, v in self.bic.items()},
            "explained": self.explained.tolist(),
            "failures": {str(k): v for k, v in self.failures.items()},
        }


def explained_variance(eigenvalues: np.ndarray) -> np.ndarray:
    """Cumulative proportion of variance explained, over all m+1 eigenvalues."""
    total = float(np.sum(eigenvalues))
    if total <= 0:
        raise RankDeficiencyError("explained_variance: all eigenvalues are zero")
    return np.cumsum(eigenvalues) / total


def threshold_choice(eigenvalues: np.ndarray, threshold: float = 0.95) -> int:
    """Smallest J whose leading eigenvalues explain at least ``threshold``."""
    if not 0 < threshold <= 1:
        raise ValidationError(f"threshold must lie in (0, 1], got {threshold}")
    explained = explained_variance(eigenvalues)
    return int(np.argmax(explained >= threshold - 1e-12)) + 1


def bic_value(loglik: float, m: int, dimension: int, total: int) -> float:
    """BIC(q) = -2 loglik + m J log N."""
    return -2.0 * loglik + m * dimension * math.log(total)


def select_d(
    lr: LogRatioSet,
    ms: MultiSample,
    threshold: float = 0.95,
    bic_candidates: Sequence[int] = (1, 2, 3, 4),
    eig: Optional[Eigensystem] = None,
    threads: Optional[int] = None,
) -> DSelection:
    """Choose the number of eigenfunctions.

    J1 comes from the explained-variance threshold, J2 minimizes the BIC of
    the empirical likelihood fit over ``bic_candidates`` (ties go to the
    smaller J), and d = max(J1, J2). Candidates that exceed m or the
    numerical rank, or whose fit fails, are excluded with a warning.

    Args:
        lr: Centered log ratios
        ms: The samples the log ratios were estimated from
        threshold: Explained-variance threshold
        bic_candidates: Dimensions tried by BIC
        eig: Eigensystem of ``m_hat(lr)`` (computed when omitted)
        threads: Worker count for the candidate fits

    Returns:
        DSelection with d and its diagnostics

    Raises:
        SelectionError: If no BIC candidate can be fitted
    """
    eig = eig if eig is not None else eigensystem(m_hat(lr))
    explained = explained_variance(eig.eigenvalues)
    limit = min(lr.m, eig.rank)
    j1 = min(threshold_choice(eig.eigenvalues, threshold), limit)

    failures: Dict[int, str] = {}
    candidates = []
    for J in sorted(set(int(c) for c in bic_candidates)):
        if 1 <= J <= limit:
            candidates.append(J)
        else:
            failures[J] = f"outside 1..{limit} (m={lr.m}, rank={eig.rank})"

    def fit_candidate(J: int) -> Tuple[Optional[float], Optional[str]]:
        try:
            fit = fit_drm(ms, build_basis(lr, eig, J))
        except DRMError as e:
            return None, str(e)
        return bic_value(fit.loglik, ms.m, J, ms.total), None

    bic: Dict[int, float] = {}
    for J, (value, error) in zip(candidates, parallel_map(fit_candidate, candidates, threads)):
        if value is None:
            failures[J] = error or "fit failed"
        else:
            bic[J] = value
    for J, reason in sorted(failures.items()):
        logger.warning("BIC candidate J=%d excluded: %s", J, reason)

    if not bic:
        raise SelectionError(
            "select_d: no BIC candidate could be fitted", details={"failures": failures}
        )
    j2 = min(bic, key=lambda J: (bic[J], J))
    d = max(j1, j2)
    logger.info("Selected d=%d (threshold J1=%d, BIC J2=%d)", d, j1, j2)
    return DSelection(d=d, j1=j1, j2=j2, bic=bic, explained=explained, failures=failures)

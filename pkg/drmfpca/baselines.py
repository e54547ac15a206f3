"""Comparison estimators: the FPCA-of-densities baseline and plain nonparametrics.

The FPCA-of-densities model writes every density as the cross-population mean
density plus a combination of L orthonormal functions,

    g_r(x) = mean(x) + sum_j theta_rj phi_j(x),

with phi_j and theta_rj obtained from a Karhunen-Loeve expansion of the
centered kernel density estimates on a common uniform grid.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .estimators import check_level, empirical_quantile
from .exceptions import MassError, RankDeficiencyError, ValidationError
from .fpca_basis import ZERO_EIGENVALUE_RATIO, eigensystem
from .kde import KdeEstimate, kde_fit, silverman_bandwidth
from .multisample import MultiSample


@dataclass(frozen=True)
class KuModel:
    """Low-dimensional representation of the population densities on a grid.

    Attributes:
        grid: Uniform evaluation grid
        spacing: Grid spacing
        mean_density: Cross-population mean density on the grid
        phi: L x g grid-orthonormal functions
        theta: (m+1) x L scores
        densities: (m+1) x g reconstructed densities (may be negative)
        eigenvalues: All eigenvalues of the Gram matrix, descending
    """

    grid: np.ndarray
    spacing: float
    mean_density: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    densities: np.ndarray
    eigenvalues: np.ndarray

    @property
    def L(self) -> int:
        return int(self.phi.shape[0])

    def density(self, r: int, x: np.ndarray) -> np.ndarray:
        """Reconstructed density of population r, linearly interpolated, 0 off grid."""
        return np.interp(np.asarray(x, dtype=float), self.grid, self.densities[r], left=0.0, right=0.0)

    def cdf_on_grid(self, r: int) -> np.ndarray:
        """Monotone CDF on the grid: trapezoid integral, then running maximum."""
        raw = cumulative_trapezoid(self.densities[r], self.grid, initial=0.0)
        return np.maximum.accumulate(raw)


def ku_fit(ms: MultiSample, L: int, grid_size: int = 512) -> KuModel:
    """Fit the FPCA-of-densities model.

    Silverman KDEs are evaluated on a grid spanning the pooled range plus
    three of the largest bandwidths on each side. The Gram matrix of the
    centered densities (grid dot products scaled by the spacing) yields the
    top L eigenvectors, from which phi_j = C' u_j / sqrt(lambda_j) and
    theta_rj = sqrt(lambda_j) u_rj. ``L = 0`` gives the mean-only model.

    Args:
        ms: The multi-sample data
        L: Number of orthonormal functions
        grid_size: Number of grid points

    Returns:
        KuModel

    Raises:
        ValidationError: If L is negative or the grid has fewer than 2 points
        RankDeficiencyError: If L exceeds m or the numerical rank

    Example:
        ```python
        model = ku_fit(ms, L=2)
        model.densities.shape  # (m + 1, 512)
        ```
    """
    if L < 0:
        raise ValidationError(f"ku_fit: L must be nonnegative, got {L}")
    if grid_size < 2:
        raise ValidationError(f"ku_fit: grid needs at least 2 points, got {grid_size}")

    bandwidths = [silverman_bandwidth(s) for s in ms.samples]
    values = ms.values
    pad = 3.0 * max(bandwidths)
    grid = np.linspace(values.min() - pad, values.max() + pad, grid_size)
    spacing = float(grid[1] - grid[0])

    estimates = np.vstack([kde_fit(s, h)(grid) for s, h in zip(ms.samples, bandwidths)])
    mean_density = estimates.mean(axis=0)
    centered = estimates - mean_density
    gram = spacing * centered @ centered.T
    eig = eigensystem((gram + gram.T) / 2.0)

    if L > 0:
        top = eig.eigenvalues[0]
        if L > ms.m or not (top > 0 and eig.eigenvalues[L - 1] > ZERO_EIGENVALUE_RATIO * top):
            raise RankDeficiencyError(
                f"ku_fit: L={L} exceeds the numerical rank {min(eig.rank, ms.m)}",
                details={"L": L, "eigenvalues": eig.eigenvalues.tolist()},
            )
    lambdas = eig.eigenvalues[:L]
    vectors = eig.eigenvectors[:, :L]
    phi = (centered.T @ vectors / np.sqrt(lambdas)).T if L else np.zeros((0, grid_size))
    theta = vectors * np.sqrt(lambdas) if L else np.zeros((ms.m + 1, 0))
    return KuModel(
        grid=grid,
        spacing=spacing,
        mean_density=mean_density,
        phi=phi,
        theta=theta,
        densities=mean_density + theta @ phi,
        eigenvalues=eig.eigenvalues,
    )


def ku_quantile(model: KuModel, r: int, tau: float) -> float:
    """Quantile of a reconstructed density by the inf rule on the grid.

    The CDF is normalized by its total mass.

    Raises:
        DomainError: If tau is outside (0, 1)
        MassError: If the reconstructed density integrates to less than 0.99
    """
    check_level(tau)
    cdf = model.cdf_on_grid(r)
    mass = float(cdf[-1])
    if mass < 0.99:
        raise MassError(
            f"ku_quantile: population {r} has total mass {mass:.4f} < 0.99; "
            "try a smaller L or a wider grid",
            details={"population": r, "mass": mass},
        )
    index = int(np.searchsorted(cdf / mass, tau - 1e-12, side="left"))
    return float(model.grid[min(index, model.grid.size - 1)])


def np_densities(ms: MultiSample) -> List[KdeEstimate]:
    """Silverman kernel density estimate of each sample."""
    return [kde_fit(s, silverman_bandwidth(s)) for s in ms.samples]


def np_quantiles(ms: MultiSample, levels: Sequence[float]) -> np.ndarray:
    """(m+1) x len(levels) matrix of empirical quantiles."""
    return np.array([[empirical_quantile(s, tau) for tau in levels] for s in ms.samples])

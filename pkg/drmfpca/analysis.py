"""Main analysis entry point."""

from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .el_drm import BasisFunction, DrmFit, fit_drm
from .estimators import drm_density, drm_quantile, quantile_table
from .exceptions import ValidationError
from .fpca_basis import (
    AdaptiveBasis,
    DSelection,
    Eigensystem,
    LogRatioSet,
    MHat,
    build_basis,
    eigensystem,
    log_ratios,
    m_hat,
    select_d,
)
from .kde import (
    BandwidthPolicy,
    BandwidthSearch,
    KdeEstimate,
    ReferenceFamily,
    default_floor_constant,
    kde_fit,
    select_bandwidth,
    silverman_bandwidth,
)
from .multisample import MultiSample, PooledEmpirical, pool

AUTO = "auto"


class DensityRatioAnalysis:
    """Adaptive-basis density ratio analysis of a multi-sample.

    This is the primary entry point. Every stage of the pipeline (pooling,
    bandwidths, kernel estimates, log ratios, the M-hat operator, its
    eigensystem, the choice of d, the basis and the fit) is computed on
    first access and cached.

    Example:
        ```python
        from drmfpca import DensityRatioAnalysis, load_csv

        ms = load_csv("samples.csv")
        analysis = DensityRatioAnalysis(ms, bandwidth="adaptive", bw_family="gamma")

        print(analysis.d_selection.d)
        print(analysis.quantiles([0.1, 0.5, 0.9]))

        # Fixed dimension, same kernel estimates
        fit3 = analysis.fit_with(analysis.basis_with_d(3))
        ```
    """

    def __init__(
        self,
        ms: MultiSample,
        bandwidth: Union[BandwidthPolicy, str, float] = BandwidthPolicy.SILVERMAN,
        bw_family: Union[ReferenceFamily, str] = ReferenceFamily.NORMAL,
        k_grid: Optional[Sequence[float]] = None,
        floor: Union[None, str, float] = None,
        d: Union[str, int] = AUTO,
        threshold: float = 0.95,
        bic_candidates: Sequence[int] = (1, 2, 3, 4),
        threads: Optional[int] = None,
    ) -> None:
        """Initialize the analysis.

        Args:
            ms: The multi-sample data, at least two populations
            bandwidth: ``silverman``, ``adaptive``, or a positive number used
                as a fixed bandwidth for every population
            bw_family: Pilot family for the adaptive bandwidth search
            k_grid: Candidate scale factors for the adaptive search
            floor: None for no floor, ``auto`` for C_r = 0.1 (n_r h_r)^-1, or a
                positive constant shared by all populations
            d: ``auto`` to select the dimension, or a fixed integer
            threshold: Explained-variance threshold for automatic d
            bic_candidates: Dimensions tried by BIC for automatic d
            threads: Worker count for the parallel stages

        Raises:
            ValidationError: If an option is malformed or there is one population
        """
        if ms.m < 1:
            raise ValidationError("DensityRatioAnalysis needs at least two populations")
        self._ms = ms
        self._fixed_bandwidth: Optional[float] = None
        if isinstance(bandwidth, (int, float)) and not isinstance(bandwidth, bool):
            if not bandwidth > 0:
                raise ValidationError(f"Fixed bandwidth must be positive, got {bandwidth}")
            self._policy = BandwidthPolicy.FIXED
            self._fixed_bandwidth = float(bandwidth)
        else:
            try:
                self._policy = BandwidthPolicy(bandwidth)
            except ValueError:
                raise ValidationError(
                    f"Unknown bandwidth {bandwidth!r}; use silverman, adaptive or a number"
                )
            if self._policy is BandwidthPolicy.FIXED:
                raise ValidationError("A fixed bandwidth policy needs a numeric bandwidth")
        try:
            self._family = ReferenceFamily(bw_family)
        except ValueError:
            raise ValidationError(f"Unknown reference family {bw_family!r}; use normal or gamma")
        self._k_grid = k_grid
        if isinstance(floor, str) and floor != AUTO:
            raise ValidationError(f"floor must be None, 'auto' or a number, got {floor!r}")
        self._floor = floor
        if d != AUTO and not isinstance(d, int):
            raise ValidationError(f"d must be 'auto' or an integer, got {d!r}")
        self._d = d
        self._threshold = threshold
        self._bic_candidates = tuple(bic_candidates)
        self._threads = threads

        # Pipeline stages - lazily computed
        self._pooled: Optional[PooledEmpirical] = None
        self._bandwidth_search: Optional[BandwidthSearch] = None
        self._bandwidths: Optional[np.ndarray] = None
        self._kdes: Optional[List[KdeEstimate]] = None
        self._log_ratios: Optional[LogRatioSet] = None
        self._m_hat: Optional[MHat] = None
        self._eigensystem: Optional[Eigensystem] = None
        self._d_selection: Optional[DSelection] = None
        self._basis: Optional[AdaptiveBasis] = None
        self._fit: Optional[DrmFit] = None

    @property
    def samples(self) -> MultiSample:
        return self._ms

    @property
    def policy(self) -> BandwidthPolicy:
        return self._policy

    @property
    def pooled(self) -> PooledEmpirical:
        """Pooled empirical measure of all observations."""
        if self._pooled is None:
            self._pooled = pool(self._ms)
        return self._pooled

    @property
    def bandwidth_search(self) -> Optional[BandwidthSearch]:
        """Eigen-matching search record; None unless the policy is adaptive."""
        if self._policy is BandwidthPolicy.ADAPTIVE and self._bandwidth_search is None:
            self._bandwidth_search = select_bandwidth(
                self._ms, self._family, self._k_grid, self._threads, self.pooled
            )
        return self._bandwidth_search

    @property
    def bandwidths(self) -> np.ndarray:
        """Per-population kernel bandwidths under the chosen policy."""
        if self._bandwidths is None:
            if self._policy is BandwidthPolicy.FIXED:
                self._bandwidths = np.full(self._ms.m + 1, self._fixed_bandwidth)
            elif self._policy is BandwidthPolicy.ADAPTIVE:
                search = self.bandwidth_search
                assert search is not None
                self._bandwidths = search.bandwidths
            else:
                self._bandwidths = np.array(
                    [silverman_bandwidth(s) for s in self._ms.samples]
                )
        return self._bandwidths

    @property
    def kdes(self) -> List[KdeEstimate]:
        """Kernel density estimates, floored when a floor was requested."""
        if self._kdes is None:
            estimates = []
            for sample, h in zip(self._ms.samples, self.bandwidths):
                constant: Optional[float] = None
                if self._floor == AUTO:
                    constant = default_floor_constant(sample.size, float(h))
                elif self._floor is not None:
                    constant = float(self._floor)
                estimates.append(kde_fit(sample, float(h), constant, self._ms.total))
            self._kdes = estimates
        return self._kdes

    @property
    def log_ratios(self) -> LogRatioSet:
        if self._log_ratios is None:
            self._log_ratios = log_ratios(self.kdes, self.pooled)
        return self._log_ratios

    @property
    def m_hat(self) -> MHat:
        if self._m_hat is None:
            self._m_hat = m_hat(self.log_ratios, self.pooled)
        return self._m_hat

    @property
    def eigensystem(self) -> Eigensystem:
        if self._eigensystem is None:
            self._eigensystem = eigensystem(self.m_hat)
        return self._eigensystem

    @property
    def d_selection(self) -> Optional[DSelection]:
        """Record of the automatic choice of d; None when d was fixed."""
        if self._d == AUTO and self._d_selection is None:
            self._d_selection = select_d(
                self.log_ratios,
                self._ms,
                self._threshold,
                self._bic_candidates,
                self.eigensystem,
                self._threads,
            )
        return self._d_selection

    @property
    def d(self) -> int:
        if self._d == AUTO:
            selection = self.d_selection
            assert selection is not None
            return selection.d
        return int(self._d)

    @property
    def basis(self) -> AdaptiveBasis:
        """The adaptive basis at the configured (or selected) d."""
        if self._basis is None:
            self._basis = self.basis_with_d(self.d)
        return self._basis

    @property
    def fit(self) -> DrmFit:
        """Empirical likelihood fit under the adaptive basis."""
        if self._fit is None:
            self._fit = fit_drm(self._ms, self.basis)
        return self._fit

    def provenance(self) -> Dict[str, Any]:
        """How the basis was built, stored with serialized bases."""
        search = self._bandwidth_search
        selection = self._d_selection
        return {
            "bandwidth_policy": self._policy.value,
            "bandwidths": self.bandwidths.tolist(),
            "bw_family": self._family.value if search is not None else None,
            "k": search.chosen_k if search is not None else None,
            "floor": self._floor,
            "d_selection": selection.to_dict() if selection is not None else None,
        }

    def basis_with_d(self, d: int) -> AdaptiveBasis:
        """Adaptive basis with ``d`` eigenfunctions, reusing the cached stages."""
        return build_basis(self.log_ratios, self.eigensystem, d, self.provenance())

    def fit_with(self, basis: BasisFunction) -> DrmFit:
        """Empirical likelihood fit under any basis."""
        return fit_drm(self._ms, basis)

    def quantiles(self, levels: Sequence[float]) -> np.ndarray:
        """(m+1) x len(levels) quantile matrix from the adaptive fit."""
        return quantile_table(self.fit, levels)

    def quantile(self, r: int, tau: float) -> float:
        return drm_quantile(self.fit, r, tau)

    def density(self, r: int, x: Union[float, np.ndarray]) -> np.ndarray:
        """Smoothed density of population ``r`` from the adaptive fit."""
        return drm_density(self.fit, r, x)

"""Tests for the DensityRatioAnalysis facade."""

import numpy as np
import pytest
from pytest_mock import MockerFixture
from scipy.integrate import trapezoid

from drmfpca.analysis import DensityRatioAnalysis
from drmfpca.exceptions import ValidationError
from drmfpca.kde import (
    BandwidthPolicy,
    BandwidthSearch,
    ReferenceFamily,
    default_floor_constant,
    kde_floor_value,
    silverman_bandwidth,
)
from drmfpca.multisample import MultiSample


class TestDensityRatioAnalysisInit:
    """Test DensityRatioAnalysis initialization."""

    def test_defaults(self, normal_pair: MultiSample) -> None:
        """Test the default options."""
        analysis = DensityRatioAnalysis(normal_pair)
        assert analysis.policy is BandwidthPolicy.SILVERMAN
        assert analysis.samples is normal_pair
        # Nothing is computed until it is asked for
        assert analysis._pooled is None
        assert analysis._kdes is None
        assert analysis._eigensystem is None
        assert analysis._fit is None

    def test_numeric_bandwidth_is_fixed(self, normal_pair: MultiSample) -> None:
        """Test that a number selects the fixed policy."""
        analysis = DensityRatioAnalysis(normal_pair, bandwidth=0.4)
        assert analysis.policy is BandwidthPolicy.FIXED
        np.testing.assert_array_equal(analysis.bandwidths, [0.4, 0.4])

    def test_single_population_rejected(self) -> None:
        """Test that one population cannot be analysed."""
        ms = MultiSample.from_arrays([np.arange(10.0)])
        with pytest.raises(ValidationError):
            DensityRatioAnalysis(ms)

    @pytest.mark.parametrize(
        "options",
        [
            {"bandwidth": -1.0},
            {"bandwidth": "fixed"},
            {"bandwidth": "plugin"},
            {"bw_family": "cauchy"},
            {"floor": "high"},
            {"d": "two"},
        ],
    )
    def test_bad_options(self, normal_pair: MultiSample, options: dict) -> None:
        """Test that malformed options are refused."""
        with pytest.raises(ValidationError):
            DensityRatioAnalysis(normal_pair, **options)


class TestDensityRatioAnalysis:
    """Test the lazily computed pipeline."""

    def setup_method(self) -> None:
        """Set up a two-population mean shift."""
        rng = np.random.default_rng(7)
        self.ms = MultiSample.from_arrays(
            [rng.normal(0.0, 1.0, 600), rng.normal(1.0, 1.0, 600)]
        )
        self.analysis = DensityRatioAnalysis(self.ms)

    def test_kdes_lazy_initialization(self) -> None:
        """Test that kernel estimates are built once."""
        assert self.analysis._kdes is None
        kdes = self.analysis.kdes
        assert self.analysis._kdes is not None
        assert self.analysis.kdes is kdes

    def test_fit_lazy_initialization(self) -> None:
        """Test that the fit is built once, with every stage before it."""
        fit = self.analysis.fit
        assert self.analysis.fit is fit
        assert self.analysis._basis is not None
        assert self.analysis._d_selection is not None

    def test_silverman_bandwidths(self) -> None:
        """Test per-population Silverman bandwidths."""
        expected = [silverman_bandwidth(s) for s in self.ms.samples]
        np.testing.assert_allclose(self.analysis.bandwidths, expected)
        assert self.analysis.bandwidth_search is None

    def test_auto_d_for_two_populations(self) -> None:
        """Test that one log ratio gives a one-dimensional basis."""
        assert self.analysis.d == 1
        assert self.analysis.basis.d == 1
        assert self.analysis.fit.converged

    def test_quantiles_near_truth(self) -> None:
        """Test medians of a unit mean shift."""
        table = self.analysis.quantiles([0.5])
        assert table.shape == (2, 1)
        assert table[0, 0] == pytest.approx(0.0, abs=0.15)
        assert table[1, 0] == pytest.approx(1.0, abs=0.15)
        assert self.analysis.quantile(1, 0.5) == table[1, 0]

    def test_density_integrates_to_one(self) -> None:
        """Test the smoothed density of population 1."""
        grid = np.linspace(-6.0, 7.0, 2001)
        mass = trapezoid(self.analysis.density(1, grid), grid)
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_provenance(self) -> None:
        """Test the recorded construction choices."""
        provenance = self.analysis.provenance()
        assert provenance["bandwidth_policy"] == "silverman"
        assert provenance["k"] is None
        assert len(provenance["bandwidths"]) == 2


class TestAnalysisOptions:
    """Test bandwidth, floor and dimension options."""

    def test_fixed_d_skips_selection(self, four_normals: MultiSample) -> None:
        """Test that a fixed d is used as given."""
        analysis = DensityRatioAnalysis(four_normals, d=2)
        assert analysis.d_selection is None
        assert analysis.basis.d == 2
        assert analysis.provenance()["d_selection"] is None

    def test_basis_with_d_reuses_stages(self, four_normals: MultiSample) -> None:
        """Test alternative dimensions on the same eigensystem."""
        analysis = DensityRatioAnalysis(four_normals, d=1)
        eig = analysis.eigensystem
        basis = analysis.basis_with_d(3)
        assert basis.d == 3
        assert analysis.eigensystem is eig
        fit = analysis.fit_with(basis)
        assert fit.params.d == 3

    def test_auto_floor(self, four_normals: MultiSample) -> None:
        """Test the default floor constant 0.1 (n h)^-1 with the pooled size."""
        analysis = DensityRatioAnalysis(four_normals, floor="auto")
        for kde, h in zip(analysis.kdes, analysis.bandwidths):
            expected = kde_floor_value(default_floor_constant(300, float(h)), 1200)
            assert kde.floor == pytest.approx(expected)

    def test_constant_floor(self, four_normals: MultiSample) -> None:
        """Test a floor constant shared by all populations."""
        analysis = DensityRatioAnalysis(four_normals, floor=0.05)
        assert {kde.floor for kde in analysis.kdes} == {kde_floor_value(0.05, 1200)}

    def test_adaptive_uses_search(
        self, four_normals: MultiSample, mocker: MockerFixture
    ) -> None:
        """Test that the adaptive policy takes bandwidths from the search."""
        search = BandwidthSearch(
            k_grid=np.array([0.5, 1.0]),
            family=ReferenceFamily.GAMMA,
            objective=np.array([0.2, 0.1]),
            chosen_k=1.0,
            bandwidths=np.array([0.3, 0.31, 0.32, 0.33]),
        )
        mock_select = mocker.patch(
            "drmfpca.analysis.select_bandwidth", return_value=search
        )
        analysis = DensityRatioAnalysis(
            four_normals, bandwidth="adaptive", bw_family="gamma", k_grid=[0.5, 1.0]
        )

        np.testing.assert_array_equal(analysis.bandwidths, search.bandwidths)
        assert analysis.bandwidth_search is search
        mock_select.assert_called_once()
        assert mock_select.call_args.args[1] is ReferenceFamily.GAMMA
        provenance = analysis.provenance()
        assert provenance["k"] == 1.0
        assert provenance["bw_family"] == "gamma"

    def test_adaptive_end_to_end(self, four_normals: MultiSample) -> None:
        """Test the adaptive policy with a short grid."""
        analysis = DensityRatioAnalysis(
            four_normals, bandwidth="adaptive", k_grid=[0.8, 1.0, 1.2], d=2
        )
        assert analysis.bandwidth_search is not None
        assert analysis.bandwidth_search.chosen_k in (0.8, 1.0, 1.2)
        assert analysis.fit.converged

"""Tests for the Kneip-Utikal and per-sample baselines."""

import numpy as np
import pytest

from drmfpca.baselines import ku_fit, ku_quantile, np_densities, np_quantiles
from drmfpca.exceptions import DomainError, MassError, RankDeficiencyError, ValidationError
from drmfpca.kde import kde_fit, silverman_bandwidth
from drmfpca.multisample import MultiSample

from .conftest import normal_samples


class TestKuFit:
    """Test the FPCA-of-densities model."""

    def test_single_population_is_rank_deficient(self) -> None:
        """Test that one density has no deviation from the mean."""
        ms = MultiSample.from_arrays([np.random.default_rng(0).normal(size=100)])
        with pytest.raises(RankDeficiencyError):
            ku_fit(ms, 1)

    def test_mean_only_model(self) -> None:
        """Test that L = 0 reproduces the KDE of a single sample."""
        sample = np.random.default_rng(1).normal(size=300)
        model = ku_fit(MultiSample.from_arrays([sample]), 0)
        kde = kde_fit(sample, silverman_bandwidth(sample))
        np.testing.assert_allclose(model.densities[0], kde(model.grid), atol=1e-12)
        assert model.L == 0

    def test_identical_samples(self) -> None:
        """Test that identical samples leave nothing to decompose."""
        sample = np.random.default_rng(2).normal(size=100)
        with pytest.raises(RankDeficiencyError):
            ku_fit(MultiSample.from_arrays([sample, sample]), 1)

    def test_negative_components_rejected(self, normal_pair: MultiSample) -> None:
        """Test the sign of L."""
        with pytest.raises(ValidationError):
            ku_fit(normal_pair, -1)

    def test_gram_route_matches_grid_pca(self, four_normals: MultiSample) -> None:
        """Test reconstructions against a direct PCA of the centered density matrix."""
        model = ku_fit(four_normals, 2, grid_size=256)
        estimates = np.vstack(
            [kde_fit(s, silverman_bandwidth(s))(model.grid) for s in four_normals.samples]
        )
        centered = estimates - estimates.mean(axis=0)
        scaled = np.sqrt(model.spacing) * centered
        _, _, vt = np.linalg.svd(scaled, full_matrices=False)
        directions = vt[:2]
        reconstruction = estimates.mean(axis=0) + scaled @ directions.T @ directions / np.sqrt(
            model.spacing
        )
        np.testing.assert_allclose(model.densities, reconstruction, atol=1e-10)

    def test_parseval(self, four_normals: MultiSample) -> None:
        """Test that the discarded energy equals the discarded eigenvalues."""
        model = ku_fit(four_normals, 2, grid_size=256)
        centered = np.vstack(
            [kde_fit(s, silverman_bandwidth(s))(model.grid) for s in four_normals.samples]
        ) - model.mean_density
        residual = centered - model.theta @ model.phi
        energy = model.spacing * float(np.sum(residual ** 2))
        assert energy == pytest.approx(float(np.sum(model.eigenvalues[2:])), abs=1e-8)
        assert np.all(np.diff(model.eigenvalues) <= 1e-15)

    def test_grid_orthonormal_functions(self, four_normals: MultiSample) -> None:
        """Test that phi is orthonormal under the grid inner product."""
        model = ku_fit(four_normals, 3)
        gram = model.spacing * model.phi @ model.phi.T
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-8)

    def test_density_off_grid(self, normal_pair: MultiSample) -> None:
        """Test interpolation inside the grid and zero outside."""
        model = ku_fit(normal_pair, 1)
        assert model.density(0, model.grid[[0, 10]]).tolist() == pytest.approx(
            model.densities[0, [0, 10]].tolist()
        )
        assert model.density(0, np.array([model.grid[-1] + 1.0]))[0] == 0.0


class TestKuQuantile:
    """Test quantiles of reconstructed densities."""

    def test_median_of_normal(self) -> None:
        """Test the mean-only model on N(0,1) data."""
        sample = np.random.default_rng(3).normal(size=2000)
        model = ku_fit(MultiSample.from_arrays([sample]), 0)
        assert abs(ku_quantile(model, 0, 0.5)) < 0.05

    def test_tiny_level_hits_lower_edge(self, normal_pair: MultiSample) -> None:
        """Test that tau near 0 returns the grid's lower edge."""
        model = ku_fit(normal_pair, 1)
        assert ku_quantile(model, 1, 1e-14) == model.grid[0]

    def test_monotone(self, four_normals: MultiSample) -> None:
        """Test monotonicity in tau."""
        model = ku_fit(four_normals, 2)
        values = [ku_quantile(model, 2, tau) for tau in np.linspace(0.02, 0.98, 30)]
        assert np.all(np.diff(values) >= 0)

    def test_domain(self, normal_pair: MultiSample) -> None:
        """Test the domain of tau."""
        with pytest.raises(DomainError):
            ku_quantile(ku_fit(normal_pair, 1), 0, 1.0)

    def test_mass_check(self, normal_pair: MultiSample) -> None:
        """Test that a density with lost mass is refused."""
        model = ku_fit(normal_pair, 1)
        halved = model.densities.copy()
        halved[0] *= 0.5
        broken = type(model)(
            grid=model.grid,
            spacing=model.spacing,
            mean_density=model.mean_density,
            phi=model.phi,
            theta=model.theta,
            densities=halved,
            eigenvalues=model.eigenvalues,
        )
        with pytest.raises(MassError):
            ku_quantile(broken, 0, 0.5)


class TestNonparametric:
    """Test the per-sample baseline."""

    def test_np_quantiles(self) -> None:
        """Test the matrix of empirical quantiles."""
        ms = MultiSample.from_arrays([[1, 2, 3, 4, 5], [1, 2, 3, 4]])
        np.testing.assert_array_equal(np_quantiles(ms, [0.5]), [[3.0], [2.0]])

    def test_np_densities(self) -> None:
        """Test Silverman KDEs per sample."""
        ms = normal_samples((0.0, 2.0), (1.0, 0.5), 100)
        kdes = np_densities(ms)
        assert [k.bandwidth for k in kdes] == [silverman_bandwidth(s) for s in ms.samples]

"""Tests for empirical likelihood fitting."""

import math
from typing import Tuple

import numpy as np
import pytest

from drmfpca.el_drm import (
    DrmFit,
    DrmParams,
    fit_drm,
    fitted_cdf,
    profile_grad,
    profile_loglik,
)
from drmfpca.exceptions import NumericError, ValidationError
from drmfpca.fixed_basis import FixedBasis
from drmfpca.multisample import MultiSample

from .conftest import normal_samples


def _random_problem(seed: int) -> Tuple[np.ndarray, np.ndarray, np.random.Generator]:
    rng = np.random.default_rng(seed)
    counts = rng.integers(8, 20, size=3)
    basis_values = rng.normal(size=(int(counts.sum()), 2))
    return basis_values, counts, rng


def _certify(fit: DrmFit) -> None:
    assert fit.converged
    assert fit.constraint_residual < 1e-8
    assert fit.gradient_norm < 1e-8
    assert np.all((fit.weights > 0) & (fit.weights < 1))
    assert fit.weights.sum() == pytest.approx(1.0, abs=1e-12)


class TestDrmParams:
    """Test the parameter container."""

    def test_vector_layout(self) -> None:
        """Test per-population (alpha, beta) blocks."""
        params = DrmParams(alpha=np.array([1.0, 2.0]), beta=np.array([[3.0], [4.0]]))
        assert params.to_vector().tolist() == [1.0, 3.0, 2.0, 4.0]
        again = DrmParams.from_vector(params.to_vector(), m=2, d=1)
        np.testing.assert_array_equal(again.beta, params.beta)

    def test_coefficient_matrix_has_zero_base(self) -> None:
        """Test that population 0 carries no parameters."""
        matrix = DrmParams.zeros(2, 3).coefficient_matrix()
        assert matrix.shape == (3, 4)
        assert np.all(matrix == 0.0)

    def test_shape_mismatch(self) -> None:
        """Test that beta rows must match alpha."""
        with pytest.raises(ValidationError):
            DrmParams(alpha=np.zeros(2), beta=np.zeros((3, 1)))

    def test_nonfinite_rejected(self) -> None:
        """Test that parameters must be finite."""
        with pytest.raises(ValidationError):
            DrmParams(alpha=np.array([np.nan]), beta=np.zeros((1, 1)))


class TestProfileLoglik:
    """Test the profile objective and its gradient."""

    def test_uniform_weights(self) -> None:
        """Test -N log N at zero parameters with n = (2, 2)."""
        value = profile_loglik(DrmParams.zeros(1, 1), np.zeros((4, 1)), [2, 2])
        assert value == pytest.approx(-4 * math.log(4))
        assert value == pytest.approx(-5.545177, abs=1e-6)

    def test_single_population(self) -> None:
        """Test that m = 0 has no free parameters."""
        value = profile_loglik(DrmParams.zeros(0, 1), np.arange(5.0)[:, None], [5])
        assert value == pytest.approx(-5 * math.log(5))

    def test_gradient_vanishes_at_null(self) -> None:
        """Test exact cancellation in the alpha entries at zero parameters."""
        basis_values = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        grad = profile_grad(DrmParams.zeros(1, 1), basis_values, [2, 2])
        assert grad[0] == pytest.approx(0.0, abs=1e-12)
        assert grad[1] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed: int) -> None:
        """Test the analytic gradient against central differences."""
        basis_values, counts, rng = _random_problem(seed)
        m, d = counts.size - 1, basis_values.shape[1]
        step = 1e-5
        for _ in range(20):
            theta = rng.normal(scale=0.5, size=m * (d + 1))
            analytic = profile_grad(DrmParams.from_vector(theta, m, d), basis_values, counts)
            numeric = np.empty_like(theta)
            for k in range(theta.size):
                bump = np.zeros_like(theta)
                bump[k] = step
                upper = profile_loglik(DrmParams.from_vector(theta + bump, m, d), basis_values, counts)
                lower = profile_loglik(DrmParams.from_vector(theta - bump, m, d), basis_values, counts)
                numeric[k] = (upper - lower) / (2 * step)
            error = np.linalg.norm(numeric - analytic) / max(np.linalg.norm(analytic), 1.0)
            assert error < 1e-6

    def test_concave_along_segments(self) -> None:
        """Test that midpoints never fall below the chord."""
        basis_values, counts, rng = _random_problem(11)
        m, d = counts.size - 1, basis_values.shape[1]
        for _ in range(100):
            a, b = rng.normal(size=(2, m * (d + 1)))
            values = [
                profile_loglik(DrmParams.from_vector(t, m, d), basis_values, counts)
                for t in (a, b, (a + b) / 2)
            ]
            assert values[2] >= (values[0] + values[1]) / 2 - 1e-10

    def test_row_mismatch(self) -> None:
        """Test that basis rows must match the sample sizes."""
        with pytest.raises(ValidationError):
            profile_loglik(DrmParams.zeros(1, 1), np.zeros((3, 1)), [2, 2])


class TestFitDrm:
    """Test the Newton fit."""

    def test_mean_shift_recovered(self) -> None:
        """Test alpha near -0.5 and beta near 1 for N(0,1) against N(1,1)."""
        ms = normal_samples((0.0, 1.0), (1.0, 1.0), 5000, seed=7)
        fit = fit_drm(ms, FixedBasis(("x",)))
        _certify(fit)
        assert fit.params.alpha[0] == pytest.approx(-0.5, abs=0.1)
        assert fit.params.beta[0, 0] == pytest.approx(1.0, abs=0.1)

    def test_null_model(self) -> None:
        """Test that identical distributions give parameters near zero."""
        ms = normal_samples((0.0, 0.0), (1.0, 1.0), 1000, seed=8)
        fit = fit_drm(ms, FixedBasis(("x",)))
        _certify(fit)
        assert abs(fit.params.alpha[0]) < 0.3
        assert abs(fit.params.beta[0, 0]) < 0.3

    def test_gradient_at_optimum(self, four_normals: MultiSample) -> None:
        """Test stationarity of the returned parameters in original coordinates."""
        fit = fit_drm(four_normals, FixedBasis(("x", "x2")))
        _certify(fit)
        grad = profile_grad(fit.params, fit.basis_values, fit.counts)
        assert np.max(np.abs(grad)) < 1e-6
        np.testing.assert_allclose(fit.tilts.sum(axis=0), 1.0, atol=1e-8)

    def test_single_population(self) -> None:
        """Test the m = 0 reduction to uniform weights."""
        ms = MultiSample.from_arrays([[1.0, 2.0, 3.0, 4.0]])
        fit = fit_drm(ms, None)
        np.testing.assert_allclose(fit.weights, 0.25)
        assert fit.loglik == pytest.approx(-4 * math.log(4))
        assert fit.params.alpha.size == 0
        assert fitted_cdf(fit, 0, 2.5) == pytest.approx(0.5)

    def test_cdf_limits(self, four_normals: MultiSample) -> None:
        """Test the fitted distribution functions at the extremes."""
        fit = fit_drm(four_normals, FixedBasis(("x",)))
        low, high = four_normals.values.min(), four_normals.values.max()
        for r in range(4):
            assert fitted_cdf(fit, r, low - 1.0) == 0.0
            assert fitted_cdf(fit, r, high + 1.0) == pytest.approx(1.0, abs=1e-8)
            grid = np.linspace(low, high, 50)
            assert np.all(np.diff(fit.cdf(r, grid)) >= 0)

    def test_affine_basis_invariance(self, four_normals: MultiSample) -> None:
        """Test that an affine change of basis leaves the fit unchanged."""
        basis = FixedBasis(("x", "x2"))
        first = fit_drm(four_normals, basis)
        second = fit_drm(four_normals, lambda x: 3.0 * basis(x) - 2.0)
        assert second.loglik == pytest.approx(first.loglik, abs=1e-8)
        np.testing.assert_allclose(second.weights, first.weights, atol=1e-8)
        np.testing.assert_allclose(second.tilts, first.tilts, atol=1e-8)

    def test_constant_column(self, normal_pair: MultiSample) -> None:
        """Test that a constant basis coordinate is rejected."""
        with pytest.raises(NumericError, match="constant"):
            fit_drm(normal_pair, lambda x: np.column_stack([x, np.ones_like(x)]))

    def test_basis_required(self, normal_pair: MultiSample) -> None:
        """Test that two populations need a basis."""
        with pytest.raises(ValidationError):
            fit_drm(normal_pair, None)

    def test_to_dict(self, normal_pair: MultiSample) -> None:
        """Test the serialized summary."""
        data = fit_drm(normal_pair, FixedBasis(("x",))).to_dict()
        assert data["schema_version"] == 1
        assert data["converged"] is True
        assert len(data["beta"]) == 1

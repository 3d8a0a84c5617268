"""scikit-learn style wrappers."""

import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from manifold_ns.estimators import GalerkinNavierStokes, SpectralBasis
from manifold_ns.exceptions import ConfigurationError
from manifold_ns.spectrum import ManifoldConfig, build_spectrum


@pytest.mark.parametrize("kind,cutoff", [("sphere", 6.0), ("torus", 15.0)])
def test_spectral_basis_round_trip(kind, cutoff):
    est = SpectralBasis(kind, cutoff).fit()
    rng = np.random.default_rng(0)
    C = rng.standard_normal((3, est.table_.n_modes))
    grid = est.inverse_transform(C)
    assert grid.shape == (3, est.n_features_in_)
    np.testing.assert_allclose(est.transform(grid), C, atol=1e-12)
    np.testing.assert_allclose(est.fit_transform(grid), C, atol=1e-12)


def test_spectral_basis_single_sample():
    est = SpectralBasis("sphere", 4.0).fit()
    c = np.zeros(est.table_.n_modes)
    c[0] = 1.0
    grid = est.inverse_transform(c)
    np.testing.assert_allclose(grid, 1 / math.sqrt(4 * math.pi), atol=1e-14)
    np.testing.assert_allclose(est.transform(grid[0]), c[None, :], atol=1e-13)


def test_spectral_basis_validation():
    with pytest.raises(NotFittedError):
        SpectralBasis().transform(np.zeros((1, 4)))
    est = SpectralBasis("torus", 10.0).fit()
    with pytest.raises(ConfigurationError):
        est.transform(np.zeros((1, 3)))
    with pytest.raises(ConfigurationError):
        est.inverse_transform(np.zeros((1, 2)))


def test_spectral_basis_params():
    est = SpectralBasis("torus", 12.0, degree=20)
    assert est.get_params() == {"kind": "torus", "cutoff": 12.0, "degree": 20}
    assert clone(est).get_params() == est.get_params()


def test_galerkin_exact_decay():
    model = GalerkinNavierStokes("torus", 10.0, nu=0.05, dt=1e-2, T_end=0.2)
    table = build_spectrum(ManifoldConfig("torus", 10.0))
    w0 = np.zeros(table.n_modes)
    w0[1] = 1.0
    model.fit(w0)
    s_sq = table.eigenvalues_sq[1]
    np.testing.assert_allclose(model.state_.omega.coeffs[1], math.exp(-0.05 * s_sq * 0.2), rtol=1e-12)
    t, energy = model.energy_curve()
    assert t[0] == 0.0 and t[-1] == pytest.approx(0.2)
    np.testing.assert_allclose(energy, energy[0] * np.exp(-2 * 0.05 * s_sq * t), rtol=1e-12)
    np.testing.assert_allclose(model.predict(w0), model.state_.omega.coeffs, rtol=0, atol=0)


def test_galerkin_variant_switch_reuses_tensors():
    table = build_spectrum(ManifoldConfig("sphere", 3.0))
    w0 = np.zeros(table.n_modes)
    w0[1] = 1.0  # an l = 1 mode
    model = GalerkinNavierStokes("sphere", 3.0, "hodge", nu=0.1, dt=1e-2, T_end=0.1).fit(w0)
    triads = model.triads_
    np.testing.assert_allclose(model.state_.omega.coeffs[1], math.exp(-0.1 * 2 * 0.1), rtol=1e-12)
    model.set_params(laplacian_variant="deformation")
    # Killing field: the deformation Laplacian annihilates l = 1 rotations
    np.testing.assert_allclose(model.predict(w0)[1], 1.0, rtol=1e-12)
    assert model.triads_.product_values is triads.product_values


def test_galerkin_not_fitted_and_bad_input():
    model = GalerkinNavierStokes("torus", 10.0)
    with pytest.raises(NotFittedError):
        model.predict(np.zeros(5))
    with pytest.raises(NotFittedError):
        model.energy_curve()
    with pytest.raises(ConfigurationError):
        model.fit(np.zeros(3))

"""scikit-learn style wrappers.

:class:`SpectralBasis` is a transformer between grid samples and mode
coefficients; :class:`GalerkinNavierStokes` fits (integrates) the Galerkin
system from an initial vorticity and exposes the trajectory.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_coefficients
from .exceptions import ConfigurationError
from .operators import SpectralField
from .spectrum import ManifoldConfig, build_spectrum, build_triads, make_basis


class SpectralBasis(TransformerMixin, BaseEstimator):
    """Project grid samples onto the retained eigenmodes.

    Parameters
    ----------
    kind : {"torus", "sphere"}
    cutoff : float
    degree : int, optional
        Quadrature degree of the grid; defaults to ``3 lmax + 2``.

    Attributes
    ----------
    table_ : SpectrumTable
    basis_ : SphereBasis or TorusBasis
    n_features_in_ : int
        Number of grid points.
    """

    def __init__(self, kind="sphere", cutoff=10.0, degree=None):
        self.kind = kind
        self.cutoff = cutoff
        self.degree = degree

    def fit(self, X=None, y=None):
        self.table_ = build_spectrum(ManifoldConfig(self.kind, self.cutoff))
        self.basis_ = make_basis(self.table_, self.degree)
        self.n_features_in_ = self.basis_.weights.shape[0]
        return self

    def _check_grid(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ConfigurationError(
                f"expected samples of {self.n_features_in_} grid values, got shape {X.shape}"
            )
        return X

    def transform(self, X):
        """Grid values ``(n_samples, n_grid)`` to coefficients ``(n_samples, n_modes)``."""
        check_is_fitted(self, "basis_")
        return self.basis_.analyze(self._check_grid(X))

    def inverse_transform(self, C):
        """Coefficients ``(n_samples, n_modes)`` to grid values."""
        check_is_fitted(self, "basis_")
        C = np.atleast_2d(np.asarray(C, dtype=np.float64))
        if C.shape[1] != self.table_.n_modes:
            raise ConfigurationError(f"expected {self.table_.n_modes} coefficients, got {C.shape[1]}")
        return self.basis_.values(C)


class GalerkinNavierStokes(BaseEstimator):
    """Truncated Navier-Stokes flow as an estimator.

    ``fit(omega0, harmonic0)`` integrates from the given vorticity
    coefficients; ``predict(omega0)`` returns the final coefficients of a
    fresh integration with the fitted tensors.

    Attributes
    ----------
    table_, triads_ : spectrum objects built on the first fit
    trajectory_ : list of MonitorRecord
    state_ : GalerkinState
        Final state of the last fit.
    """

    def __init__(self, kind="torus", cutoff=20.0, laplacian_variant="hodge", nu=0.01, dt=1e-3,
                 T_end=0.1, scheme="integrating_factor_rk4", monitor_every=1):
        self.kind = kind
        self.cutoff = cutoff
        self.laplacian_variant = laplacian_variant
        self.nu = nu
        self.dt = dt
        self.T_end = T_end
        self.scheme = scheme
        self.monitor_every = monitor_every

    def _run_config(self):
        from .dynamics import RunConfig

        manifold = ManifoldConfig(self.kind, self.cutoff, self.laplacian_variant)
        return RunConfig(manifold, self.nu, self.dt, self.T_end, self.scheme, self.monitor_every)

    def _tensors(self, rc):
        sig = (self.kind, self.cutoff)
        if getattr(self, "_tensor_sig", None) != sig:
            table = build_spectrum(rc.manifold)
            self.table_ = table
            self.triads_ = build_triads(table)
            self._tensor_sig = sig
        elif self.table_.config != rc.manifold:
            # variant changes the viscous symbol only; reuse the tensors
            from .spectrum.table import SpectrumTable

            t = self.table_
            self.table_ = SpectrumTable(rc.manifold, t.eigenvalues_sq, t.labels, t.shell_index)
            self.triads_ = type(self.triads_)(
                self.table_, self.triads_.product_index, self.triads_.product_values,
                self.triads_.advection_index, self.triads_.advection_values,
                self.triads_.harmonic_advection, self.triads_.degree,
            )
        return self.table_, self.triads_

    def _state(self, table, omega0, harmonic0):
        from .dynamics import GalerkinState

        omega0 = check_coefficients(omega0, table.n_modes, "omega0")
        return GalerkinState(0.0, SpectralField(omega0, table), harmonic0)

    def fit(self, omega0, harmonic0=None):
        from .dynamics import run

        rc = self._run_config()
        table, triads = self._tensors(rc)
        self.trajectory_, self.state_ = run(rc, self._state(table, omega0, harmonic0), triads)
        return self

    def predict(self, omega0, harmonic0=None):
        from .dynamics import run

        check_is_fitted(self, "triads_")
        rc = self._run_config()
        table, triads = self._tensors(rc)
        _, final = run(rc, self._state(table, omega0, harmonic0), triads)
        return final.omega.coeffs.copy()

    def energy_curve(self):
        """``(t, energy)`` arrays of the fitted trajectory."""
        check_is_fitted(self, "trajectory_")
        return (np.array([r.t for r in self.trajectory_]), np.array([r.energy for r in self.trajectory_]))

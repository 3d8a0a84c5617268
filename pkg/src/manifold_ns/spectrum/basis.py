"""Pointwise evaluation of eigenmodes on exact quadrature grids.

Both backends expose the same surface: synthesis of values, gradients and
Hessians in an orthonormal frame ``(a, b)`` (``(x, y)`` on the torus,
``(theta, phi)`` on the sphere), quadrature integration, and analysis
(projection of grid data back onto the modes). Coefficient arrays may carry
leading batch dimensions; the mode axis is always last.
"""

import math

import numpy as np

from ..exceptions import ConfigurationError
from .table import COS, SIN


def default_degree(table):
    """Quadrature degree exact for triple products of retained modes."""
    return 3 * table.lmax + 2


def make_basis(table, degree=None):
    """Return the grid basis for ``table`` exact up to polynomial ``degree``."""
    if degree is None:
        degree = default_degree(table)
    degree = int(degree)
    if degree < 2 * table.lmax:
        raise ConfigurationError(
            f"quadrature degree {degree} cannot resolve products of degree-{table.lmax} modes"
        )
    if table.kind == "sphere":
        return SphereBasis(table, degree)
    return TorusBasis(table, degree)


class _Basis:
    def integrate(self, grid_values):
        """Integral over the manifold of grid data (last axis = grid)."""
        return np.asarray(grid_values) @ self.weights

    def inner(self, f, g):
        return self.integrate(f * g)

    def jacobian(self, psi, omega):
        """Grid values of J(psi, omega) = <curl psi, grad omega>.

        With curl psi = -(*d psi)^sharp = (psi_b, -psi_a) in the oriented
        orthonormal frame, J(psi, omega) = psi_b omega_a - psi_a omega_b.
        """
        pa, pb = self.gradient(psi)
        oa, ob = self.gradient(omega)
        return pb * oa - pa * ob

    def curl(self, psi):
        """Frame components of curl psi."""
        pa, pb = self.gradient(psi)
        return pb, -pa


class SphereBasis(_Basis):
    """Real spherical harmonics on a Gauss-Legendre x uniform-longitude grid.

    The grid integrates spherical polynomials of degree ``<= degree``
    exactly. Mode ``(l, m)`` is ``Pbar_l^|m|(cos theta)`` times ``1``,
    ``sqrt(2) cos(m phi)`` or ``sqrt(2) sin(|m| phi)`` for ``m`` zero,
    positive or negative, where ``2 pi int Pbar^2 dx = 1``.
    """

    def __init__(self, table, degree):
        self.table = table
        self.degree = degree
        L = table.lmax
        self.lmax = L
        n_lat = degree // 2 + 1
        n_lon = degree + 1
        x, w = np.polynomial.legendre.leggauss(n_lat)
        self.x = x
        self.theta = np.arccos(x)
        self.sin_theta = np.sqrt(1.0 - x * x)
        self.phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
        self.n_lat, self.n_lon = n_lat, n_lon
        self.shape = (n_lat, n_lon)
        self.weights = np.repeat(w * (2.0 * np.pi / n_lon), n_lon)

        P, dP = legendre_table(L, x)
        s = self.sin_theta
        self._P = P
        self._dP = dP
        self._P_over_s = P / s
        m = np.arange(L + 1)[:, None, None]
        ll = np.arange(L + 1)[None, :, None]
        cot = (x / s)[None, None, :]
        # Legendre ODE in theta gives the second derivative.
        self._d2P = -cot * dP - (ll * (ll + 1) - m**2 / s**2) * P
        self._dP_over_s_minus = dP / s - (x / s**2) * P
        self._P_over_s2 = P / s**2
        self._cotdP = cot * dP

        mm = np.arange(L + 1)
        self._m = mm
        self._norm = np.where(mm == 0, 1.0, math.sqrt(2.0))
        ang = np.outer(mm, self.phi)
        self._cos = np.cos(ang)
        self._sin = np.sin(ang)

        labels = table.labels
        lm = np.full((L + 1, L + 1), table.n_modes, dtype=np.int64)
        ls = np.full((L + 1, L + 1), table.n_modes, dtype=np.int64)
        for i, (l, mo) in enumerate(labels):
            if mo >= 0:
                lm[mo, l] = i
            else:
                ls[-mo, l] = i
        self._idx_cos = lm
        self._idx_sin = ls

    # ------------------------------------------------------------------
    def _split(self, coeffs):
        c = np.asarray(coeffs, dtype=np.float64)
        pad = np.concatenate([c, np.zeros(c.shape[:-1] + (1,))], axis=-1)
        C = pad[..., self._idx_cos] * self._norm[:, None]
        S = pad[..., self._idx_sin] * self._norm[:, None]
        return C, S

    def _assemble(self, A, B):
        # A, B: (..., m, x) -> (..., x * phi)
        grid = np.einsum("...mx,mp->...xp", A, self._cos) + np.einsum(
            "...mx,mp->...xp", B, self._sin
        )
        return grid.reshape(grid.shape[:-2] + (-1,))

    def _synth(self, coeffs, radial, dphi_order=0):
        C, S = self._split(coeffs)
        A = np.einsum("...ml,mlx->...mx", C, radial)
        B = np.einsum("...ml,mlx->...mx", S, radial)
        m = self._m[:, None]
        if dphi_order == 0:
            return self._assemble(A, B)
        if dphi_order == 1:
            # d/dphi: cos -> -m sin, sin -> m cos
            return self._assemble(m * B, -m * A)
        # second derivative: -m^2
        return self._assemble(-(m**2) * A, -(m**2) * B)

    def values(self, coeffs):
        return self._synth(coeffs, self._P)

    def gradient(self, coeffs):
        return self._synth(coeffs, self._dP), self._synth(coeffs, self._P_over_s, 1)

    def hessian(self, coeffs):
        """Covariant Hessian components ``(H_aa, H_ab, H_bb)`` in the frame."""
        haa = self._synth(coeffs, self._d2P)
        hab = self._synth(coeffs, self._dP_over_s_minus, 1)
        hbb = self._synth(coeffs, self._P_over_s2, 2) + self._synth(coeffs, self._cotdP)
        return haa, hab, hbb

    def analyze(self, grid_values):
        """Quadrature projection of grid data onto every retained mode."""
        g = np.asarray(grid_values, dtype=np.float64)
        g = g.reshape(g.shape[:-1] + self.shape)
        dphi = 2.0 * np.pi / self.n_lon
        w = self.weights.reshape(self.shape)[:, 0] / dphi
        Fc = np.einsum("...xp,mp->...mx", g, self._cos) * dphi
        Fs = np.einsum("...xp,mp->...mx", g, self._sin) * dphi
        Cc = np.einsum("...mx,mlx,x->...ml", Fc, self._P, w) * self._norm[:, None]
        Cs = np.einsum("...mx,mlx,x->...ml", Fs, self._P, w) * self._norm[:, None]
        out = np.zeros(g.shape[:-2] + (self.table.n_modes + 1,))
        out[..., self._idx_cos] = Cc
        out[..., self._idx_sin[1:]] = Cs[..., 1:, :]
        return out[..., :-1]


def legendre_table(lmax, x):
    """Normalised associated Legendre functions and their theta derivatives.

    Returns ``P[m, l, i]`` and ``dP[m, l, i] = d/dtheta P`` evaluated at
    ``x[i] = cos(theta_i)`` (interior points only), zero for ``l < m``.
    Normalisation: ``2 pi int_{-1}^{1} P[m, l]^2 dx = 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.sqrt(1.0 - x * x)
    L = lmax
    P = np.zeros((L + 1, L + 1, x.size))
    P[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, L + 1):
        P[m, m] = math.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, L):
        P[m, m + 1] = math.sqrt(2 * m + 3) * x * P[m, m]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            P[m, l] = a * (x * P[m, l - 1] - b * P[m, l - 2])
    dP = np.zeros_like(P)
    for m in range(0, L + 1):
        for l in range(m, L + 1):
            term = l * x * P[m, l]
            if l > m:
                term = term - math.sqrt((2 * l + 1) / (2 * l - 1) * (l * l - m * m)) * P[m, l - 1]
            dP[m, l] = term / s
    return P, dP


class TorusBasis(_Basis):
    """cos/sin Fourier modes on the unit square with a uniform grid.

    A uniform ``N x N`` grid integrates trigonometric polynomials of
    degree ``< N`` exactly; ``N = degree + 1``.
    """

    def __init__(self, table, degree):
        self.table = table
        self.degree = degree
        N = degree + 1
        self.n_side = N
        self.shape = (N, N)
        g = np.arange(N) / N
        X, Y = np.meshgrid(g, g, indexing="ij")
        self.X, self.Y = X.ravel(), Y.ravel()
        self.weights = np.full(N * N, 1.0 / (N * N))
        lab = table.labels
        nx = lab[:, 0].astype(np.float64)[:, None]
        ny = lab[:, 1].astype(np.float64)[:, None]
        kind = lab[:, 2]
        theta = 2.0 * np.pi * (nx * self.X[None, :] + ny * self.Y[None, :])
        c, s = np.cos(theta), np.sin(theta)
        r2 = math.sqrt(2.0)
        val = np.where((kind == COS)[:, None], r2 * c, np.where((kind == SIN)[:, None], r2 * s, 1.0))
        # derivative of the phase part: cos -> -sin, sin -> cos
        dval = np.where((kind == COS)[:, None], -r2 * s, np.where((kind == SIN)[:, None], r2 * c, 0.0))
        kx = 2.0 * np.pi * nx
        ky = 2.0 * np.pi * ny
        self._V = val
        self._Vx = kx * dval
        self._Vy = ky * dval
        self._Vxx = -(kx**2) * val
        self._Vxy = -(kx * ky) * val
        self._Vyy = -(ky**2) * val

    def values(self, coeffs):
        return np.asarray(coeffs, dtype=np.float64) @ self._V

    def gradient(self, coeffs):
        c = np.asarray(coeffs, dtype=np.float64)
        return c @ self._Vx, c @ self._Vy

    def hessian(self, coeffs):
        c = np.asarray(coeffs, dtype=np.float64)
        return c @ self._Vxx, c @ self._Vxy, c @ self._Vyy

    def analyze(self, grid_values):
        return (np.asarray(grid_values, dtype=np.float64) * self.weights) @ self._V.T

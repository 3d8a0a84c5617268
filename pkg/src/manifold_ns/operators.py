"""Spectral operators of the vorticity formulation.

Scalars are coefficient vectors on the orthonormal eigenbasis of a
:class:`~manifold_ns.spectrum.SpectrumTable`. Every operator below is
diagonal or a projection in that basis, so all of them are exact.
"""

import json
import math
import numbers

import numpy as np

from ._validation import check_choice, check_coefficients
from .exceptions import ConfigurationError, DimensionError, DomainError
from .spectrum.config import VARIANTS, _RIC_MULTIPLE
from .spectrum.table import ShellKey


class SpectralField:
    """Real coefficients of a scalar field on the retained modes.

    Parameters
    ----------
    coeffs : array_like, shape (n_modes,)
    table : SpectrumTable

    Notes
    -----
    Instances are immutable; arithmetic returns new fields.
    """

    __slots__ = ("coeffs", "table")

    def __init__(self, coeffs, table):
        arr = check_coefficients(coeffs, table.n_modes).copy()
        arr.setflags(write=False)
        self.coeffs = arr
        self.table = table

    @classmethod
    def zeros(cls, table):
        return cls(np.zeros(table.n_modes), table)

    @classmethod
    def from_modes(cls, table, modes):
        """Build from a ``{mode_id: coefficient}`` mapping."""
        c = np.zeros(table.n_modes)
        for i, v in dict(modes).items():
            if not 0 <= int(i) < table.n_modes:
                raise DomainError(f"mode id {i} is not retained by the table")
            c[int(i)] = v
        return cls(c, table)

    @property
    def n_modes(self):
        return self.coeffs.shape[0]

    @property
    def mean_free(self):
        """True when the constant-mode coefficient vanishes."""
        return self.coeffs[0] == 0.0

    def norm(self):
        """L2 norm (Parseval)."""
        return float(np.linalg.norm(self.coeffs))

    def _check_table(self, other):
        if other.table is not self.table and other.table.signature() != self.table.signature():
            raise DomainError("fields index different spectrum tables")

    def __add__(self, other):
        self._check_table(other)
        return SpectralField(self.coeffs + other.coeffs, self.table)

    def __sub__(self, other):
        self._check_table(other)
        return SpectralField(self.coeffs - other.coeffs, self.table)

    def __mul__(self, scalar):
        if not isinstance(scalar, numbers.Real):
            return NotImplemented
        return SpectralField(self.coeffs * float(scalar), self.table)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs, self.table)

    def __eq__(self, other):
        return (
            isinstance(other, SpectralField)
            and other.table.signature() == self.table.signature()
            and np.array_equal(other.coeffs, self.coeffs)
        )

    __hash__ = None

    def __repr__(self):
        return f"SpectralField(n_modes={self.n_modes}, norm={self.norm():.6g})"

    # -- serialization --------------------------------------------------
    def to_pairs(self):
        """Nonzero ``[mode_id, coefficient]`` pairs in mode order."""
        nz = np.flatnonzero(self.coeffs)
        return [[int(i), float(self.coeffs[i])] for i in nz]

    def to_json(self):
        return json.dumps(self.to_pairs())

    @classmethod
    def from_pairs(cls, pairs, table):
        return cls.from_modes(table, {int(i): float(v) for i, v in pairs})

    @classmethod
    def from_json(cls, text, table):
        return cls.from_pairs(json.loads(text), table)


class VelocityRepr:
    """Divergence-free velocity ``U = P_H U + curl psi``.

    Parameters
    ----------
    harmonic : ndarray, shape (b1,)
        Coefficients on the orthonormal harmonic fields (the unit constant
        fields ``d/dx``, ``d/dy`` on the torus; none on the sphere).
    stream : SpectralField
        Stream function ``psi = (-Delta)^{-1} omega``.
    """

    __slots__ = ("harmonic", "stream")

    def __init__(self, harmonic, stream):
        dim = stream.table.config.harmonic_dim
        h = np.asarray(harmonic, dtype=np.float64).reshape(-1)
        if h.shape[0] != dim:
            raise DimensionError(
                f"{stream.table.kind} has {dim} harmonic fields, got {h.shape[0]} coefficients"
            )
        h = h.copy()
        h.setflags(write=False)
        self.harmonic = h
        self.stream = stream

    @property
    def table(self):
        return self.stream.table

    def energy(self):
        """``||U||_2^2 = |harmonic|^2 + sum_i s_i^2 psi_i^2``."""
        psi = self.stream.coeffs
        return float(self.harmonic @ self.harmonic + np.sum(self.table.eigenvalues_sq * psi * psi))

    def norm(self):
        return math.sqrt(self.energy())

    def on_grid(self, basis):
        """Frame components ``(U_a, U_b)`` on the quadrature grid of ``basis``."""
        ua, ub = basis.curl(self.stream.coeffs)
        if self.harmonic.size:
            ua = ua + self.harmonic[0]
            ub = ub + self.harmonic[1]
        return ua, ub

    def __repr__(self):
        return f"VelocityRepr(harmonic={self.harmonic.tolist()}, energy={self.energy():.6g})"


def _as_key(table, k):
    if isinstance(k, ShellKey):
        return k
    if isinstance(k, numbers.Integral):
        return table.shell(int(k))
    raise ConfigurationError(f"shell key must be a ShellKey or integer offset, got {k!r}")


def shell_mask(table, keys):
    """Boolean mask over modes belonging to any of the shells ``keys``."""
    offsets = [_as_key(table, k).n for k in keys]
    return np.isin(table.shell_index, offsets)


def shell_project(f, k):
    """``P_k f``: keep the coefficients in shell ``k`` (ShellKey or offset).

    A shell with no retained modes gives the zero field.
    """
    key = _as_key(f.table, k)
    out = np.zeros(f.n_modes)
    idx = f.table.modes_in(key)
    out[idx] = f.coeffs[idx]
    return SpectralField(out, f.table)


def project_shells(f, keys):
    """``P_Z f = sum_{k in Z} P_k f``."""
    return SpectralField(np.where(shell_mask(f.table, keys), f.coeffs, 0.0), f.table)


def eigenspace_project(f, s_sq):
    """``pi_s f``: keep the modes whose eigenvalue satisfies ``s**2 == s_sq``."""
    return SpectralField(np.where(f.table.eigenvalues_sq == s_sq, f.coeffs, 0.0), f.table)


def shell_norms(f):
    """``{ShellKey: ||P_k f||_2}`` for every populated shell of the table."""
    c = f.coeffs
    return {key: float(np.linalg.norm(c[idx])) for key, idx in f.table.shells.items()}


def _require_mean_free(f, what):
    if f.coeffs[0] != 0.0:
        raise DomainError(
            f"{what} requires a mean-free field; constant-mode coefficient is {f.coeffs[0]!r}"
        )


def inverse_laplacian(f):
    """``(-Delta)^{-1} f``; each coefficient divided by ``s**2``.

    Raises
    ------
    DomainError
        If the constant-mode coefficient is nonzero.
    """
    _require_mean_free(f, "inverse_laplacian")
    s2 = f.table.eigenvalues_sq
    out = np.zeros(f.n_modes)
    out[1:] = f.coeffs[1:] / s2[1:]
    return SpectralField(out, f.table)


def velocity_from_vorticity(omega, harmonic=None):
    """The divergence-free velocity with vorticity ``omega`` and harmonic part ``harmonic``.

    Raises
    ------
    DimensionError
        If harmonic coefficients are given on the sphere (or have the wrong
        length on the torus).
    """
    dim = omega.table.config.harmonic_dim
    if harmonic is None:
        harmonic = np.zeros(dim)
    elif dim == 0 and np.size(harmonic) > 0:
        raise DimensionError("the sphere carries no harmonic vector fields")
    return VelocityRepr(harmonic, inverse_laplacian(omega))


def vorticity_of(velocity):
    """``*d U^flat = -Delta psi`` (harmonic fields are curl-free)."""
    psi = velocity.stream
    return SpectralField(psi.table.eigenvalues_sq * psi.coeffs, psi.table)


def vorticity_from_grid(ua, ub, basis):
    """Vorticity coefficients of a grid velocity field, by quadrature.

    Uses the weak form ``omega_i = int <U, curl e_i>``, which only needs the
    velocity values.
    """
    eye = np.eye(basis.table.n_modes)
    ca, cb = basis.curl(eye)
    return SpectralField(ca @ (ua * basis.weights) + cb @ (ub * basis.weights), basis.table)


def ric_shift(table, variant=None):
    """Constant ``c`` with ``*d Delta_M U^flat = Delta omega + c omega``."""
    variant = table.config.laplacian_variant if variant is None else variant
    check_choice(variant, "laplacian_variant", VARIANTS)
    if table.kind == "torus":
        return 0.0
    return float(_RIC_MULTIPLE[variant])


def viscous_symbol(table, variant=None):
    """Diagonal of the vorticity viscous operator: ``-s**2 + c``; 0 on the constant mode."""
    sym = -table.eigenvalues_sq + ric_shift(table, variant)
    sym = sym.copy()
    sym[0] = 0.0
    return sym


def viscous_term(omega, harmonic=None, variant=None):
    """``*d Delta_M U^flat`` for ``U`` with vorticity ``omega``.

    The harmonic part is curl-free and, on the torus, Laplacian-free, so it
    does not contribute. ``variant`` defaults to the table's configuration.
    """
    _require_mean_free(omega, "viscous_term")
    return SpectralField(viscous_symbol(omega.table, variant) * omega.coeffs, omega.table)


def harmonic_viscous_term(velocity, variant=None):
    """``P_H Delta_M U`` on the harmonic basis.

    On the flat torus every variant equals the Hodge Laplacian, which kills
    harmonic fields and maps ``curl psi`` to ``curl`` of a mean-free
    function, whose harmonic projection vanishes.
    """
    table = velocity.table
    if table.config.harmonic_dim == 0:
        raise DimensionError("the sphere has no harmonic sector")
    ric_shift(table, variant)
    return np.zeros(table.config.harmonic_dim)


def sobolev_norm(f, m):
    """``|pi_0 f| + (sum_k k^{2m} ||P_k f||_2^2)^{1/2}`` with real shell keys ``k``."""
    if isinstance(m, bool) or not isinstance(m, numbers.Integral) or m < 0:
        raise ConfigurationError(f"m must be a nonnegative integer, got {m!r}")
    table = f.table
    c = f.coeffs
    keys = table.lambda1 + table.shell_index[1:].astype(np.float64)
    weighted = np.sum(keys ** (2 * int(m)) * c[1:] ** 2)
    return abs(float(c[0])) + math.sqrt(float(weighted))


def poincare_constant(table):
    """``max(1, 1/lambda1)``."""
    return max(1.0, 1.0 / table.lambda1)


def velocity_gradient_norm_sq(velocity):
    """``||nabla U||_2^2`` (covariant) from the Bochner identity.

    ``||nabla U||^2 = ||omega||^2 - int Ric(U, U)``; harmonic fields on the
    torus are parallel and Ric is the identity on the unit sphere.
    """
    omega = vorticity_of(velocity)
    val = float(omega.coeffs @ omega.coeffs)
    if velocity.table.kind == "sphere":
        val -= velocity.energy()
    return val


def velocity_h1_norm(velocity):
    """``(||U||_2^2 + ||nabla U||_2^2)^{1/2}``."""
    return math.sqrt(velocity.energy() + velocity_gradient_norm_sq(velocity))

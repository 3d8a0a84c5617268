"""Eigenstructure of sqrt(-Laplacian) on the torus and sphere."""

from dataclasses import dataclass, field
import functools
import math

import mpmath
import numpy as np

from ..exceptions import DomainError
from .config import ManifoldConfig

# torus mode kinds
CONST, COS, SIN = 0, 1, 2


@functools.total_ordering
@dataclass(frozen=True)
class ShellKey:
    """Shell ``[lambda1 + n, lambda1 + n + 1)`` stored as the integer offset ``n``.

    Keeping the integer avoids float shell misassignment near boundaries;
    ``float(key)`` gives the real key ``lambda1 + n``.
    """

    n: int
    lambda1: float = field(compare=False, repr=False)

    @property
    def value(self):
        return self.lambda1 + self.n

    def __float__(self):
        return self.value

    def __lt__(self, other):
        return self.n < other.n

    def __hash__(self):
        return hash(self.n)

    def __eq__(self, other):
        return isinstance(other, ShellKey) and self.n == other.n

    def __repr__(self):
        return f"ShellKey(n={self.n}, value={self.value:.6f})"


def _exact_lambda1(kind):
    return 2 * mpmath.pi if kind == "torus" else mpmath.sqrt(2)


def _shell_offset_exact(s_exact, lam_exact):
    return int(mpmath.floor(s_exact - lam_exact))


def shell_of(s, lambda1=math.sqrt(2.0)):
    """Return the shell containing eigenvalue ``s``.

    Returns ``None`` for ``s == 0`` (the constant / harmonic sector).

    Raises
    ------
    DomainError
        If ``s`` is negative or lies strictly between 0 and ``lambda1``.
    """
    if s < 0:
        raise DomainError(f"eigenvalue must be nonnegative, got {s!r}")
    if s == 0:
        return None
    if s < lambda1:
        raise DomainError(f"eigenvalue {s!r} lies below lambda1 = {lambda1!r}")
    with mpmath.workdps(40):
        # table eigenvalues are exact multiples of the float lambda1 on shell 0
        n = _shell_offset_exact(mpmath.mpf(s), mpmath.mpf(lambda1))
    return ShellKey(n, float(lambda1))


class SpectrumTable:
    """Retained eigenmodes, their eigenvalues and shell assignment.

    Attributes
    ----------
    config : ManifoldConfig
    eigenvalues : ndarray, shape (n_modes,)
        sqrt(-Laplacian) eigenvalue ``s`` of each mode.
    eigenvalues_sq : ndarray
        ``s**2`` (exact integers on the sphere, ``4 pi^2 |n|^2`` on the torus).
    labels : ndarray of int
        Torus: ``(n_x, n_y, kind)`` with kind 0 constant, 1 cos, 2 sin.
        Sphere: ``(l, m)`` for the real spherical harmonic of degree l, order m.
    shell_index : ndarray of int
        Shell offset ``n`` of each mode, -1 for the constant mode.
    shells : dict
        ``ShellKey -> ndarray`` of mode ids, in increasing key order.
    """

    def __init__(self, config, eigenvalues_sq, labels, shell_index):
        self.config = config
        self.eigenvalues_sq = np.asarray(eigenvalues_sq, dtype=np.float64)
        self.eigenvalues = np.sqrt(self.eigenvalues_sq)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.shell_index = np.asarray(shell_index, dtype=np.int64)
        self.lambda1 = config.lambda1
        self.shells = {}
        for n in np.unique(self.shell_index[self.shell_index >= 0]):
            key = ShellKey(int(n), self.lambda1)
            self.shells[key] = np.flatnonzero(self.shell_index == n)
        for arr in (self.eigenvalues_sq, self.eigenvalues, self.labels, self.shell_index):
            arr.setflags(write=False)

    @property
    def kind(self):
        return self.config.kind

    @property
    def n_modes(self):
        return self.eigenvalues.shape[0]

    @property
    def constant_mode(self):
        return 0

    @property
    def shell_keys(self):
        return list(self.shells)

    def shell(self, n):
        """ShellKey with offset ``n`` (need not be populated)."""
        return ShellKey(int(n), self.lambda1)

    def modes_in(self, key):
        return self.shells.get(key, np.empty(0, dtype=np.int64))

    @property
    def lmax(self):
        """Largest sphere degree, or largest wavevector component on the torus."""
        if self.kind == "sphere":
            return int(self.labels[:, 0].max())
        return int(np.abs(self.labels[:, :2]).max())

    def mode_label(self, i):
        return tuple(int(v) for v in self.labels[i])

    def distinct_eigenvalues(self, key):
        """Distinct ``s**2`` values inside shell ``key`` (for eigenspace projections)."""
        return np.unique(self.eigenvalues_sq[self.modes_in(key)])

    def signature(self):
        return {
            **self.config.to_dict(),
            "n_modes": int(self.n_modes),
        }

    def __repr__(self):
        return (
            f"SpectrumTable(kind={self.kind!r}, cutoff={self.config.cutoff!r}, "
            f"n_modes={self.n_modes}, n_shells={len(self.shells)})"
        )


def _torus_modes(cutoff):
    nmax = int(math.floor(cutoff / (2 * math.pi))) + 1
    reps = []
    for nx in range(0, nmax + 1):
        for ny in range(-nmax, nmax + 1):
            if nx == 0 and ny <= 0:
                continue
            q = nx * nx + ny * ny
            if 2 * math.pi * math.sqrt(q) < cutoff:
                reps.append((q, nx, ny))
    reps.sort()
    labels = [(0, 0, CONST)]
    qs = [0]
    for q, nx, ny in reps:
        labels.append((nx, ny, COS))
        labels.append((nx, ny, SIN))
        qs.extend([q, q])
    return labels, qs


def build_spectrum(config):
    """Enumerate all modes with eigenvalue below ``config.cutoff``.

    Sphere eigenvalues are ``sqrt(l(l+1))`` with multiplicity ``2l+1``;
    torus eigenvalues are ``2 pi |n|`` for integer wavevectors ``n``,
    realised by a cos/sin pair per wavevector up to sign.
    """
    if not isinstance(config, ManifoldConfig):
        raise TypeError("config must be a ManifoldConfig")
    with mpmath.workdps(40):
        lam = _exact_lambda1(config.kind)
        if config.kind == "torus":
            labels, qs = _torus_modes(config.cutoff)
            s2 = [4 * math.pi**2 * q for q in qs]
            offsets = {}
            for q in set(qs):
                if q:
                    offsets[q] = _shell_offset_exact(2 * mpmath.pi * mpmath.sqrt(q), lam)
            shell_index = [offsets[q] if q else -1 for q in qs]
        else:
            labels, s2, shell_index = [], [], []
            l = 0
            while math.sqrt(l * (l + 1)) < config.cutoff:
                n = _shell_offset_exact(mpmath.sqrt(l * (l + 1)), lam) if l else -1
                for m in range(-l, l + 1):
                    labels.append((l, m))
                    s2.append(float(l * (l + 1)))
                    shell_index.append(n)
                l += 1
    return SpectrumTable(config, s2, labels, shell_index)

"""Geometric trapping envelope and viscous-domination accounting.

A state is trapped when every shell norm stays below the envelope
``A1 sqrt(E*) / k**r``. At a shell ``k`` on the envelope boundary the
diffusion term must beat every other contribution to the growth of
``||P_k omega||``; :func:`domination_report` measures each of them exactly
in coefficient space and bins the convective pairs ``(l1, l2)`` into the
triangle (T) and non-triangle (A, B) regions.
"""

from dataclasses import dataclass, field
import csv
import json
import math
import numbers

import mpmath
import numpy as np
from scipy.special import zeta

from ._validation import check_positive
from .exceptions import ConfigurationError, DomainError, InsufficientDataError
from .dynamics import GalerkinState, enstrophy_constant, fmt
from .operators import SpectralField, ric_shift
from .spectrum.table import ShellKey

CONTACT_RTOL = 1e-6

TRIANGLE_TAGS = ("T1", "T2", "T3")
A_TAGS = ("A1a", "A1b", "A2a", "A2b", "A3a", "A3b")
B_TAGS = ("B1a", "B1b", "B1c", "B2a", "B2b", "B2c")
REGION_TAGS = TRIANGLE_TAGS + A_TAGS + B_TAGS


# ----------------------------------------------------------------------
# envelope

def envelope_a1(r, A0, K0, E_star, lambda1):
    """``A1 = (K0**r + 1) (A0 / sqrt(E_star) + 1) + lambda1``.

    Raises
    ------
    ConfigurationError
        Unless ``r > 1``, ``A0 >= 0``, ``K0 >= lambda1 + 10`` and ``E_star > 1``.
    """
    r = check_positive(r, "r")
    A0 = check_positive(A0, "A0", strict=False)
    K0 = check_positive(K0, "K0")
    E_star = check_positive(E_star, "E_star")
    lambda1 = check_positive(lambda1, "lambda1")
    if r <= 1:
        raise ConfigurationError(f"r must exceed 1, got {r!r}")
    if K0 < lambda1 + 10:
        raise ConfigurationError(f"K0 must be >= lambda1 + 10 = {lambda1 + 10!r}, got {K0!r}")
    if E_star <= 1:
        raise ConfigurationError(f"E_star must exceed 1, got {E_star!r}")
    return (K0**r + 1.0) * (A0 / math.sqrt(E_star) + 1.0) + lambda1


@dataclass(frozen=True)
class TrappingEnvelope:
    """Envelope ``A1 sqrt(E_star) / k**r`` with ``A1`` from :func:`envelope_a1`."""

    r: float
    A0: float
    K0: float
    E_star: float
    lambda1: float
    A1: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "A1", envelope_a1(self.r, self.A0, self.K0, self.E_star, self.lambda1))

    @property
    def amplitude(self):
        """``A1 sqrt(E_star)``."""
        return self.A1 * math.sqrt(self.E_star)

    def bound(self, k):
        """Envelope value at shell key ``k`` (ShellKey or real)."""
        return self.amplitude / float(k) ** self.r

    def to_dict(self):
        return {
            "r": self.r,
            "A0": self.A0,
            "K0": self.K0,
            "E_star": self.E_star,
            "lambda1": self.lambda1,
            "A1": self.A1,
        }

    @classmethod
    def from_state(cls, state, r, K0, nu, T, A0=None):
        """Envelope for initial data ``state`` over ``[0, T]``.

        ``A0`` defaults to :func:`initial_amplitude`; ``E_star`` comes from
        :func:`energy_enstrophy_bound`.
        """
        if A0 is None:
            A0 = initial_amplitude(state, r)
        E = energy_enstrophy_bound(state, nu, T)
        return cls(r, A0, K0, E, state.table.lambda1)


def _norms(state):
    table = state.table
    w = state.omega.coeffs
    s2 = table.eigenvalues_sq
    energy = float(state.harmonic @ state.harmonic + np.sum(w[1:] ** 2 / s2[1:]))
    return math.sqrt(float(w @ w)), math.sqrt(energy)


def initial_amplitude(state, r):
    """Smallest ``A0`` with ``||U|| <= A0`` and ``||P_k omega|| <= A0 / k**r`` for all k."""
    state = _as_state(state)
    table = state.table
    _, u = _norms(state)
    w = state.omega.coeffs
    best = u
    for key, idx in table.shells.items():
        best = max(best, float(key) ** r * float(np.linalg.norm(w[idx])))
    return best


def energy_enstrophy_bound(state, nu, T, C=None):
    """``E* = 1 + (||omega0|| + ||U0||)^2 e^{2 nu C T} + ||U0||^2``.

    Bounds ``||omega(t)||^2 + ||U(t)||^2`` on ``[0, T]`` (enstrophy by the
    Gronwall envelope, energy by the energy inequality) and is ``> 1``.
    """
    state = _as_state(state)
    nu = check_positive(nu, "nu", strict=False)
    T = check_positive(T, "T", strict=False)
    if C is None:
        C = enstrophy_constant(state.table)
    w, u = _norms(state)
    return 1.0 + (w + u) ** 2 * math.exp(2.0 * nu * C * T) + u * u


def _as_state(state):
    if isinstance(state, SpectralField):
        return GalerkinState(0.0, state)
    return state


@dataclass(frozen=True)
class ShellMargin:
    k: ShellKey
    envelope: float
    norm: float
    margin: float
    contact: bool


def envelope_margins(state, envelope, rtol=CONTACT_RTOL):
    """Margins ``A1 sqrt(E*)/k**r - ||P_k omega||`` for every shell of the table.

    ``contact`` flags ``|margin| < rtol * envelope`` (boundary set).
    """
    state = _as_state(state)
    w = state.omega.coeffs
    out = []
    for key, idx in state.table.shells.items():
        env = envelope.bound(key)
        norm = float(np.linalg.norm(w[idx]))
        margin = env - norm
        out.append(ShellMargin(key, env, norm, margin, abs(margin) < rtol * env))
    return out


def write_margins_csv(path, margins):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "envelope", "norm", "margin", "contact"])
        for m in margins:
            writer.writerow([fmt(float(m.k)), fmt(m.envelope), fmt(m.norm), fmt(m.margin), int(m.contact)])


# ----------------------------------------------------------------------
# regions

def _exact(x):
    if isinstance(x, ShellKey):
        lam = x.lambda1
        if abs(lam - 2 * math.pi) < 1e-12:
            base = 2 * mpmath.pi
        elif abs(lam - math.sqrt(2.0)) < 1e-12:
            base = mpmath.sqrt(2)
        else:
            base = mpmath.mpf(lam)
        return base + x.n
    if isinstance(x, numbers.Real):
        return mpmath.mpf(x)
    raise ConfigurationError(f"shell keys must be ShellKey or real, got {x!r}")


def region_of(k, l1, l2):
    """Region tag of the convective pair ``(l1, l2)`` at output shell ``k``.

    Triangle ``|l1-l2| <= k <= l1+l2``: T1 ``l1 <= k/2``, T2 ``k/2 < l1 <= 2k``,
    T3 ``l1 > 2k``. Region A ``|l1-l2| > k``: A1 ``l1 <= k``, A2 ``l1 > k``
    and ``l2 >= k``, A3 ``l1 > k > l2``, with distant sub-cases b at
    ``l2 > k+2l1+2``, ``|l1-l2| >= 2k+2`` and ``l1 >= k+2l2+2``. Region B
    ``l1+l2 < k``: B1 ``l1 >= l2`` (a/b: ``k >= l1+2l2+2`` with ``l1 <= k/2``
    or ``> k/2``; c otherwise), B2 ``l1 < l2`` symmetric.

    Comparisons are exact for ShellKey inputs.
    """
    with mpmath.workdps(40):
        k, l1, l2 = _exact(k), _exact(l1), _exact(l2)
        if min(k, l1, l2) < 0:
            raise DomainError("shell keys must be nonnegative")
        gap = abs(l1 - l2)
        if gap > k:
            if l1 <= k:
                return "A1a" if l2 <= k + 2 * l1 + 2 else "A1b"
            if l2 >= k:
                return "A2a" if gap < 2 * k + 2 else "A2b"
            return "A3a" if l1 < k + 2 * l2 + 2 else "A3b"
        if l1 + l2 < k:
            if l1 >= l2:
                if k >= l1 + 2 * l2 + 2:
                    return "B1a" if l1 <= k / 2 else "B1b"
                return "B1c"
            if k >= 2 * l1 + l2 + 2:
                return "B2a" if l2 <= k / 2 else "B2b"
            return "B2c"
        if l1 <= k / 2:
            return "T1"
        if l1 <= 2 * k:
            return "T2"
        return "T3"


# ----------------------------------------------------------------------
# convective terms

def convective_terms(state, triads=None, basis=None):
    """All norms ``||P_k J((-Delta)^{-1} P_l1 omega, P_l2 omega)||_2``.

    Returns ``(keys, terms)`` with ``terms[a, b, c]`` for ``l1 = keys[a]``,
    ``l2 = keys[b]``, ``k = keys[c]`` over the populated shells. Uses the
    triad contraction when ``triads`` is given, otherwise exact grid
    quadrature (``basis`` or a default-degree basis).
    """
    state = _as_state(state)
    table = state.table
    keys = list(table.shells)
    S = len(keys)
    M = table.n_modes
    w = state.omega.coeffs
    inv = np.zeros(M)
    inv[1:] = 1.0 / table.eigenvalues_sq[1:]
    omegas = np.zeros((S, M))
    for a, key in enumerate(keys):
        idx = table.shells[key]
        omegas[a, idx] = w[idx]
    psis = omegas * inv
    indicator = np.zeros((M, S))
    for a, key in enumerate(keys):
        indicator[table.shells[key], a] = 1.0
    terms = np.zeros((S, S, S))
    active = np.flatnonzero(np.any(omegas != 0.0, axis=1))
    if active.size == 0:
        return keys, terms
    if triads is None:
        if basis is None:
            from .spectrum.basis import make_basis

            basis = make_basis(table)
        ga_w, gb_w = basis.gradient(omegas[active])
        ga_p, gb_p = basis.gradient(psis[active])
        for pos, a in enumerate(active):
            jac = gb_p[pos] * ga_w - ga_p[pos] * gb_w
            coeffs = basis.analyze(jac)
            terms[a, active] = np.sqrt(np.maximum((coeffs * coeffs) @ indicator, 0.0))
    else:
        for a in active:
            out = triads.advect(np.broadcast_to(psis[a], (active.size, M)), omegas[active])
            terms[a, active] = np.sqrt((out * out) @ indicator)
    return keys, terms


@dataclass
class DominationReport:
    """Magnitudes entering the growth of ``||P_k omega||`` at shell ``k``."""

    k: ShellKey
    convective_by_region: dict
    harmonic_term: float
    linear_terms: float
    diffusion_magnitude: float
    tail_bound: float
    envelope: dict = field(default_factory=dict)
    truncation_note: str = ""

    @property
    def convective_total(self):
        return float(sum(self.convective_by_region.values()))

    @property
    def nondiffusive_total(self):
        return self.convective_total + self.harmonic_term + self.linear_terms

    @property
    def dominated(self):
        return self.nondiffusive_total <= self.diffusion_magnitude

    def to_dict(self):
        return {
            "k": float(self.k),
            "regions": {tag: self.convective_by_region.get(tag, 0.0) for tag in REGION_TAGS},
            "harmonic": self.harmonic_term,
            "linear": self.linear_terms,
            "diffusion": self.diffusion_magnitude,
            "dominated": bool(self.dominated),
            "tail_bound": self.tail_bound,
            "envelope": self.envelope,
            "truncation_note": self.truncation_note,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def tail_bound(table, envelope):
    """``A1 sqrt(E*) sum_{l > cutoff} l**-r`` over shell keys beyond the table."""
    n_next = max(key.n for key in table.shells) + 1
    q = table.lambda1 + n_next
    while q < table.config.cutoff:
        q += 1.0
    return envelope.amplitude * float(zeta(envelope.r, q))


def _harmonic_term(state, key, triads):
    if state.harmonic.size == 0 or not np.any(state.harmonic):
        return 0.0
    table = state.table
    w = state.omega.coeffs
    if triads is not None:
        hadv = triads.harmonic_advection
    else:
        from .spectrum.triads import _torus_harmonic

        hadv = _torus_harmonic(table)
    kidx = table.modes_in(key)
    total = 0.0
    for lkey, idx in table.shells.items():
        wl = np.zeros_like(w)
        wl[idx] = w[idx]
        out = np.einsum("h,hjk,j->k", state.harmonic, hadv, wl)
        total += float(np.linalg.norm(out[kidx]))
    return total


def domination_report(state, k, envelope, nu, triads=None, terms=None, variant=None):
    """Viscous-domination accounting at shell ``k``.

    Parameters
    ----------
    state : GalerkinState or SpectralField
    k : ShellKey or int
        Output shell; must exceed ``envelope.K0``.
    envelope : TrappingEnvelope
    nu : float
    triads : TriadTensor, optional
        Use the triad contraction (else exact grid quadrature).
    terms : tuple, optional
        Precomputed output of :func:`convective_terms` (shared across k).
    variant : str, optional
        Laplacian variant; defaults to the table's.

    Raises
    ------
    DomainError
        If ``k <= K0``.
    """
    state = _as_state(state)
    table = state.table
    key = k if isinstance(k, ShellKey) else table.shell(int(k))
    if not float(key) > envelope.K0:
        raise DomainError(f"shell {float(key)!r} must exceed K0 = {envelope.K0!r}")
    nu = check_positive(nu, "nu", strict=False)
    if terms is None:
        terms = convective_terms(state, triads)
    keys, T = terms
    regions = {tag: 0.0 for tag in REGION_TAGS}
    if key in keys:
        c = keys.index(key)
        for a, l1 in enumerate(keys):
            for b, l2 in enumerate(keys):
                val = T[a, b, c]
                if val != 0.0:
                    regions[region_of(key, l1, l2)] += float(val)
    w = state.omega.coeffs
    idx = table.modes_in(key)
    pk = w[idx]
    norm_k = float(np.linalg.norm(pk))
    c_shift = ric_shift(table, variant)
    linear = nu * abs(c_shift) * norm_k
    diffusion = nu * float(np.sum(table.eigenvalues_sq[idx] * pk * pk)) / norm_k if norm_k > 0 else 0.0
    return DominationReport(
        k=key,
        convective_by_region=regions,
        harmonic_term=_harmonic_term(state, key, triads),
        linear_terms=linear,
        diffusion_magnitude=diffusion,
        tail_bound=tail_bound(table, envelope),
        envelope=envelope.to_dict(),
        truncation_note=(
            f"pairs (l1, l2) beyond cutoff {table.config.cutoff!r} are absent; "
            "tail_bound bounds the omitted envelope mass"
        ),
    )


def domination_sweep(state, ks, envelope, nu, triads=None, variant=None):
    """Reports for several shells sharing one convective-term computation."""
    state = _as_state(state)
    terms = convective_terms(state, triads)
    return [domination_report(state, k, envelope, nu, triads, terms, variant) for k in ks]


def write_sweep_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "convective", "harmonic", "linear", "nondiffusive", "diffusion", "dominated"])
        for rep in reports:
            writer.writerow([
                fmt(float(rep.k)),
                fmt(rep.convective_total),
                fmt(rep.harmonic_term),
                fmt(rep.linear_terms),
                fmt(rep.nondiffusive_total),
                fmt(rep.diffusion_magnitude),
                int(rep.dominated),
            ])


# ----------------------------------------------------------------------
# decay fit

@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of ``log(total) = slope log k + intercept``.

    ``flag`` is ``"ok"``, ``"zero-signal"`` (every total vanishes) or
    ``"degenerate"`` (fewer than five nonzero totals); rejected fits carry
    ``slope = nan`` and ``passed = False``.
    """

    slope: float
    intercept: float
    residuals: tuple
    n_points: int
    threshold: float
    passed: bool
    flag: str

    @property
    def accepted(self):
        return self.flag == "ok"

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residuals": list(self.residuals),
            "n_points": self.n_points,
            "threshold": self.threshold,
            "passed": self.passed,
            "flag": self.flag,
        }


def decay_fit(reports, r, slack=0.3, min_points=5):
    """Fit the decay of the non-diffusive total over a k sweep.

    Passes when ``slope <= -(r - 7/4) + slack``.

    Raises
    ------
    InsufficientDataError
        With fewer than ``min_points`` distinct shells.
    """
    ks = np.array([float(rep.k) for rep in reports])
    if np.unique(ks).size < min_points:
        raise InsufficientDataError(f"decay fit needs >= {min_points} distinct shells, got {np.unique(ks).size}")
    totals = np.array([rep.nondiffusive_total for rep in reports])
    threshold = -(r - 1.75) + slack
    nan = float("nan")
    if not np.any(totals > 0):
        return DecayFit(nan, nan, (), 0, threshold, False, "zero-signal")
    pos = totals > 0
    if np.unique(ks[pos]).size < min_points:
        return DecayFit(nan, nan, (), int(pos.sum()), threshold, False, "degenerate")
    x = np.log(ks[pos])
    y = np.log(totals[pos])
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return DecayFit(
        float(slope), float(intercept), tuple(float(v) for v in res), int(pos.sum()),
        threshold, bool(slope <= threshold), "ok",
    )


def synthetic_state(table, r, amplitude=1.0, rng=None):
    """Random state with ``||P_l omega||_2 = amplitude / l**r`` on every shell."""
    rng = np.random.default_rng(rng)
    c = np.zeros(table.n_modes)
    for key, idx in table.shells.items():
        v = rng.standard_normal(idx.size)
        c[idx] = v / np.linalg.norm(v) * amplitude / float(key) ** r
    return GalerkinState(0.0, SpectralField(c, table))

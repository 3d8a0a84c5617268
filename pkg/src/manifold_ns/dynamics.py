"""Truncated Galerkin vorticity dynamics.

The unknowns are the vorticity coefficients on the retained shells ``Z``
and, on the torus, the harmonic velocity coefficients. With
``psi = (-Delta)^{-1} omega`` the system reads::

    d/dt omega = -P_Z [ J(psi, omega) + <P_H U, grad omega> ] + nu (Delta + c) omega
    d/dt P_H U = -P_H nabla_U U + nu P_H Delta_M U = 0

The harmonic equation is trivial on the flat torus: ``div(U (x) U)`` has
zero mean and the Laplacian kills constant fields. Advection is contracted
from the triad tensor, diffusion is diagonal.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np

from ._validation import check_choice, check_positive
from .exceptions import AssemblyError, BlowUpError, ConfigurationError, DimensionError, DomainError
from .operators import SpectralField, poincare_constant, shell_mask, viscous_symbol
from .spectrum.config import ManifoldConfig
from .spectrum.table import ShellKey

SCHEMES = ("imex_euler", "integrating_factor_rk4")
BLOWUP_THRESHOLD = 1e30


def _offsets(table, Z):
    if Z is None:
        return tuple(k.n for k in table.shells)
    out = []
    for k in Z:
        if isinstance(k, ShellKey):
            out.append(k.n)
        elif isinstance(k, (int, np.integer)) and not isinstance(k, bool):
            out.append(int(k))
        else:
            raise ConfigurationError(f"shell selection entries must be ShellKey or int, got {k!r}")
    return tuple(sorted(set(out)))


class GalerkinState:
    """Time, shell selection, vorticity and harmonic velocity.

    Parameters
    ----------
    t : float
    omega : SpectralField
        Mean-free vorticity supported on the shells ``Z``.
    harmonic : array_like, optional
        Harmonic velocity coefficients (length 2 on the torus, 0 on the sphere).
    Z : iterable of ShellKey or int, optional
        Retained shells; all populated shells by default.
    """

    __slots__ = ("t", "omega", "harmonic", "Z")

    def __init__(self, t, omega, harmonic=None, Z=None):
        table = omega.table
        self.t = float(t)
        self.Z = _offsets(table, Z)
        dim = table.config.harmonic_dim
        h = np.zeros(dim) if harmonic is None else np.asarray(harmonic, dtype=np.float64).reshape(-1)
        if h.shape[0] != dim:
            raise DimensionError(f"{table.kind} has {dim} harmonic fields, got {h.shape[0]}")
        if omega.coeffs[0] != 0.0:
            raise DomainError("vorticity must be mean-free (constant-mode coefficient 0)")
        outside = omega.coeffs[~shell_mask(table, self.Z)]
        if np.any(outside != 0.0):
            raise DomainError("vorticity has coefficients outside the selected shells Z")
        h = h.copy()
        h.setflags(write=False)
        self.harmonic = h
        self.omega = omega

    @property
    def table(self):
        return self.omega.table

    @classmethod
    def zeros(cls, table, Z=None):
        return cls(0.0, SpectralField.zeros(table), None, Z)

    def replace(self, t=None, omega=None, harmonic=None):
        return GalerkinState(
            self.t if t is None else t,
            self.omega if omega is None else omega,
            self.harmonic if harmonic is None else harmonic,
            self.Z,
        )

    def vector(self):
        """Concatenated ``(omega, harmonic)`` coefficients."""
        return np.concatenate([self.omega.coeffs, self.harmonic])

    def __eq__(self, other):
        return (
            isinstance(other, GalerkinState)
            and self.t == other.t
            and self.Z == other.Z
            and self.omega == other.omega
            and np.array_equal(self.harmonic, other.harmonic)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"GalerkinState(t={self.t!r}, n_shells={len(self.Z)}, "
            f"|omega|={self.omega.norm():.6g}, harmonic={self.harmonic.tolist()})"
        )

    # -- snapshot IO ----------------------------------------------------
    def to_dict(self):
        return {
            "manifold": self.table.config.to_dict(),
            "t": self.t,
            "Z": list(self.Z),
            "omega": self.omega.to_pairs(),
            "harmonic": [float(v) for v in self.harmonic],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, data, table=None):
        if table is None:
            from .spectrum.table import build_spectrum

            table = build_spectrum(ManifoldConfig(**data["manifold"]))
        omega = SpectralField.from_pairs(data["omega"], table)
        return cls(data["t"], omega, data["harmonic"], data["Z"])

    @classmethod
    def from_json(cls, text, table=None):
        return cls.from_dict(json.loads(text), table)


@dataclass(frozen=True)
class RunConfig:
    """Parameters of a time integration.

    ``nu = 0`` is accepted for inviscid experiments. ``Z = None`` selects
    every populated shell.
    """

    manifold: ManifoldConfig
    nu: float
    dt: float
    T_end: float
    scheme: str = "integrating_factor_rk4"
    monitor_every: int = 1
    Z: tuple = None

    def __post_init__(self):
        check_positive(self.nu, "nu", strict=False)
        check_positive(self.dt, "dt")
        check_positive(self.T_end, "T_end", strict=False)
        check_choice(self.scheme, "scheme", SCHEMES)
        if isinstance(self.monitor_every, bool) or not isinstance(self.monitor_every, int) or self.monitor_every < 1:
            raise ConfigurationError(f"monitor_every must be a positive integer, got {self.monitor_every!r}")
        if self.Z is not None:
            object.__setattr__(self, "Z", tuple(self.Z))

    @property
    def n_steps(self):
        return int(math.ceil(self.T_end / self.dt - 1e-9))

    def to_dict(self):
        return {
            "manifold": self.manifold.to_dict(),
            "nu": self.nu,
            "dt": self.dt,
            "T_end": self.T_end,
            "scheme": self.scheme,
            "monitor_every": self.monitor_every,
            "Z": None if self.Z is None else [k.n if isinstance(k, ShellKey) else int(k) for k in self.Z],
        }


@dataclass(frozen=True)
class MonitorRecord:
    """Monitor values at one time.

    ``shell_norms`` is ordered like ``shell_keys`` (the retained shells).
    """

    t: float
    energy: float
    enstrophy: float
    shell_keys: tuple
    shell_norms: tuple
    energy_residual: float = 0.0
    enstrophy_residual: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def row(self):
        return (
            [self.t, self.energy, self.enstrophy]
            + list(self.shell_norms)
            + [self.energy_residual, self.enstrophy_residual]
        )


def enstrophy_constant(table, variant=None):
    """Gronwall constant ``C = |c| max(1, 1/lambda1)``.

    ``d/dt ||omega||^2 = 2 nu <(Delta + c) omega, omega> <= 2 nu c ||omega||^2``,
    so ``||omega(t)|| <= ||omega(0)|| e^{nu c t}``; the Poincare factor
    keeps the constant valid for the ``||omega|| + ||U||`` envelope.
    """
    from .operators import ric_shift

    return abs(ric_shift(table, variant)) * poincare_constant(table)


def diagnostics(state, initial=None, nu=0.0, C=None):
    """Monitor record for ``state``.

    Residuals are measured against ``initial`` (zero when it is omitted):
    ``max(0, ||U(t)|| - ||U(0)||)`` and
    ``max(0, ||omega(t)|| - (||omega(0)|| + ||U(0)||) e^{nu C (t - t0)})``.
    """
    table = state.table
    w = state.omega.coeffs
    s2 = table.eigenvalues_sq
    energy = float(state.harmonic @ state.harmonic + np.sum(w[1:] ** 2 / s2[1:]))
    enstrophy = float(w @ w)
    keys = tuple(table.shell(n) for n in state.Z)
    norms = tuple(float(np.linalg.norm(w[table.modes_in(k)])) for k in keys)
    e_res = z_res = 0.0
    if initial is not None:
        ref = diagnostics(initial)
        if C is None:
            C = enstrophy_constant(table)
        e_res = max(0.0, math.sqrt(energy) - math.sqrt(ref.energy))
        bound = (math.sqrt(ref.enstrophy) + math.sqrt(ref.energy)) * math.exp(nu * C * (state.t - initial.t))
        z_res = max(0.0, math.sqrt(enstrophy) - bound)
    return MonitorRecord(state.t, energy, enstrophy, keys, norms, e_res, z_res)


class GalerkinSystem:
    """Precomputed right-hand side for one table, triad tensor and run config.

    ``contraction="transform"`` evaluates the advection by exact quadrature
    on the grid instead of the sparse triad contraction; both give the same
    Galerkin projection up to roundoff.

    Raises
    ------
    AssemblyError
        If ``triads`` is missing or was assembled for a different table.
    """

    def __init__(self, table, triads, config, contraction="triads"):
        check_choice(contraction, "contraction", ("triads", "transform"))
        if triads is None:
            raise AssemblyError("no triad tensor supplied")
        if (
            triads.table.kind != table.kind
            or triads.n_modes != table.n_modes
            or not np.array_equal(triads.table.labels, table.labels)
        ):
            raise AssemblyError(
                f"triad tensor covers {triads.n_modes} {triads.table.kind} modes, "
                f"state table has {table.n_modes} {table.kind} modes"
            )
        if table.kind != config.manifold.kind:
            raise AssemblyError("run config and table describe different manifolds")
        self.table = table
        self.triads = triads
        self.config = config
        self.Z = _offsets(table, config.Z)
        self.mask = shell_mask(table, self.Z)
        self.symbol = viscous_symbol(table, config.manifold.laplacian_variant) * self.mask
        inv = np.zeros(table.n_modes)
        inv[1:] = 1.0 / table.eigenvalues_sq[1:]
        self.inv_s2 = inv
        self.C = enstrophy_constant(table, config.manifold.laplacian_variant)
        self.contraction = contraction
        self._basis = None
        if contraction == "transform":
            from .spectrum.basis import make_basis

            self._basis = make_basis(table, triads.degree)

    def nonlinear(self, omega, harmonic):
        """``-P_Z (J(psi, omega) + <H, grad omega>)``; batch dimensions allowed."""
        psi = omega * self.inv_s2
        if self._basis is None:
            adv = self.triads.advect(psi, omega)
        else:
            adv = self._basis.analyze(self._basis.jacobian(psi, omega))
        if harmonic.shape[-1]:
            if omega.ndim == 1:
                adv = adv + self.triads.harmonic_advect(harmonic, omega)
            else:
                adv = adv + np.einsum("bh,hjk,bj->bk", harmonic, self.triads.harmonic_advection, omega)
        return -adv * self.mask

    def rhs_arrays(self, omega, harmonic):
        d_omega = self.nonlinear(omega, harmonic) + self.config.nu * self.symbol * omega
        return d_omega, np.zeros_like(harmonic)

    def step_arrays(self, omega, harmonic, dt):
        nu = self.config.nu
        if dt == 0:
            return omega, harmonic
        if self.config.scheme == "imex_euler":
            new = (omega + dt * self.nonlinear(omega, harmonic)) / (1.0 - dt * nu * self.symbol)
            return new, harmonic
        L = nu * self.symbol
        E = np.exp(L * dt)
        E2 = np.exp(L * (0.5 * dt))
        N = lambda w: self.nonlinear(w, harmonic)
        k1 = N(omega)
        k2 = N(E2 * (omega + 0.5 * dt * k1))
        k3 = N(E2 * omega + 0.5 * dt * k2)
        k4 = N(E * omega + dt * E2 * k3)
        new = E * omega + (dt / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
        return new, harmonic


def _system(state, config, triads):
    if not isinstance(triads, GalerkinSystem):
        triads = GalerkinSystem(state.table, triads, config)
    if set(state.Z) - set(triads.Z):
        raise AssemblyError("state is supported on shells outside the run's selection")
    return triads


def rhs(state, config, triads):
    """Time derivative ``(d omega/dt, d harmonic/dt)`` as ``(SpectralField, ndarray)``.

    ``triads`` is a :class:`TriadTensor` or a prebuilt :class:`GalerkinSystem`.
    """
    system = _system(state, config, triads)
    dw, dh = system.rhs_arrays(state.omega.coeffs, state.harmonic)
    return SpectralField(dw, state.table), dh


def _check_finite(omega, t, state_before):
    if not np.all(np.isfinite(omega)) or np.max(np.abs(omega), initial=0.0) > BLOWUP_THRESHOLD:
        record = diagnostics(state_before)
        raise BlowUpError(
            f"coefficients became non-finite or exceeded {BLOWUP_THRESHOLD:g} at t = {t:.17g}",
            record=record,
            state=state_before,
        )


def step(state, config, triads, dt=None):
    """Advance ``state`` by ``dt`` (default ``config.dt``).

    Raises
    ------
    BlowUpError
        On NaN or coefficients above ``1e30``; carries the last good state.
    """
    system = _system(state, config, triads)
    dt = config.dt if dt is None else float(dt)
    if dt < 0:
        raise ConfigurationError("dt must be nonnegative")
    if dt == 0:
        return state
    w, h = system.step_arrays(state.omega.coeffs, state.harmonic, dt)
    _check_finite(w, state.t + dt, state)
    return GalerkinState(state.t + dt, SpectralField(w, state.table), h, state.Z)


def _times(config, t0):
    n = config.n_steps
    ts = [t0 + i * config.dt for i in range(n)] + [t0 + config.T_end]
    return n, ts


def run(config, initial, triads, callback=None):
    """Integrate to ``initial.t + T_end``.

    Returns
    -------
    trajectory : list of MonitorRecord
        Records at step 0, every ``monitor_every`` steps and at the end.
    final : GalerkinState

    Raises
    ------
    BlowUpError
        With ``trajectory`` holding the records collected so far.
    """
    system = _system(initial, config, triads)
    n, ts = _times(config, initial.t)
    traj = [diagnostics(initial, initial, config.nu, system.C)]
    state = initial
    w, h = initial.omega.coeffs, initial.harmonic
    for i in range(n):
        dt = ts[i + 1] - ts[i]
        w_new, h = system.step_arrays(w, h, dt)
        try:
            _check_finite(w_new, ts[i + 1], state)
        except BlowUpError as err:
            err.trajectory = traj
            raise
        w = w_new
        if (i + 1) % config.monitor_every == 0 or i + 1 == n:
            state = GalerkinState(ts[i + 1], SpectralField(w, initial.table), h, initial.Z)
            rec = diagnostics(state, initial, config.nu, system.C)
            traj.append(rec)
            if callback is not None:
                callback(state, rec)
    final = GalerkinState(ts[-1], SpectralField(w, initial.table), h, initial.Z)
    return traj, final


def run_ensemble(config, initials, triads):
    """Integrate several states sharing a config in one batched loop.

    Returns a list of ``(trajectory, final_state)`` pairs matching
    :func:`run` called on each state separately (up to roundoff in the
    batched sparse products).
    """
    initials = list(initials)
    if not initials:
        return []
    system = _system(initials[0], config, triads)
    for s in initials:
        _system(s, config, system)
    table = initials[0].table
    n, ts = _times(config, initials[0].t)
    if any(s.t != initials[0].t for s in initials):
        raise ConfigurationError("ensemble members must share the initial time")
    W = np.stack([s.omega.coeffs for s in initials])
    H = np.stack([s.harmonic for s in initials])
    trajs = [[diagnostics(s, s, config.nu, system.C)] for s in initials]
    for i in range(n):
        dt = ts[i + 1] - ts[i]
        W_new, H = system.step_arrays(W, H, dt)
        for b, s in enumerate(initials):
            try:
                _check_finite(W_new[b], ts[i + 1], s)
            except BlowUpError as err:
                err.trajectory = trajs[b]
                raise
        W = W_new
        if (i + 1) % config.monitor_every == 0 or i + 1 == n:
            for b, s in enumerate(initials):
                st = GalerkinState(ts[i + 1], SpectralField(W[b], table), H[b], s.Z)
                trajs[b].append(diagnostics(st, s, config.nu, system.C))
    finals = [GalerkinState(ts[-1], SpectralField(W[b], table), H[b], s.Z) for b, s in enumerate(initials)]
    return list(zip(trajs, finals))


def random_state(table, rng, amplitude=1.0, Z=None, harmonic_scale=1.0, decay=0.0):
    """Random mean-free vorticity with ``||omega|| = amplitude``.

    Coefficients are standard normal times ``s**(-decay)``; torus states
    get standard-normal harmonic velocity times ``harmonic_scale``.
    """
    Z = _offsets(table, Z)
    mask = shell_mask(table, Z)
    c = rng.standard_normal(table.n_modes) * mask
    c[1:] *= table.eigenvalues[1:] ** (-decay)
    c[0] = 0.0
    norm = np.linalg.norm(c)
    if norm > 0:
        c *= amplitude / norm
    h = rng.standard_normal(table.config.harmonic_dim) * harmonic_scale
    return GalerkinState(0.0, SpectralField(c, table), h, Z)


# -- trajectory IO ------------------------------------------------------

def fmt(x):
    """17 significant digits (round-trip exact for binary64)."""
    return format(float(x), ".17g")


def trajectory_header(keys):
    return ["t", "energy", "enstrophy"] + [f"shell:{fmt(float(k))}" for k in keys] + [
        "energy_residual",
        "enstrophy_residual",
    ]


def write_trajectory_csv(path_or_buffer, trajectory):
    """Write monitor records as CSV (header ``t,energy,enstrophy,shell:<k>...,...``)."""
    keys = trajectory[0].shell_keys if trajectory else ()
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_header(keys))
        for rec in trajectory:
            writer.writerow([fmt(v) for v in rec.row()])
    finally:
        if own:
            fh.close()


def read_trajectory_csv(path_or_text):
    """Return ``(header, rows)`` with rows as float arrays."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader]).reshape(-1, len(header))
    return header, rows

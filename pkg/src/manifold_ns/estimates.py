"""Measurements of the multilinear eigenfunction estimates.

All integrals are exact Gauss quadratures on the backend grids; products
of shell-supported fields are evaluated pointwise. Random trial fields are
Gaussian on a shell's modes, normalized, and seeded per cell so results do
not depend on evaluation order. Max-over-trials values are lower bounds on
the true worst-case constants.
"""

from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np

from ._validation import check_positive
from .exceptions import ConfigurationError, DomainError
from .dynamics import fmt
from .operators import SpectralField
from .spectrum.basis import make_basis
from .spectrum.table import ShellKey, build_spectrum


# ----------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class EstimateSweepConfig:
    """Parameters shared by the estimate sweeps.

    Parameters
    ----------
    manifold : ManifoldConfig
    l1, l2 : sequence of int
        Shell offsets ``n`` (the shell key is ``lambda1 + n``).
    a, b, c : int
        Derivative orders on ``f`` and ``g`` and inverse-Laplacian power on ``g``.
    equal_shells : bool
        Only sweep the diagonal ``l1 == l2``.
    trials : int
    seed : int
    ascent_steps : int
        Alternating power-ascent iterations applied to every trial (only
        for ``a = b = 0``); sharpens the lower bound toward the worst case.
    degree : int, optional
        Quadrature degree; defaults to the smallest exact one.
    """

    manifold: object
    l1: tuple = ()
    l2: tuple = ()
    a: int = 0
    b: int = 0
    c: int = 0
    equal_shells: bool = False
    trials: int = 8
    seed: int = 0
    ascent_steps: int = 0
    degree: int = None

    def __post_init__(self):
        for name in ("a", "b", "c", "trials", "seed", "ascent_steps"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 0:
                raise ConfigurationError(f"{name} must be a nonnegative integer, got {v!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.a + self.b > 2:
            raise ConfigurationError(f"derivative orders a + b must be <= 2, got {self.a + self.b}")
        if self.ascent_steps and (self.a or self.b):
            raise ConfigurationError("ascent refinement is only available for a = b = 0")
        object.__setattr__(self, "l1", tuple(int(v) for v in self.l1))
        object.__setattr__(self, "l2", tuple(int(v) for v in self.l2))

    def to_dict(self):
        return {
            "manifold": self.manifold.to_dict(),
            "l1": list(self.l1),
            "l2": list(self.l2),
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "equal_shells": self.equal_shells,
            "trials": self.trials,
            "seed": self.seed,
            "ascent_steps": self.ascent_steps,
            "degree": self.degree,
        }


@dataclass(frozen=True)
class EstimateCell:
    """One bilinear cell.

    ``raw_max`` is ``max ||product|| / (||P f|| ||P g||)``; ``ratio_max``
    additionally divides by ``min(l1, l2)**(1/4) l1**a l2**(b - 2c)``.
    """

    l1: float
    l2: float
    a: int
    b: int
    c: int
    trials: int
    ratio_max: float
    ratio_mean: float
    raw_max: float
    raw_mean: float


def _cell_rng(seed, *parts):
    return np.random.default_rng([int(seed)] + [int(p) for p in parts])


def _unit_shell_field(table, key, rng):
    c = np.zeros(table.n_modes)
    idx = table.modes_in(key)
    if idx.size == 0:
        raise ConfigurationError(f"shell {key!r} has no retained modes")
    v = rng.standard_normal(idx.size)
    c[idx] = v / np.linalg.norm(v)
    return c


def _shell_table(manifold, max_offset):
    """Table covering shells up to ``max_offset``."""
    cutoff = manifold.lambda1 + max_offset + 1.0
    cutoff = max(cutoff, float(manifold.cutoff))
    return build_spectrum(manifold.__class__(manifold.kind, cutoff, manifold.laplacian_variant))


# ----------------------------------------------------------------------
# bilinear

def _factor(basis, coeffs, order):
    """Pointwise tensor components of ``nabla^order`` of a field."""
    if order == 0:
        return (basis.values(coeffs),)
    if order == 1:
        return basis.gradient(coeffs)
    haa, hab, hbb = basis.hessian(coeffs)
    return (haa, hab, hab, hbb)


def _product_norm(basis, f, g, a, b):
    F = _factor(basis, f, a)
    G = _factor(basis, g, b)
    if a == b and a > 0:
        # full contraction of equal-rank tensors
        prod = sum(x * y for x, y in zip(F, G))
        return math.sqrt(max(float(basis.integrate(prod * prod)), 0.0))
    fsq = sum(x * x for x in F)
    gsq = sum(y * y for y in G)
    return math.sqrt(max(float(basis.integrate(fsq * gsq)), 0.0))


def _ascent(basis, table, key1, key2, f, g, steps):
    """Alternating power ascent of ``||f g||_2`` over unit shell fields."""
    i1 = table.modes_in(key1)
    i2 = table.modes_in(key2)
    for _ in range(steps):
        F = basis.values(f)
        G = basis.values(g)
        nf = np.zeros_like(f)
        nf[i1] = basis.analyze(F * G * G)[i1]
        f = nf / np.linalg.norm(nf)
        F = basis.values(f)
        ng = np.zeros_like(g)
        ng[i2] = basis.analyze(G * F * F)[i2]
        g = ng / np.linalg.norm(ng)
    return f, g


def bilinear_cell(table, basis, key1, key2, a=0, b=0, c=0, trials=8, seed=0, ascent_steps=0):
    """Measure one ``(l1, l2)`` cell; see :class:`EstimateCell`."""
    l1, l2 = float(key1), float(key2)
    s2 = table.eigenvalues_sq
    inv = np.zeros(table.n_modes)
    inv[1:] = s2[1:] ** (-float(c))
    norm = min(l1, l2) ** 0.25 * l1**a * l2 ** (b - 2 * c)
    ratios, raws = [], []
    for trial in range(trials):
        rng = _cell_rng(seed, key1.n, key2.n, a, b, c, trial)
        f = _unit_shell_field(table, key1, rng)
        g = _unit_shell_field(table, key2, rng)
        if ascent_steps:
            f, g = _ascent(basis, table, key1, key2, f, g, ascent_steps)
        g_c = g * inv if c else g
        raw = _product_norm(basis, f, g_c, a, b) / (np.linalg.norm(f) * np.linalg.norm(g))
        raws.append(raw)
        ratios.append(raw / norm)
    return EstimateCell(l1, l2, a, b, c, trials, max(ratios), float(np.mean(ratios)), max(raws), float(np.mean(raws)))


def bilinear_sweep(config):
    """Grid of :class:`EstimateCell` over the configured shell pairs.

    Raises
    ------
    ConfigurationError
        If the requested quadrature degree cannot integrate the squared
        products exactly.
    """
    l1s = config.l1
    l2s = config.l2 if config.l2 else config.l1
    if not l1s:
        raise ConfigurationError("no shells configured")
    table = _shell_table(config.manifold, max(l1s + l2s))
    keys1 = [table.shell(n) for n in l1s]
    keys2 = [table.shell(n) for n in l2s]
    lmax = table.lmax
    need = 4 * lmax + 2
    degree = need if config.degree is None else int(config.degree)
    if degree < 4 * lmax:
        raise ConfigurationError(
            f"quadrature degree {degree} is too low for squared products of degree-{lmax} modes (need >= {4 * lmax})"
        )
    basis = make_basis(table, degree)
    cells = []
    for k1 in keys1:
        for k2 in keys2:
            if config.equal_shells and k1 != k2:
                continue
            if config.equal_shells is False and config.l2 == () and k2 < k1:
                continue
            cells.append(bilinear_cell(
                table, basis, k1, k2, config.a, config.b, config.c,
                config.trials, config.seed, config.ascent_steps,
            ))
    return cells


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.any(y <= 0) or np.any(x <= 0):
        raise ConfigurationError("log-log fit needs >= 2 positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def write_cells_csv(path, cells):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["l1", "l2", "a", "b", "c", "trials", "ratio_max", "ratio_mean", "raw_max", "raw_mean"])
        for cell in cells:
            writer.writerow([
                fmt(cell.l1), fmt(cell.l2), cell.a, cell.b, cell.c, cell.trials,
                fmt(cell.ratio_max), fmt(cell.ratio_mean), fmt(cell.raw_max), fmt(cell.raw_mean),
            ])


# ----------------------------------------------------------------------
# trilinear

@dataclass(frozen=True)
class TrilinearCell:
    K: float
    l1: float
    l2: float
    l3: float
    value: float
    normalized: float
    zero: bool


@dataclass
class TrilinearCurve:
    cells: list
    baseline: TrilinearCell
    orders: tuple
    note: str = ""

    def to_dict(self):
        return {
            "orders": [list(o) for o in self.orders],
            "baseline": self.baseline.__dict__ if self.baseline else None,
            "cells": [c.__dict__ for c in self.cells],
            "note": self.note,
        }


def _trilinear_value(basis, fields, a_orders):
    """``int`` of the product of three factors with gradient pairs contracted."""
    a1, a2, a3 = a_orders
    if sorted(a_orders) == [0, 0, 0]:
        vals = [basis.values(f) for f in fields]
        return float(basis.integrate(vals[0] * vals[1] * vals[2]))
    if sorted(a_orders) == [0, 1, 1]:
        zero = a_orders.index(0)
        others = [i for i in range(3) if i != zero]
        ga = basis.gradient(fields[others[0]])
        gb = basis.gradient(fields[others[1]])
        dot = ga[0] * gb[0] + ga[1] * gb[1]
        return float(basis.integrate(basis.values(fields[zero]) * dot))
    raise ConfigurationError("trilinear derivative orders must be all 0 or one 0 and two 1s")


def trilinear_integral(table, basis, keys, a_orders=(0, 0, 0), b_orders=(0, 0, 0), trials=1, seed=0):
    """Max over trials of ``|int prod_j nabla^{a_j} (-Delta)^{-b_j} P_{l_j} f_j|`` for unit fields."""
    s2 = table.eigenvalues_sq
    best = 0.0
    for trial in range(trials):
        rng = _cell_rng(seed, *(k.n for k in keys), trial)
        fields = []
        for key, bj in zip(keys, b_orders):
            f = _unit_shell_field(table, key, rng)
            if bj:
                f = f.copy()
                f[1:] /= s2[1:] ** bj
            fields.append(f)
        best = max(best, abs(_trilinear_value(basis, fields, tuple(a_orders))))
    return best


def trilinear_decay(manifold, l2, l3, Ks, a_orders=(0, 0, 0), b_orders=(0, 0, 0), trials=4, seed=0,
                    zero_tol=1e-10):
    """Normalized trilinear integrals along ``l1 = shell_of(l2 + K l3 + 2)``.

    ``l2, l3`` are shell offsets. Normalization divides by
    ``l3**(1/4) prod_j l_j**(a_j - 2 b_j)``. A baseline cell at
    ``l1 = l2`` (inside the triangle range) is recorded as well.

    Raises
    ------
    ConfigurationError
        When no ``K`` yields a shell inside the table.
    """
    lam = manifold.lambda1
    key2_val = lam + l2
    key3_val = lam + l3
    targets = []
    for K in Ks:
        val = key2_val + K * key3_val + 2
        n1 = int(math.floor(val - lam))
        targets.append((float(K), n1))
    max_n = max([n for _, n in targets] + [l2, l3])
    table = _shell_table(manifold, max_n)
    shells = set(k.n for k in table.shells)
    cells_in = [(K, n1) for K, n1 in targets if n1 in shells]
    if not cells_in:
        raise ConfigurationError("no K gives a populated shell for l1")
    degree = max(3 * table.lmax + 2, 2)
    basis = make_basis(table, degree)

    def cell(K, n1):
        keys = [table.shell(n1), table.shell(l2), table.shell(l3)]
        val = trilinear_integral(table, basis, keys, a_orders, b_orders, trials, seed)
        ls = [float(k) for k in keys]
        norm = ls[2] ** 0.25 * np.prod([l ** (a - 2 * b) for l, a, b in zip(ls, a_orders, b_orders)])
        return TrilinearCell(K, ls[0], ls[1], ls[2], val, val / norm, val <= zero_tol)

    baseline = cell(float("nan"), l2)
    cells = [cell(K, n1) for K, n1 in cells_in]
    note = (
        "selection rules make off-triangle integrals vanish exactly (sphere) or unless wavevectors cancel (torus)"
    )
    return TrilinearCurve(cells, baseline, (tuple(a_orders), tuple(b_orders)), note)


@dataclass(frozen=True)
class TriangleScanEntry:
    degrees: tuple
    compatible: bool
    value: float


def sphere_triangle_scan(table, basis=None, trials=2, seed=0):
    """``max |int f1 f2 f3|`` for every sphere shell triple ``l1 <= l2 <= l3``.

    ``compatible`` is the Gaunt selection rule: triangle inequality and even
    degree sum (odd sums vanish by parity).
    """
    if table.kind != "sphere":
        raise DomainError("triangle scan is defined on the sphere")
    basis = make_basis(table) if basis is None else basis
    keys = list(table.shells)
    out = []
    rng_base = seed
    unit = {}
    for key in keys:
        unit[key] = [
            basis.values(_unit_shell_field(table, key, _cell_rng(rng_base, key.n, t))) for t in range(trials)
        ]
    for i, k1 in enumerate(keys):
        for j in range(i, len(keys)):
            k2 = keys[j]
            for k3 in keys[j:]:
                d = (k1.n + 1, k2.n + 1, k3.n + 1)
                compatible = d[2] <= d[0] + d[1] and sum(d) % 2 == 0
                val = max(
                    abs(float(basis.integrate(unit[k1][t] * unit[k2][t] * unit[k3][t]))) for t in range(trials)
                )
                out.append(TriangleScanEntry(d, compatible, val))
    return out


# ----------------------------------------------------------------------
# Fourier trick

@dataclass(frozen=True)
class FourierTrickResult:
    residual: float
    decomposition_residual: float
    n_eigenvalues: int
    norm: float


def fourier_trick_check(f, shell, theta, basis=None):
    """Modulation invariance of the shell norm.

    Builds ``f_theta = sum_s pi_s f exp(i 2 pi z theta)`` with ``z = s - l``
    over the eigenvalues ``s`` of shell ``l`` and returns
    ``| ||P_l f_theta||_2 - ||P_l f||_2 |``, with ``P_l f_theta`` obtained by
    quadrature projection of the grid values. Also checks
    ``P_l f = sum_s pi_s f`` exactly.
    """
    table = f.table
    key = shell if isinstance(shell, ShellKey) else table.shell(int(shell))
    basis = make_basis(table) if basis is None else basis
    idx = table.modes_in(key)
    pl = np.zeros(table.n_modes)
    pl[idx] = f.coeffs[idx]
    s2 = table.eigenvalues_sq
    eigs = np.unique(s2[idx])
    pieces = [np.where(s2 == e, f.coeffs, 0.0) for e in eigs]
    decomposition = float(np.max(np.abs(sum(pieces, np.zeros(table.n_modes)) - pl), initial=0.0))
    re = np.zeros(table.n_modes)
    im = np.zeros(table.n_modes)
    for e, piece in zip(eigs, pieces):
        z = math.sqrt(e) - float(key)
        phase = 2.0 * math.pi * z * float(theta)
        re += math.cos(phase) * piece
        im += math.sin(phase) * piece
    # project the grid values back onto shell l, then take the complex norm
    re_c = basis.analyze(basis.values(re))[idx]
    im_c = basis.analyze(basis.values(im))[idx]
    norm_theta = math.sqrt(float(re_c @ re_c + im_c @ im_c))
    norm = float(np.linalg.norm(pl))
    return FourierTrickResult(abs(norm_theta - norm), decomposition, int(eigs.size), norm)


# ----------------------------------------------------------------------
# appendix identity

@dataclass(frozen=True)
class IdentityResult:
    lhs: float
    rhs: float
    residual: float
    relative_residual: float
    resonant: bool


def _eigen_coeffs(table, e):
    if isinstance(e, SpectralField):
        c = e.coeffs
    elif isinstance(e, (int, np.integer)):
        c = np.zeros(table.n_modes)
        c[int(e)] = 1.0
    else:
        c = np.asarray(e, dtype=np.float64)
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return c, 0.0
    eig = np.unique(table.eigenvalues_sq[nz])
    if eig.size != 1:
        raise DomainError("argument is not an eigenfunction (mixes eigenvalues)")
    return c, float(eig[0])


def appendix_base_identity(table, e1, e2, e3, basis=None):
    """Check ``n1^2 I = (n2^2 + n3^2) I - 2 int e1 <grad e2, grad e3>`` by quadrature.

    ``I = int e1 e2 e3`` and ``n_i^2`` are the ``-Delta`` eigenvalues; the
    identity follows from integrating ``e1 Delta(e2 e3)`` by parts. The
    relative residual divides by the largest term, floored by the same terms
    with absolute integrands so that selection-rule zeros are measured against
    their quadrature scale; no division by ``n1^2 - n2^2 - n3^2`` is needed, so resonant
    triples are handled too.
    """
    basis = make_basis(table) if basis is None else basis
    c1, n1 = _eigen_coeffs(table, e1)
    c2, n2 = _eigen_coeffs(table, e2)
    c3, n3 = _eigen_coeffs(table, e3)
    v1, v2, v3 = basis.values(c1), basis.values(c2), basis.values(c3)
    g2 = basis.gradient(c2)
    g3 = basis.gradient(c3)
    prod = v1 * v2 * v3
    grad = v1 * (g2[0] * g3[0] + g2[1] * g3[1])
    I = float(basis.integrate(prod))
    G = float(basis.integrate(grad))
    lhs = n1 * I
    rhs = (n2 + n3) * I - 2.0 * G
    res = abs(lhs - rhs)
    # integrals of |integrand| floor the scale when selection rules zero every term
    aI = float(basis.integrate(np.abs(prod)))
    aG = float(basis.integrate(np.abs(grad)))
    scale = max(abs(lhs), abs((n2 + n3) * I), abs(2.0 * G), max(n1, n2 + n3) * aI, 2.0 * aG)
    rel = res / scale if scale > 0 else 0.0
    return IdentityResult(lhs, rhs, res, rel, n1 == n2 + n3)


def random_eigenfunction(table, s_sq, rng):
    """Unit random combination of the modes with ``-Delta`` eigenvalue ``s_sq``."""
    idx = np.flatnonzero(table.eigenvalues_sq == s_sq)
    if idx.size == 0:
        raise DomainError(f"no retained eigenvalue {s_sq!r}")
    c = np.zeros(table.n_modes)
    v = rng.standard_normal(idx.size)
    c[idx] = v / np.linalg.norm(v)
    return c


def random_eigen_triples(table, n, seed=0):
    """``n`` seeded random eigenfunction triples, biased toward interacting ones.

    Sphere: degrees with ``l3`` drawn from the triangle range of ``(l1, l2)``.
    Torus: ``e1`` built on a wavevector ``n2 +- n3`` when it is retained.
    """
    rng = np.random.default_rng(seed)
    eig = np.unique(table.eigenvalues_sq)
    out = []
    for _ in range(n):
        if table.kind == "sphere":
            L = table.lmax
            l2, l3 = (int(v) for v in rng.integers(0, L + 1, size=2))
            lo, hi = abs(l2 - l3), min(L, l2 + l3)
            l1 = int(rng.integers(lo, hi + 1))
            sq = [float(l * (l + 1)) for l in (l1, l2, l3)]
        else:
            s2, s3 = rng.choice(eig, size=2)
            lab = table.labels
            i2 = rng.choice(np.flatnonzero(table.eigenvalues_sq == s2))
            i3 = rng.choice(np.flatnonzero(table.eigenvalues_sq == s3))
            cand = []
            for sgn in (1, -1):
                nv = lab[i2, :2] + sgn * lab[i3, :2]
                q = float(4 * math.pi**2 * (nv @ nv))
                hit = np.flatnonzero(np.isclose(table.eigenvalues_sq, q, rtol=1e-14, atol=0))
                if hit.size:
                    cand.append(table.eigenvalues_sq[hit[0]])
            s1 = rng.choice(cand) if cand else rng.choice(eig)
            sq = [float(s1), float(s2), float(s3)]
        out.append(tuple(random_eigenfunction(table, s, rng) for s in sq))
    return out


def write_summary_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")

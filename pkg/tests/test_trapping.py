"""Trapping envelope, region partition and viscous-domination reports."""

import itertools
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_ns.dynamics import GalerkinState, RunConfig, random_state, run
from manifold_ns.exceptions import ConfigurationError, DomainError, InsufficientDataError
from manifold_ns.operators import SpectralField
from manifold_ns.spectrum import ManifoldConfig, build_spectrum, build_triads, make_basis
from manifold_ns.trapping import (
    A_TAGS,
    B_TAGS,
    REGION_TAGS,
    TRIANGLE_TAGS,
    DominationReport,
    TrappingEnvelope,
    convective_terms,
    decay_fit,
    domination_report,
    domination_sweep,
    energy_enstrophy_bound,
    envelope_a1,
    envelope_margins,
    initial_amplitude,
    region_of,
    synthetic_state,
    tail_bound,
    write_margins_csv,
    write_sweep_csv,
)

SQ2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def sphere20():
    table = build_spectrum(ManifoldConfig("sphere", 20.0, "deformation"))
    return table, build_triads(table)


@pytest.fixture(scope="module")
def torus25():
    table = build_spectrum(ManifoldConfig("torus", 25.0))
    return table, build_triads(table)


def envelope_for(table, K0=None, r=2.0, A0=1.0, E=4.0):
    K0 = table.lambda1 + 10 if K0 is None else K0
    return TrappingEnvelope(r, A0, K0, E, table.lambda1)


# ---------------------------------------------------------------- envelope

def test_a1_example():
    assert envelope_a1(2, 1, 12, 4, SQ2) == pytest.approx(218.91421356237310, rel=1e-15)


def test_a1_zero_amplitude():
    assert envelope_a1(3, 0, 12, 4, SQ2) == pytest.approx(12**3 + 1 + SQ2, rel=1e-15)


@pytest.mark.parametrize(
    "r,A0,K0,E",
    [(2, 1, SQ2 + 9, 4), (1.0, 1, 12, 4), (0.5, 1, 12, 4), (2, 1, 12, 1.0), (2, -1, 12, 4)],
)
def test_a1_preconditions(r, A0, K0, E):
    with pytest.raises(ConfigurationError):
        envelope_a1(r, A0, K0, E, SQ2)


@given(
    st.floats(1.01, 6.0),
    st.floats(0.0, 1e3),
    st.floats(11.5, 200.0),
    st.floats(1.01, 1e6),
)
def test_a1_formula(r, A0, K0, E):
    expected = (K0**r + 1) * (A0 / math.sqrt(E) + 1) + SQ2
    assert envelope_a1(r, A0, K0, E, SQ2) == pytest.approx(expected, rel=1e-13)


def test_envelope_object(sphere_table):
    env = envelope_for(sphere_table)
    assert env.A1 == envelope_a1(2.0, 1.0, SQ2 + 10, 4.0, SQ2)
    assert env.amplitude == pytest.approx(env.A1 * 2.0)
    assert env.bound(3.0) == pytest.approx(env.amplitude / 9.0)
    d = env.to_dict()
    assert {"r", "A0", "K0", "E_star", "A1", "lambda1"} <= set(d)


def test_energy_enstrophy_bound(sphere_table):
    s = random_state(sphere_table, np.random.default_rng(0), amplitude=2.0)
    w = s.omega.norm()
    u = math.sqrt(float(np.sum(s.omega.coeffs[1:] ** 2 / sphere_table.eigenvalues_sq[1:])))
    assert energy_enstrophy_bound(s, 0.1, 1.0, C=2.0) == pytest.approx(1 + (w + u) ** 2 * math.exp(0.4) + u * u)
    assert energy_enstrophy_bound(GalerkinState.zeros(sphere_table), 0.1, 1.0) == 1.0


def test_initial_amplitude(sphere_table):
    s = synthetic_state(sphere_table, 2.0, amplitude=3.0, rng=0)
    A0 = initial_amplitude(s, 2.0)
    assert A0 == pytest.approx(3.0, rel=1e-12)
    env = TrappingEnvelope.from_state(s, 2.0, SQ2 + 10, 0.1, 1.0)
    assert env.A0 == A0 and env.E_star > 1


# ---------------------------------------------------------------- margins

def test_zero_state_margins(sphere_table):
    env = envelope_for(sphere_table)
    margins = envelope_margins(GalerkinState.zeros(sphere_table), env)
    assert len(margins) == len(sphere_table.shells)
    for m in margins:
        assert m.margin == m.envelope == pytest.approx(env.amplitude / float(m.k) ** 2)
        assert not m.contact


def _state_with_shell_norms(table, norms):
    rng = np.random.default_rng(1)
    c = np.zeros(table.n_modes)
    for key, value in norms.items():
        idx = table.modes_in(key)
        v = rng.standard_normal(idx.size)
        c[idx] = v / np.linalg.norm(v) * value
    return GalerkinState(0.0, SpectralField(c, table))


def test_contact_margin(sphere_table):
    env = envelope_for(sphere_table)
    key = sphere_table.shell(2)
    s = _state_with_shell_norms(sphere_table, {key: env.bound(key)})
    margins = {m.k: m for m in envelope_margins(s, env)}
    assert abs(margins[key].margin) < 1e-9 * env.bound(key)
    assert margins[key].contact
    assert sum(m.contact for m in margins.values()) == 1


def test_violation_margin(sphere_table):
    env = envelope_for(sphere_table)
    key = sphere_table.shell(1)
    s = _state_with_shell_norms(sphere_table, {key: 1.1 * env.bound(key)})
    margins = envelope_margins(s, env)
    negative = [m.k for m in margins if m.margin < 0]
    assert negative == [key]


def test_saturating_state_contacts_everywhere(sphere_table):
    env = envelope_for(sphere_table)
    s = _state_with_shell_norms(sphere_table, {k: env.bound(k) for k in sphere_table.shells})
    assert all(m.contact for m in envelope_margins(s, env))


def test_margins_csv(tmp_path, sphere_table):
    env = envelope_for(sphere_table)
    path = tmp_path / "m.csv"
    write_margins_csv(str(path), envelope_margins(GalerkinState.zeros(sphere_table), env))
    lines = path.read_text().splitlines()
    assert lines[0] == "k,envelope,norm,margin,contact"
    assert len(lines) == 1 + len(sphere_table.shells)


# ---------------------------------------------------------------- regions

@pytest.mark.parametrize(
    "k,l1,l2,tag",
    [
        (10, 4, 8, "T1"),
        (10, 30, 5, "A3b"),
        (10, 2, 3, "B2a"),
        (10, 8, 8, "T2"),
        (10, 25, 20, "T3"),
        (10, 2, 15, "A1a"),
        (10, 2, 30, "A1b"),
        (10, 12, 25, "A2a"),
        (10, 12, 40, "A2b"),
        (10, 20, 5, "A3a"),
        (10, 4, 2, "B1a"),
        (12, 7, 1, "B1b"),
        (10, 6, 3, "B1c"),
        (12, 1, 7, "B2b"),
        (10, 3, 6, "B2c"),
    ],
)
def test_region_examples(k, l1, l2, tag):
    assert region_of(k, l1, l2) == tag


def _family(k, l1, l2):
    if abs(l1 - l2) > k:
        return "A"
    if l1 + l2 < k:
        return "B"
    return "T"


def test_region_partition_dense_grid():
    grid = [0.5 * i for i in range(0, 41)]
    seen = set()
    for k, l1, l2 in itertools.product(grid[1:], grid, grid):
        tag = region_of(k, l1, l2)
        assert tag in REGION_TAGS
        assert tag[0] == _family(k, l1, l2)
        seen.add(tag)
    assert seen == set(REGION_TAGS)


@settings(max_examples=300)
@given(st.floats(0.1, 100), st.floats(0, 200), st.floats(0, 200))
def test_region_family_matches_inequalities(k, l1, l2):
    assert region_of(k, l1, l2)[0] == _family(k, l1, l2)


def test_region_on_shell_keys_matches_values(sphere20):
    table, _ = sphere20
    keys = table.shell_keys
    for k in keys[::3]:
        for l1 in keys[::2]:
            for l2 in keys[::2]:
                assert region_of(k, l1, l2) == region_of(float(k), float(l1), float(l2))


def test_region_rejects_negative():
    with pytest.raises(DomainError):
        region_of(-1, 2, 3)


# ---------------------------------------------------------------- domination

def test_k_must_exceed_K0(sphere20):
    table, triads = sphere20
    env = envelope_for(table)
    s = synthetic_state(table, 2.0, rng=0)
    with pytest.raises(DomainError):
        domination_report(s, table.shell(5), env, 0.1, triads)


def test_torus_hodge_zero_harmonic_has_no_linear_terms(torus25):
    table, triads = torus25
    env = envelope_for(table)
    s = random_state(table, np.random.default_rng(0), amplitude=1.0, harmonic_scale=0.0)
    keys = [k for k in table.shells if float(k) > env.K0]
    for rep in domination_sweep(s, keys, env, 0.1, triads):
        assert rep.linear_terms == 0.0 and rep.harmonic_term == 0.0


def test_torus_harmonic_term_matches_grid(torus25):
    table, triads = torus25
    env = envelope_for(table)
    s = random_state(table, np.random.default_rng(1), amplitude=1.0, harmonic_scale=1.0)
    key = [k for k in table.shells if float(k) > env.K0][0]
    rep = domination_report(s, key, env, 0.1, triads)
    basis = make_basis(table)
    kidx = table.modes_in(key)
    ref = 0.0
    for idx in table.shells.values():
        w = np.zeros(table.n_modes)
        w[idx] = s.omega.coeffs[idx]
        ga, gb = basis.gradient(w)
        out = basis.analyze(s.harmonic[0] * ga + s.harmonic[1] * gb)
        ref += float(np.linalg.norm(out[kidx]))
    assert rep.harmonic_term == pytest.approx(ref, rel=1e-10, abs=1e-12)
    assert rep.harmonic_term > 0


def test_single_shell_state_single_bin(sphere20):
    table, triads = sphere20
    env = envelope_for(table)
    star = table.shell(8)
    s = _state_with_shell_norms(table, {star: 1.0})
    k = table.shell(12)
    keys, terms = convective_terms(s, triads)
    a = keys.index(star)
    mask = np.ones(terms.shape, dtype=bool)
    mask[a, a, :] = False
    assert np.all(terms[mask] == 0.0)
    rep = domination_report(s, k, env, 0.1, triads)
    nonzero = [t for t, v in rep.convective_by_region.items() if v != 0.0]
    assert nonzero == [region_of(k, star, star)]


def test_report_bins_sum_to_total(sphere20):
    table, triads = sphere20
    env = envelope_for(table)
    s = synthetic_state(table, 2.5, rng=3)
    terms = convective_terms(s, triads)
    keys, T = terms
    for k in [key for key in table.shells if float(key) > env.K0]:
        rep = domination_report(s, k, env, 0.1, triads, terms=terms)
        total = float(T[:, :, keys.index(k)].sum())
        assert rep.convective_total == pytest.approx(total, rel=1e-12, abs=1e-300)


def test_sphere_non_triangle_bins_vanish(sphere20):
    table, triads = sphere20
    env = envelope_for(table)
    s = synthetic_state(table, 2.0, rng=4)
    for rep in domination_sweep(s, [k for k in table.shells if float(k) > env.K0], env, 0.1, triads):
        for tag in A_TAGS + B_TAGS:
            assert rep.convective_by_region[tag] <= 1e-10
        assert sum(rep.convective_by_region[t] for t in TRIANGLE_TAGS) > 1e-6


def test_report_against_dense_quadrature_oracle(sphere20):
    table, triads = sphere20
    env = envelope_for(table)
    s = random_state(table, np.random.default_rng(5), amplitude=1e-2)
    k = [key for key in table.shells if float(key) > env.K0][2]
    rep = domination_report(s, k, env, 0.1, triads)
    basis = make_basis(table, 3 * table.lmax + 10)
    kidx = table.modes_in(k)
    w = s.omega.coeffs
    regions = dict.fromkeys(REGION_TAGS, 0.0)
    for l1, i1 in table.shells.items():
        psi = np.zeros(table.n_modes)
        psi[i1] = w[i1] / table.eigenvalues_sq[i1]
        for l2, i2 in table.shells.items():
            om = np.zeros(table.n_modes)
            om[i2] = w[i2]
            out = basis.analyze(basis.jacobian(psi, om))
            regions[region_of(k, l1, l2)] += float(np.linalg.norm(out[kidx]))
    for tag in REGION_TAGS:
        assert rep.convective_by_region[tag] == pytest.approx(regions[tag], abs=1e-8)
    assert rep.linear_terms == pytest.approx(0.1 * 2.0 * np.linalg.norm(w[kidx]), rel=1e-14)
    diffusion = 0.1 * float(np.sum(table.eigenvalues_sq[kidx] * w[kidx] ** 2)) / np.linalg.norm(w[kidx])
    assert rep.diffusion_magnitude == pytest.approx(diffusion, rel=1e-14)


def test_transform_and_triad_terms_agree(sphere20):
    table, triads = sphere20
    s = synthetic_state(table, 2.0, rng=6)
    _, a = convective_terms(s, triads)
    _, b = convective_terms(s)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_report_json_and_flag(tmp_path, sphere20):
    table, triads = sphere20
    env = envelope_for(table)
    s = synthetic_state(table, 3.0, rng=0)
    reps = domination_sweep(s, [table.shell(n) for n in (12, 14, 16)], env, 0.1, triads)
    for rep in reps:
        d = json.loads(rep.to_json())
        assert set(d) >= {"k", "regions", "harmonic", "linear", "diffusion", "dominated", "tail_bound"}
        assert set(d["regions"]) == set(REGION_TAGS)
        assert d["dominated"] == (rep.nondiffusive_total <= rep.diffusion_magnitude)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(str(path), reps)
    assert len(path.read_text().splitlines()) == 4


def test_tail_bound_matches_partial_sum(sphere_table):
    env = envelope_for(sphere_table, r=3.0)
    q = sphere_table.lambda1 + max(k.n for k in sphere_table.shells) + 1
    ref = env.amplitude * float(mpmath.nsum(lambda n: (q + n) ** -3, [0, mpmath.inf]))
    assert tail_bound(sphere_table, env) == pytest.approx(ref, rel=1e-12)


def test_dominated_flag_semantics():
    rep = DominationReport(None, {"T1": 1.0}, 0.5, 0.25, 1.75, 0.0)
    assert rep.nondiffusive_total == 1.75 and rep.dominated
    rep.diffusion_magnitude = 1.7
    assert not rep.dominated


# ---------------------------------------------------------------- decay fit

def _zero_report(k):
    return DominationReport(k, dict.fromkeys(REGION_TAGS, 0.0), 0.0, 0.0, 0.0, 0.0)


def test_decay_fit_zero_signal(sphere20):
    table, _ = sphere20
    reps = [_zero_report(table.shell(n)) for n in range(12, 18)]
    fit = decay_fit(reps, 3.0)
    assert fit.flag == "zero-signal" and not fit.accepted


def test_decay_fit_degenerate():
    reps = [_zero_report(float(k)) for k in range(12, 18)]
    reps[0].convective_by_region["T1"] = 1.0
    fit = decay_fit(reps, 3.0)
    assert fit.flag == "degenerate" and not fit.passed


def test_decay_fit_insufficient():
    with pytest.raises(InsufficientDataError):
        decay_fit([_zero_report(float(k)) for k in range(12, 16)], 3.0)


def test_decay_fit_exact_power_law():
    reps = []
    for k in range(12, 20):
        rep = _zero_report(float(k))
        rep.convective_by_region["T2"] = 5.0 * k**-1.5
        reps.append(rep)
    fit = decay_fit(reps, 3.0)
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.passed and fit.flag == "ok"
    assert fit.threshold == pytest.approx(-(3.0 - 1.75) + 0.3)


def test_decay_fit_synthetic_sphere():
    table = build_spectrum(ManifoldConfig("sphere", 40.0, "deformation"))
    s = synthetic_state(table, 3.0, rng=0)
    env = TrappingEnvelope.from_state(s, 3.0, table.lambda1 + 10, 0.1, 1.0)
    keys = [table.shell(n) for n in range(11, 21)]
    reports = domination_sweep(s, keys, env, 0.1)
    fit = decay_fit(reports, 3.0)
    assert fit.passed, fit.slope
    assert all(rep.dominated for rep in reports)


# ---------------------------------------------------------------- preservation

def test_margins_stay_positive_under_domination(sphere20):
    table, triads = sphere20
    s = synthetic_state(table, 2.0, amplitude=0.5, rng=7)
    nu, T = 0.1, 0.5
    env = TrappingEnvelope.from_state(s, 2.0, table.lambda1 + 10, nu, T)
    rc = RunConfig(table.config, nu, 5e-3, T, monitor_every=10)
    states = []
    run(rc, s, triads, callback=lambda st, rec: states.append(st))
    for st in [s] + states:
        assert min(m.margin for m in envelope_margins(st, env)) > 0

"""Eigenbasis, shells, triad tensors and the spectrum cache."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import torus_mode
from manifold_ns.exceptions import ConfigurationError, DomainError
from manifold_ns.spectrum import (
    ManifoldConfig,
    ShellKey,
    build_spectrum,
    build_triads,
    make_basis,
    shell_of,
)
from manifold_ns.spectrum import cache
from manifold_ns.spectrum.table import COS

SQ2 = math.sqrt(2.0)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize(
    "kind,cutoff",
    [("sphere", 1.0), ("sphere", SQ2), ("torus", 6.0), ("torus", 2 * math.pi), ("sphere", -3.0)],
)
def test_cutoff_at_or_below_lambda1_rejected(kind, cutoff):
    with pytest.raises(ConfigurationError):
        ManifoldConfig(kind, cutoff)


@pytest.mark.parametrize("kind,variant", [("cube", "hodge"), ("sphere", "ricci")])
def test_bad_choices_rejected(kind, variant):
    with pytest.raises(ConfigurationError):
        ManifoldConfig(kind, 10.0, variant)


@pytest.mark.parametrize(
    "kind,variant,shift",
    [
        ("torus", "hodge", 0.0),
        ("torus", "bochner", 0.0),
        ("torus", "deformation", 0.0),
        ("sphere", "hodge", 0.0),
        ("sphere", "bochner", 1.0),
        ("sphere", "deformation", 2.0),
    ],
)
def test_ric_shift(kind, variant, shift):
    assert ManifoldConfig(kind, 10.0, variant).ric_shift == shift


# ---------------------------------------------------------------- spectrum

def test_sphere_cutoff_3_modes():
    table = build_spectrum(ManifoldConfig("sphere", 3.0))
    assert table.n_modes == 1 + 3 + 5
    degrees = table.labels[:, 0]
    assert np.count_nonzero(degrees == 0) == 1
    np.testing.assert_allclose(table.eigenvalues[degrees == 1], SQ2, rtol=0, atol=1e-15)
    np.testing.assert_allclose(table.eigenvalues[degrees == 2], math.sqrt(6.0), rtol=0, atol=1e-15)
    assert table.lambda1 == SQ2


def test_sphere_cutoff_3_shell_map():
    table = build_spectrum(ManifoldConfig("sphere", 3.0))
    keys = table.shell_keys
    assert [float(k) for k in keys] == pytest.approx([SQ2, 1 + SQ2], abs=1e-15)
    assert set(table.labels[table.modes_in(keys[0]), 0]) == {1}
    assert set(table.labels[table.modes_in(keys[1]), 0]) == {2}


def test_torus_small_cutoff_lattice():
    # cutoff 2 pi * 1.2 keeps only n = 0 and |n| = 1
    table = build_spectrum(ManifoldConfig("torus", 2 * math.pi * 1.2))
    assert table.n_modes == 5
    assert table.eigenvalues[0] == 0.0
    np.testing.assert_allclose(table.eigenvalues[1:], 2 * math.pi, rtol=1e-15)


def test_torus_cutoff_one_and_half_also_keeps_diagonals():
    # |n| = sqrt 2 < 1.5, so the diagonal wavevectors are retained too
    table = build_spectrum(ManifoldConfig("torus", 2 * math.pi * 1.5))
    assert table.n_modes == 9
    q = np.round(table.eigenvalues_sq / (4 * math.pi**2)).astype(int)
    assert sorted(q.tolist()) == [0, 1, 1, 1, 1, 2, 2, 2, 2]


@pytest.mark.parametrize("kind,cutoff", [("torus", 40.0), ("torus", 2 * math.pi * 3), ("sphere", 12.0), ("sphere", 30.5)])
def test_table_invariants(kind, cutoff):
    table = build_spectrum(ManifoldConfig(kind, cutoff))
    s = table.eigenvalues
    assert np.count_nonzero(s == 0) == 1
    assert np.all(s < cutoff)
    assert table.lambda1 == pytest.approx(s[s > 0].min(), rel=1e-15)
    ids = np.concatenate([table.modes_in(k) for k in table.shell_keys])
    assert sorted(ids.tolist()) == list(range(1, table.n_modes))
    for key, idx in table.shells.items():
        assert np.all(s[idx] >= float(key) - 1e-12)
        assert np.all(s[idx] < float(key) + 1)


def test_sphere_multiplicities():
    table = build_spectrum(ManifoldConfig("sphere", 20.0))
    for l in range(table.lmax + 1):
        idx = table.labels[:, 0] == l
        assert np.count_nonzero(idx) == 2 * l + 1
        np.testing.assert_array_equal(table.eigenvalues_sq[idx], l * (l + 1))


def test_torus_brute_force_lattice():
    cutoff = 2 * math.pi * 3.7
    table = build_spectrum(ManifoldConfig("torus", cutoff))
    count = sum(
        1
        for nx in range(-5, 6)
        for ny in range(-5, 6)
        if 2 * math.pi * math.hypot(nx, ny) < cutoff
    )
    assert table.n_modes == count


def test_sphere_shell_holds_single_degree():
    table = build_spectrum(ManifoldConfig("sphere", 60.0))
    for key, idx in table.shells.items():
        assert set(table.labels[idx, 0]) == {key.n + 1}


# ---------------------------------------------------------------- shell_of

@pytest.mark.parametrize(
    "s,lam,expected",
    [
        (math.sqrt(6.0), SQ2, 1 + SQ2),
        (2 * math.pi, 2 * math.pi, 2 * math.pi),
        (SQ2, SQ2, SQ2),
        (2 * math.pi * SQ2, 2 * math.pi, 2 * math.pi + 2),
    ],
)
def test_shell_of_examples(s, lam, expected):
    assert float(shell_of(s, lam)) == pytest.approx(expected, abs=1e-15)


def test_shell_of_zero_and_negative():
    assert shell_of(0.0) is None
    with pytest.raises(DomainError):
        shell_of(-1.0)
    with pytest.raises(DomainError):
        shell_of(1.0, SQ2)


def test_shell_boundary_is_exact():
    # binary-exact lambda1 so that s sits exactly on a shell boundary
    assert shell_of(4.5, 1.5).n == 3
    assert shell_of(np.nextafter(4.5, 0.0), 1.5).n == 2


@given(st.floats(min_value=SQ2, max_value=1e4, allow_nan=False))
def test_shell_of_contains_value(s):
    key = shell_of(s, SQ2)
    assert float(key) <= s + 1e-9
    assert s < float(key) + 1 + 1e-9


def test_shell_key_ordering_and_hash():
    a, b = ShellKey(2, SQ2), ShellKey(5, SQ2)
    assert a < b and a == ShellKey(2, SQ2)
    assert len({a, ShellKey(2, SQ2), b}) == 2


# ---------------------------------------------------------------- basis

@pytest.mark.parametrize("kind,cutoff", [("torus", 2 * math.pi * 3.2), ("sphere", 9.0)])
def test_orthonormality(kind, cutoff):
    table = build_spectrum(ManifoldConfig(kind, cutoff))
    basis = make_basis(table)
    V = basis.values(np.eye(table.n_modes))
    gram = (V * basis.weights) @ V.T
    np.testing.assert_allclose(gram, np.eye(table.n_modes), atol=1e-10)


@pytest.mark.parametrize("kind,cutoff", [("torus", 2 * math.pi * 3.2), ("sphere", 9.0)])
def test_eigen_residual(kind, cutoff):
    table = build_spectrum(ManifoldConfig(kind, cutoff))
    basis = make_basis(table)
    eye = np.eye(table.n_modes)
    haa, _, hbb = basis.hessian(eye)
    V = basis.values(eye)
    mat = (-(haa + hbb) * basis.weights) @ V.T
    np.testing.assert_allclose(mat, np.diag(table.eigenvalues_sq), atol=1e-8)


def test_analyze_inverts_values(backend):
    table, _ = backend
    basis = make_basis(table)
    c = np.random.default_rng(3).standard_normal(table.n_modes)
    np.testing.assert_allclose(basis.analyze(basis.values(c)), c, atol=1e-12)


def test_low_degree_rejected(sphere_table):
    with pytest.raises(ConfigurationError):
        make_basis(sphere_table, degree=sphere_table.lmax)


def test_sphere_y00_constant(sphere_table):
    basis = make_basis(sphere_table)
    v = basis.values(np.eye(sphere_table.n_modes)[0])
    np.testing.assert_allclose(v, 1 / math.sqrt(4 * math.pi), rtol=1e-14)


# ---------------------------------------------------------------- triads

def _quadrature_triads(table, degree):
    basis = make_basis(table, degree)
    eye = np.eye(table.n_modes)
    V = basis.values(eye)
    Ga, Gb = basis.gradient(eye)
    w = basis.weights
    prod = np.einsum("ig,jg,kg,g->ijk", V, V, V, w)
    # J(e_j, e_k) = d_b e_j d_a e_k - d_a e_j d_b e_k
    jac = Gb[:, None, :] * Ga[None, :, :] - Ga[:, None, :] * Gb[None, :, :]
    adv = np.einsum("ig,jkg,g->ijk", V, jac, w)
    return prod, adv


def _dense(triads, table):
    M = table.n_modes
    P = triads.product_matrix.toarray().reshape(M, M, M)
    A = triads.advection_matrix.toarray().reshape(M, M, M)
    return P, A


def test_triads_match_quadrature(backend):
    table, triads = backend
    prod, adv = _quadrature_triads(table, 3 * table.lmax + 6)
    P, A = _dense(triads, table)
    np.testing.assert_allclose(P, prod, atol=1e-10)
    np.testing.assert_allclose(A, adv, atol=1e-10)


def test_triad_symmetries(backend):
    table, triads = backend
    P, A = _dense(triads, table)
    for perm in [(0, 2, 1), (1, 0, 2), (2, 1, 0), (1, 2, 0)]:
        np.testing.assert_array_equal(P, P.transpose(perm))
    np.testing.assert_array_equal(A, -A.transpose(0, 2, 1))
    idx = np.arange(table.n_modes)
    assert np.all(A[idx[:, None], :, idx[:, None]] == 0.0)


def test_lookup_methods_agree_with_matrices(backend):
    table, triads = backend
    P, A = _dense(triads, table)
    rng = np.random.default_rng(0)
    for i, j, k in rng.integers(0, table.n_modes, size=(200, 3)):
        assert triads.product(i, j, k) == P[i, j, k]
        assert triads.advection(i, j, k) == A[i, j, k]


def test_sphere_product_with_constant(sphere_table, sphere_triads):
    c = 1 / math.sqrt(4 * math.pi)
    for i in range(1, sphere_table.n_modes):
        assert sphere_triads.product(0, i, i) == pytest.approx(c, rel=1e-12)


def test_sphere_zonal_pairs_do_not_advect(sphere_table, sphere_triads):
    zonal = np.flatnonzero(sphere_table.labels[:, 1] == 0)
    for j in zonal:
        for k in zonal:
            for i in range(sphere_table.n_modes):
                assert sphere_triads.advection(i, j, k) == 0.0


def test_sphere_selection_rule_by_quadrature(sphere_table):
    prod, _ = _quadrature_triads(sphere_table, 3 * sphere_table.lmax + 6)
    l = sphere_table.labels[:, 0]
    li, lj, lk = np.meshgrid(l, l, l, indexing="ij")
    violates = (lk > li + lj) | (li > lj + lk) | (lj > li + lk)
    assert np.max(np.abs(prod[violates])) < 1e-12


def test_sphere_stored_entries_obey_selection(sphere_table, sphere_triads):
    lab = sphere_table.labels[:, 0]
    for idx in (sphere_triads.product_index, sphere_triads.advection_index):
        d = lab[idx]
        d.sort(axis=1)
        assert np.all(d[:, 2] <= d[:, 0] + d[:, 1])


def test_torus_wavevector_selection(torus_table, torus_triads):
    lab = torus_table.labels[:, :2]
    for idx in (torus_triads.product_index, torus_triads.advection_index):
        for i, j, k in idx:
            ni, nj, nk = lab[i], lab[j], lab[k]
            ok = any(
                not np.any(a * ni + b * nj + c * nk)
                for a in (1, -1)
                for b in (1, -1)
                for c in (1, -1)
            )
            assert ok


@pytest.mark.parametrize(
    "q,r",
    [((1, 0), (0, 1)), ((1, 1), (1, -1)), ((2, 0), (1, 1)), ((1, 2), (0, 1))],
)
def test_torus_jacobian_closed_form(torus_table, q, r):
    """J(E_q, E_r) = -4 pi^2 (q_y r_x - q_x r_y) E_{q+r} for complex exponentials E_n."""
    basis = make_basis(torus_table, 20)
    X, Y = basis.X, basis.Y

    def E(n):
        return np.exp(2j * np.pi * (n[0] * X + n[1] * Y))

    def grad(n):
        e = E(n)
        return 2j * np.pi * n[0] * e, 2j * np.pi * n[1] * e

    qa, qb = grad(q)
    ra, rb = grad(r)
    jac = qb * ra - qa * rb
    cross = q[1] * r[0] - q[0] * r[1]
    np.testing.assert_allclose(jac, -4 * np.pi**2 * cross * E((q[0] + r[0], q[1] + r[1])), atol=1e-9)


def test_torus_advection_against_real_modes(torus_table, torus_triads):
    """Real cos/sin coupling of (1,0) and (0,1) into (1,1) and (1,-1)."""
    basis = make_basis(torus_table, 16)
    i = torus_mode(torus_table, 1, 1, COS)
    j = torus_mode(torus_table, 1, 0, COS)
    k = torus_mode(torus_table, 0, 1, COS)
    eye = np.eye(torus_table.n_modes)
    val = basis.integrate(basis.values(eye[i]) * basis.jacobian(eye[j], eye[k]))
    assert torus_triads.advection(i, j, k) == pytest.approx(val, abs=1e-12)
    assert abs(val) > 1.0


def test_multiply_and_advect_match_grid(backend):
    table, triads = backend
    basis = make_basis(table)
    rng = np.random.default_rng(7)
    f, g = rng.standard_normal((2, table.n_modes))
    np.testing.assert_allclose(triads.multiply(f, g), basis.analyze(basis.values(f) * basis.values(g)), atol=1e-10)
    np.testing.assert_allclose(triads.advect(f, g), basis.analyze(basis.jacobian(f, g)), atol=1e-9)


def test_advect_batches(backend):
    table, triads = backend
    rng = np.random.default_rng(8)
    F, G = rng.standard_normal((2, 4, table.n_modes))
    batched = triads.advect(F, G)
    for b in range(4):
        np.testing.assert_allclose(batched[b], triads.advect(F[b], G[b]), atol=1e-12)


def test_harmonic_advection_torus(torus_table, torus_triads):
    basis = make_basis(torus_table)
    eye = np.eye(torus_table.n_modes)
    Ga, Gb = basis.gradient(eye)
    V = basis.values(eye)
    for h, G in enumerate((Ga, Gb)):
        ref = (G * basis.weights) @ V.T
        np.testing.assert_allclose(torus_triads.harmonic_advection[h], ref, atol=1e-10)


def test_sphere_has_no_harmonic_advection(sphere_triads):
    assert sphere_triads.harmonic_advection.shape[0] == 0


def test_triad_assembly_is_deterministic(sphere_table, sphere_triads):
    again = build_triads(sphere_table)
    np.testing.assert_array_equal(again.advection_index, sphere_triads.advection_index)
    np.testing.assert_array_equal(again.advection_values, sphere_triads.advection_values)
    np.testing.assert_array_equal(again.product_values, sphere_triads.product_values)


# ---------------------------------------------------------------- cache

@pytest.mark.parametrize("kind,cutoff", [("torus", 2 * math.pi * 2.3), ("sphere", 6.0)])
def test_cache_hit_is_bit_identical(tmp_path, kind, cutoff):
    config = ManifoldConfig(kind, cutoff)
    t1, tr1, path, hit = cache.load_or_build(config, root=str(tmp_path))
    assert not hit
    raw = open(path, "rb").read()
    t2, tr2, path2, hit2 = cache.load_or_build(config, root=str(tmp_path))
    assert hit2 and path2 == path
    assert open(path, "rb").read() == raw
    for name in ("product_index", "product_values", "advection_index", "advection_values", "harmonic_advection"):
        a, b = getattr(tr1, name), getattr(tr2, name)
        assert a.dtype == b.dtype and a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(t1.labels, t2.labels)
    # a fresh assembly writes the same bytes
    fresh = tmp_path / "fresh.mnsc"
    cache.save(str(fresh), *build_fresh(config))
    assert fresh.read_bytes() == raw


def build_fresh(config):
    table = build_spectrum(config)
    return table, build_triads(table)


def test_cache_variant_is_reapplied(tmp_path):
    cache.load_or_build(ManifoldConfig("sphere", 4.0, "hodge"), root=str(tmp_path))
    table, _, _, hit = cache.load_or_build(ManifoldConfig("sphere", 4.0, "deformation"), root=str(tmp_path))
    assert hit
    assert table.config.laplacian_variant == "deformation"


def test_cache_rejects_bad_magic(tmp_path):
    bad = tmp_path / "x.mnsc"
    bad.write_bytes(b"not a cache file")
    with pytest.raises(Exception):
        cache.load(str(bad))


def test_cache_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cache.ENV_VAR, str(tmp_path))
    assert cache.default_cache_root() == str(tmp_path)
    _, _, path, _ = cache.load_or_build(ManifoldConfig("sphere", 3.0))
    assert path.startswith(str(tmp_path))


def test_cache_key_distinguishes_cutoff():
    a = cache.cache_key(ManifoldConfig("sphere", 3.0), 8)
    b = cache.cache_key(ManifoldConfig("sphere", 3.0000001), 8)
    c = cache.cache_key(ManifoldConfig("sphere", 3.0), 10)
    assert len({a, b, c}) == 3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_advection_antisymmetry_on_random_fields(seed):
    table = build_spectrum(ManifoldConfig("sphere", 4.0))
    triads = _SMALL_TRIADS.setdefault("s", build_triads(table))
    rng = np.random.default_rng(seed)
    f, g, h = rng.standard_normal((3, table.n_modes))
    # <h, J(f, g)> = -<g, J(f, h)>: total antisymmetry of the stored couplings
    assert h @ triads.advect(f, g) == pytest.approx(-(g @ triads.advect(f, h)), abs=1e-10)
    assert g @ triads.advect(f, g) == pytest.approx(0.0, abs=1e-10)


_SMALL_TRIADS = {}

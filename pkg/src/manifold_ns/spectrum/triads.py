"""Triad coupling tensors.

``product[i, j, k] = int e_i e_j e_k`` is fully symmetric and
``advection[i, j, k] = int e_i J(e_j, e_k)`` is fully antisymmetric
(J(b, c) = <curl b, grad c> is antisymmetric and curl b is divergence-free,
so integrating by parts moves the gradient between any two slots). Only the
canonical entries (``i <= j <= k`` resp. ``i < j < k``) are stored; every
other entry follows by permutation, so the symmetries hold exactly.
"""

import itertools
import math

import numpy as np
import scipy.sparse as sp

from .basis import default_degree
from .table import COS, SIN, CONST

_DROP = 1e-13

_EVEN_PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
_ODD_PERMS = ((0, 2, 1), (2, 1, 0), (1, 0, 2))


class TriadTensor:
    """Sparse triad couplings for one :class:`SpectrumTable`.

    Parameters
    ----------
    table : SpectrumTable
    product_index, product_values : canonical ``i <= j <= k`` entries
    advection_index, advection_values : canonical ``i < j < k`` entries
    harmonic_advection : ndarray, shape (b1, n_modes, n_modes)
        ``[h, j, k] = int e_k <H_h, grad e_j>``.
    degree : int
        Quadrature degree used (sphere) or that would be needed (torus).
    """

    def __init__(self, table, product_index, product_values, advection_index,
                 advection_values, harmonic_advection, degree):
        self.table = table
        self.product_index = np.asarray(product_index, dtype=np.int64).reshape(-1, 3)
        self.product_values = np.asarray(product_values, dtype=np.float64)
        self.advection_index = np.asarray(advection_index, dtype=np.int64).reshape(-1, 3)
        self.advection_values = np.asarray(advection_values, dtype=np.float64)
        self.harmonic_advection = np.asarray(harmonic_advection, dtype=np.float64)
        self.degree = int(degree)
        for arr in (self.product_index, self.product_values, self.advection_index,
                    self.advection_values, self.harmonic_advection):
            arr.setflags(write=False)
        self._lookup = None
        self._adv_matrix = None
        self._adv_half = None
        self._prod_matrix = None

    @property
    def n_modes(self):
        return self.table.n_modes

    @property
    def nnz(self):
        """Number of stored canonical entries ``(product, advection)``."""
        return self.product_values.size, self.advection_values.size

    # -- entry access ---------------------------------------------------
    def _build_lookup(self):
        prod = {tuple(t): v for t, v in zip(self.product_index.tolist(), self.product_values)}
        adv = {tuple(t): v for t, v in zip(self.advection_index.tolist(), self.advection_values)}
        self._lookup = (prod, adv)

    def product(self, i, j, k):
        if self._lookup is None:
            self._build_lookup()
        return float(self._lookup[0].get(tuple(sorted((i, j, k))), 0.0))

    def advection(self, i, j, k):
        if self._lookup is None:
            self._build_lookup()
        t = (i, j, k)
        if len(set(t)) < 3:
            return 0.0
        order = sorted(range(3), key=lambda a: t[a])
        key = tuple(t[a] for a in order)
        sign = 1.0 if tuple(order) in _EVEN_PERMS else -1.0
        return sign * float(self._lookup[1].get(key, 0.0))

    # -- contractions ---------------------------------------------------
    def _expand(self, index, values, antisymmetric):
        M = self.n_modes
        rows, cols, vals = [], [], []
        for perm in _EVEN_PERMS:
            rows.append(index[:, perm[0]])
            cols.append(index[:, perm[1]] * M + index[:, perm[2]])
            vals.append(values)
        for perm in _ODD_PERMS:
            rows.append(index[:, perm[0]])
            cols.append(index[:, perm[1]] * M + index[:, perm[2]])
            vals.append(-values if antisymmetric else values)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        if not antisymmetric:
            # symmetric expansion repeats entries with equal indices
            key = rows * (M * M) + cols
            key, first = np.unique(key, return_index=True)
            rows, cols, vals = rows[first], cols[first], vals[first]
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(M, M * M))
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    @property
    def advection_matrix(self):
        """CSR matrix ``A`` with ``A[i, j*M + k] = advection(i, j, k)``."""
        if self._adv_matrix is None:
            self._adv_matrix = self._expand(self.advection_index, self.advection_values, True)
        return self._adv_matrix

    @property
    def advection_pairs(self):
        """Compressed contraction data ``(matrix, j, k)``.

        ``matrix[i, p] = advection(i, j[p], k[p])`` over the pairs ``j < k``
        that occur; contracting it with ``psi_j omega_k - psi_k omega_j``
        equals the full contraction with half the nonzeros.
        """
        if self._adv_half is None:
            M = self.n_modes
            idx, val = self.advection_index, self.advection_values
            rows, cols, vals = [], [], []
            # (i,j,k) +, (j,i,k) -, (k,i,j) +
            for (a, b, c), sign in (((0, 1, 2), 1.0), ((1, 0, 2), -1.0), ((2, 0, 1), 1.0)):
                rows.append(idx[:, a])
                cols.append(idx[:, b] * M + idx[:, c])
                vals.append(sign * val)
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            pairs, inverse = np.unique(cols, return_inverse=True)
            mat = sp.csr_matrix((np.concatenate(vals), (rows, inverse)), shape=(M, pairs.size))
            mat.sum_duplicates()
            mat.sort_indices()
            j, k = np.divmod(pairs, M)
            self._adv_half = (mat, j, k)
        return self._adv_half

    @property
    def product_matrix(self):
        """CSR matrix with ``[i, j*M + k] = product(i, j, k)``."""
        if self._prod_matrix is None:
            self._prod_matrix = self._expand(self.product_index, self.product_values, False)
        return self._prod_matrix

    @staticmethod
    def _outer(a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        return (a[..., :, None] * b[..., None, :]).reshape(a.shape[:-1] + (-1,))

    def advect(self, psi, omega):
        """Coefficients of J(psi, omega): ``sum_jk advection(i, j, k) psi_j omega_k``.

        Leading batch dimensions are supported.
        """
        psi = np.asarray(psi, dtype=np.float64)
        omega = np.asarray(omega, dtype=np.float64)
        mat, j, k = self.advection_pairs
        if psi.ndim == 1:
            return mat @ (psi[j] * omega[k] - psi[k] * omega[j])
        lead = psi.shape[:-1]
        pt = psi.reshape(-1, psi.shape[-1]).T
        wt = omega.reshape(-1, omega.shape[-1]).T
        anti = pt[j] * wt[k] - pt[k] * wt[j]
        return (mat @ anti).T.reshape(lead + (self.n_modes,))

    def multiply(self, f, g):
        """Coefficients of the retained part of the product ``f g``."""
        kron = self._outer(f, g)
        if kron.ndim == 1:
            return self.product_matrix @ kron
        return (self.product_matrix @ kron.reshape(-1, kron.shape[-1]).T).T.reshape(
            kron.shape[:-1] + (self.n_modes,)
        )

    def harmonic_advect(self, harmonic, omega):
        """Coefficients of <sum_h harmonic_h H_h, grad omega>."""
        if self.harmonic_advection.shape[0] == 0:
            return np.zeros_like(np.asarray(omega, dtype=np.float64))
        return np.einsum("h,hjk,...j->...k", np.asarray(harmonic, dtype=np.float64),
                         self.harmonic_advection, omega)

    def __repr__(self):
        p, a = self.nnz
        return f"TriadTensor(kind={self.table.kind!r}, n_modes={self.n_modes}, product_nnz={p}, advection_nnz={a})"


def build_triads(table, degree=None):
    """Assemble all nonzero triad couplings among the modes of ``table``.

    Torus entries are closed form; sphere entries use exact Gauss-Legendre x
    uniform-longitude quadrature of degree ``>= 3 lmax + 2``.
    """
    if degree is None:
        degree = default_degree(table)
    if table.kind == "torus":
        return _torus_triads(table, degree)
    return _sphere_triads(table, max(int(degree), default_degree(table)))


# ----------------------------------------------------------------------
# torus

def _torus_alphas(kind):
    """Coefficients of a real mode on exp(+i theta), exp(-i theta)."""
    r = 1.0 / math.sqrt(2.0)
    a = np.zeros((kind.size, 2), dtype=np.complex128)
    a[kind == COS] = (r, r)
    a[kind == SIN] = (-1j * r, 1j * r)
    a[kind == CONST] = (1.0, 0.0)
    return a


def _canonical_rep(v):
    """Half-plane representative of +-v (rows of an (n, 2) int array)."""
    flip = (v[:, 0] < 0) | ((v[:, 0] == 0) & (v[:, 1] < 0))
    out = v.copy()
    out[flip] *= -1
    return out


def _torus_triads(table, degree):
    lab = table.labels
    M = table.n_modes
    nvec = lab[:, :2]
    kind = lab[:, 2]
    alpha = _torus_alphas(kind)
    nmax = table.lmax
    span = 2 * nmax
    lookup = np.full((2 * span + 1, 2 * span + 1), -1, dtype=np.int64)
    cos_ids = np.flatnonzero(kind == COS)
    lookup[nvec[cos_ids, 0] + span, nvec[cos_ids, 1] + span] = cos_ids

    nc = np.arange(1, M)
    J, K = np.meshgrid(nc, nc, indexing="ij")
    mask = J <= K
    J, K = J[mask], K[mask]
    cand_i, cand_j, cand_k = [], [], []
    for sgn in (1, -1):
        rep = _canonical_rep(nvec[J] + sgn * nvec[K])
        ok = (np.abs(rep) <= span).all(axis=1)
        rid = np.full(J.size, -1)
        rid[ok] = lookup[rep[ok, 0] + span, rep[ok, 1] + span]
        hit = rid >= 0
        for off in (0, 1):
            cand_i.append(rid[hit] + off)
            cand_j.append(J[hit])
            cand_k.append(K[hit])
    I = np.concatenate(cand_i)
    J = np.concatenate(cand_j)
    K = np.concatenate(cand_k)
    trip = np.sort(np.stack([I, J, K], axis=1), axis=1)
    trip = np.unique(trip, axis=0)

    prod_vals = _torus_values(trip, nvec, alpha, advection=False)
    adv_trip = trip[(trip[:, 0] < trip[:, 1]) & (trip[:, 1] < trip[:, 2])]
    adv_vals = _torus_values(adv_trip, nvec, alpha, advection=True)

    # couplings with the constant mode: int 1 e_j e_k = delta_jk
    const = np.stack([np.zeros(M, dtype=np.int64), np.arange(M), np.arange(M)], axis=1)
    prod_idx = np.concatenate([const, trip])
    prod_vals = np.concatenate([np.ones(M), prod_vals])
    keep = np.abs(prod_vals) > _DROP
    prod_idx, prod_vals = _sorted(prod_idx[keep], prod_vals[keep])
    keep = np.abs(adv_vals) > _DROP
    adv_idx, adv_vals = _sorted(adv_trip[keep], adv_vals[keep])

    hadv = _torus_harmonic(table)
    return TriadTensor(table, prod_idx, prod_vals, adv_idx, adv_vals, hadv, degree)


def _torus_values(trip, nvec, alpha, advection):
    ni, nj, nk = (nvec[trip[:, a]] for a in range(3))
    ai, aj, ak = (alpha[trip[:, a]] for a in range(3))
    total = np.zeros(trip.shape[0], dtype=np.complex128)
    for si, sj, sk in itertools.product((0, 1), repeat=3):
        ti, tj, tk = (1 - 2 * si), (1 - 2 * sj), (1 - 2 * sk)
        res = ti * ni + tj * nj + tk * nk
        hit = (res == 0).all(axis=1)
        coef = ai[:, si] * aj[:, sj] * ak[:, sk]
        if advection:
            q = tj * nj
            r = tk * nk
            # J(E_q, E_r) = (2 pi i)^2 (q_y r_x - q_x r_y) E_{q+r}
            cross = q[:, 1] * r[:, 0] - q[:, 0] * r[:, 1]
            coef = coef * (-4.0 * math.pi**2) * cross
        total += np.where(hit, coef, 0.0)
    return total.real


def _torus_harmonic(table):
    """``[h, j, k] = int e_k <H_h, grad e_j>`` with H_0 = d/dx, H_1 = d/dy."""
    lab = table.labels
    M = table.n_modes
    out = np.zeros((2, M, M))
    for j in range(1, M):
        nx, ny, kind = lab[j]
        # d/dx sqrt2 cos = -2 pi n_x sqrt2 sin ; d/dx sqrt2 sin = 2 pi n_x sqrt2 cos
        partner = j + 1 if kind == COS else j - 1
        sign = -1.0 if kind == COS else 1.0
        out[0, j, partner] = sign * 2.0 * math.pi * nx
        out[1, j, partner] = sign * 2.0 * math.pi * ny
    return out


def _sorted(index, values):
    if index.size == 0:
        return index.reshape(0, 3), values
    order = np.lexsort((index[:, 2], index[:, 1], index[:, 0]))
    return index[order], values[order]


# ----------------------------------------------------------------------
# sphere

def _phi_table(L):
    """``T[a, b, c] = int_0^{2 pi} t_a t_b t_c dphi`` for orders in [-L, L]."""
    n = 3 * L + 2
    phi = 2.0 * np.pi * np.arange(n) / n
    m = np.arange(-L, L + 1)[:, None]
    t = np.where(m > 0, math.sqrt(2.0) * np.cos(m * phi),
                 np.where(m < 0, math.sqrt(2.0) * np.sin(-m * phi), 1.0))
    T = np.einsum("ap,bp,cp->abc", t, t, t) * (2.0 * np.pi / n)
    T[np.abs(T) < 1e-12] = 0.0
    return T


def _sphere_triads(table, degree):
    from .basis import legendre_table

    L = table.lmax
    n_lat = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n_lat)
    s = np.sqrt(1.0 - x * x)
    P, dP = legendre_table(L, x)
    T = _phi_table(L)
    first = np.array([l * l for l in range(L + 1)])

    def rows(arr, l):
        m = np.abs(np.arange(-l, l + 1))
        return arr[m, l]

    Pl = [rows(P, l) for l in range(L + 1)]
    dPl = [rows(dP, l) for l in range(L + 1)]
    Psl = [rows(P, l) / s for l in range(L + 1)]
    # d/dphi t_m = sigma(m) |m| t_{-m}
    dsig = [np.array([(-1.0 if m > 0 else 1.0 if m < 0 else 0.0) * abs(m)
                      for m in range(-l, l + 1)]) for l in range(L + 1)]

    prod_i, prod_v, adv_i, adv_v = [], [], [], []
    for la in range(L + 1):
        for lb in range(la, L + 1):
            for lc in range(lb, min(L, la + lb) + 1):
                ma = np.arange(-la, la + 1)
                mb = np.arange(-lb, lb + 1)
                mc = np.arange(-lc, lc + 1)
                ia = first[la] + la + ma
                ib = first[lb] + lb + mb
                ic = first[lc] + lc + mc
                IA, IB, IC = np.meshgrid(ia, ib, ic, indexing="ij")
                Pa = Pl[la] * w
                if (la + lb + lc) % 2 == 0:
                    phi = T[np.ix_(ma + L, mb + L, mc + L)]
                    lat = np.einsum("ax,bx,cx->abc", Pa, Pl[lb], Pl[lc])
                    val = lat * phi
                    keep = (phi != 0) & (IA <= IB) & (IB <= IC) & (np.abs(val) > _DROP)
                    prod_i.append(np.stack([IA[keep], IB[keep], IC[keep]], axis=1))
                    prod_v.append(val[keep])
                elif la > 0 and lc < la + lb:
                    # int e_a [g_phi(b) g_theta(c) - g_theta(b) g_phi(c)]
                    phi1 = T[np.ix_(ma + L, -mb + L, mc + L)] * dsig[lb][None, :, None]
                    phi2 = T[np.ix_(ma + L, mb + L, -mc + L)] * dsig[lc][None, None, :]
                    val = np.zeros(IA.shape)
                    if np.any(phi1):
                        val += np.einsum("ax,bx,cx->abc", Pa, Psl[lb], dPl[lc]) * phi1
                    if np.any(phi2):
                        val -= np.einsum("ax,bx,cx->abc", Pa, dPl[lb], Psl[lc]) * phi2
                    keep = (IA < IB) & (IB < IC) & (np.abs(val) > _DROP)
                    adv_i.append(np.stack([IA[keep], IB[keep], IC[keep]], axis=1))
                    adv_v.append(val[keep])
    prod_idx, prod_vals = _sorted(np.concatenate(prod_i), np.concatenate(prod_v))
    if adv_i:
        adv_idx, adv_vals = _sorted(np.concatenate(adv_i), np.concatenate(adv_v))
    else:
        adv_idx, adv_vals = np.zeros((0, 3), dtype=np.int64), np.zeros(0)
    hadv = np.zeros((0, table.n_modes, table.n_modes))
    return TriadTensor(table, prod_idx, prod_vals, adv_idx, adv_vals, hadv, degree)

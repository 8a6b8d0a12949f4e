"""Exact cellwise propagation of ``J u' = z H u``.

With ``J = [[0, -1], [1, 0]]`` the system reads ``u' = z J^{-1} H u``.  For a
constant symmetric ``M`` the generator ``G = J^{-1} M`` has trace zero and
``G^2 = -det(M) I``, so

    exp(z d G) = cos(k) I + d sinc(k) z G,    k = z d sqrt(det M).

Rank-one cells give exactly ``I + z d G``.  Every routine accepts a scalar
or a 1-d array of spectral parameters and broadcasts over it.

On the left half line the columns of the transfer matrix are the solutions
evaluated at ``x = -N``; stepping leftwards is the same as stepping
rightwards with ``-z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, NonContractionError
from .hamiltonian import HalfLineHamiltonian, PSDMatrix2

J = np.array([[0.0, -1.0], [1.0, 0.0]])
J_INV = np.array([[0.0, 1.0], [-1.0, 0.0]])

TOL_DET = 1e-10
_EPS = np.finfo(float).eps
_SERIES_W = 1e-8  # |k|^2 below this uses the Taylor polynomial
_BLOCK = 4096  # cells per vectorized block


def generator(M: PSDMatrix2) -> np.ndarray:
    """``J^{-1} M``."""
    return np.array([[M.a12, M.a22], [-M.a11, -M.a12]])


def _effective_det(a11, a12, a22):
    """Determinant with rank-one cells snapped to exactly zero."""
    det = a11 * a22 - a12 * a12
    tr = a11 + a22
    return np.where(det <= 8.0 * _EPS * tr * tr, 0.0, det)


def _cos_sinc(w):
    """``cos(sqrt(w))`` and ``sin(sqrt(w))/sqrt(w)`` for complex ``w``."""
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < _SERIES_W
    k = np.sqrt(np.where(small, 1.0, w))
    with np.errstate(over="ignore", invalid="ignore"):  # huge |Im k| overflows to inf, as it should
        c = np.where(small, 1 - w / 2 + w * w / 24 - w ** 3 / 720, np.cos(k))
        s = np.where(small, 1 - w / 6 + w * w / 120 - w ** 3 / 5040, np.sin(k) / k)
    return c, s


def _propagators(a11, a12, a22, d, z):
    """Stack of cell propagators, shape ``(n_cells, n_z, 2, 2)``."""
    a11, a12, a22, d = (np.asarray(v, dtype=float)[:, None] for v in (a11, a12, a22, d))
    z = np.asarray(z, dtype=complex)[None, :]
    det = _effective_det(a11, a12, a22)
    zd = z * d
    c, s = _cos_sinc(zd * zd * det)
    f = zd * s
    E = np.empty(np.broadcast(c, a11).shape + (2, 2), dtype=complex)
    E[..., 0, 0] = c + f * a12
    E[..., 0, 1] = f * a22
    E[..., 1, 0] = -f * a11
    E[..., 1, 1] = c - f * a12
    return E


def cell_propagator(M: PSDMatrix2, delta: float, z):
    """``exp(z delta J^{-1} M)``; shape ``(2, 2)`` or ``(len(z), 2, 2)``."""
    if not delta > 0:
        raise DomainError(f"cell length must be positive, got {delta!r}")
    scalar = np.ndim(z) == 0
    E = _propagators([M.a11], [M.a12], [M.a22], [delta], np.atleast_1d(z))[0]
    return E[0] if scalar else E


def _segment_arrays(segs):
    d = np.array([s[1] for s in segs])
    a11 = np.array([s[2].a11 for s in segs])
    a12 = np.array([s[2].a12 for s in segs])
    a22 = np.array([s[2].a22 for s in segs])
    return a11, a12, a22, d


def _advance(T, segs, z):
    """Apply the propagators of ``segs`` to ``T`` one cell at a time.

    Accumulating sequentially matters: products of two long partial
    products lose far more accuracy than multiplying in one near-unipotent
    cell after another when the entries grow polynomially along the line.
    """
    if not segs:
        return T
    a11, a12, a22, d = _segment_arrays(segs)
    for k in range(0, len(d), _BLOCK):
        sl = slice(k, k + _BLOCK)
        for E in _propagators(a11[sl], a12[sl], a22[sl], d[sl], z):
            T = E @ T
    return T


def pull_back(H: HalfLineHamiltonian, N: float, z, g) -> np.ndarray:
    """``T(N)^{-1} g`` for vectors ``g`` of shape ``(len(z), 2)``, up to scale.

    The vectors are carried backwards one cell at a time and renormalized,
    which keeps the solution that decays forwards accurate where forward
    shooting would lose it.  ``H`` must be a right half line.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    g = np.array(g, dtype=complex)
    a11, a12, a22, d = _segment_arrays(H.segments(0.0, N))
    for k in range(len(d), 0, -_BLOCK):
        sl = slice(max(0, k - _BLOCK), k)
        E = _propagators(a11[sl], a12[sl], a22[sl], d[sl], z)
        for Ek in E[::-1]:  # det = 1, so the inverse is the adjugate
            g0 = Ek[:, 1, 1] * g[:, 0] - Ek[:, 0, 1] * g[:, 1]
            g1 = Ek[:, 0, 0] * g[:, 1] - Ek[:, 1, 0] * g[:, 0]
            nrm = np.maximum(np.abs(g0), np.abs(g1))
            g[:, 0], g[:, 1] = g0 / nrm, g1 / nrm
    return g


def _identity_stack(n):
    return np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy()


class Propagator:
    """Transfer matrices of one Hamiltonian at a fixed array of ``z``.

    Calls with increasing ``N`` reuse the work already done on the explicit
    cells.  Beyond them a repeat-last tail costs one cell and a periodic
    tail a matrix power of the monodromy.
    """

    def __init__(self, H: HalfLineHamiltonian, z):
        self.H = H
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        self.z = -z if H.side == "left" else z
        self._N = 0.0
        self._T = _identity_stack(len(z))
        self._tail = None

    def restrict(self, idx) -> None:
        """Keep only the spectral parameters at positions ``idx``."""
        self.z = self.z[idx]
        self._T = self._T[idx]
        if self._tail is not None:
            self._tail = tuple(t[idx] for t in self._tail)

    def _explicit(self, N):
        if N < self._N:
            self._N, self._T = 0.0, _identity_stack(len(self.z))
        if N > self._N:
            self._T = _advance(self._T, self.H.segments(self._N, N), self.z)
            self._N = N
        return self._T

    def __call__(self, N: float) -> np.ndarray:
        if not N >= 0:
            raise DomainError(f"N must be >= 0, got {N!r}")
        H = self.H
        L = H.length
        if N <= L:
            return self._explicit(N).copy()
        if H.extension == "repeat-last":
            TL = self._explicit(L)
            return _advance(TL, [(L, N - L, H.cells[-1].matrix)], self.z)
        lp, p = H.prefix_length, H.period
        if self._tail is None:
            n = len(self.z)
            pre = _advance(_identity_stack(n), H.segments(0.0, lp), self.z)
            mono = _advance(_identity_stack(n), H.segments(lp, L), self.z)
            self._tail = (pre, mono)
        pre, mono = self._tail
        k, r = divmod(N - lp, p)
        part = _advance(_identity_stack(len(self.z)), H._explicit_segments(lp, lp + r), self.z)
        return part @ np.linalg.matrix_power(mono, int(k)) @ pre


def transfer_batch(H: HalfLineHamiltonian, N: float, z) -> np.ndarray:
    """Transfer matrices ``T(N)`` for an array of spectral parameters."""
    return Propagator(H, z)(N)


@dataclass(frozen=True)
class TransferMatrix:
    """Fundamental matrix at ``x`` whose columns are ``u`` and ``v``."""

    matrix: np.ndarray
    x: float
    z: complex

    @property
    def t11(self):
        return self.matrix[0, 0]

    @property
    def t12(self):
        return self.matrix[0, 1]

    @property
    def t21(self):
        return self.matrix[1, 0]

    @property
    def t22(self):
        return self.matrix[1, 1]

    @property
    def u(self) -> np.ndarray:
        return self.matrix[:, 0]

    @property
    def v(self) -> np.ndarray:
        return self.matrix[:, 1]

    @property
    def det(self) -> complex:
        m = self.matrix
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    def apply(self, vec) -> np.ndarray:
        return self.matrix @ np.asarray(vec, dtype=complex)

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        return TransferMatrix(self.matrix @ other.matrix, self.x + other.x, self.z)


def transfer(H: HalfLineHamiltonian, N: float, z: complex) -> TransferMatrix:
    T = transfer_batch(H, N, [z])[0]
    x = -N if H.side == "left" else N
    return TransferMatrix(T, x, complex(z))


def wronskian(f, g) -> complex:
    """``W(f, g) = f1 g2 - f2 g1``."""
    return f[0] * g[1] - f[1] * g[0]


# ---------------------------------------------------------------------------
# Gram matrices  K = int E(x)^* M E(x) dx


def _cvc(x):
    """``(1 - cos x) / x^2``."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0, 1.0, x)
    return np.where(np.abs(x) < 1e-4, 0.5 - x * x / 24, (1 - np.cos(safe)) / safe ** 2)


def _chc(y):
    """``(cosh y - 1) / y^2``."""
    y = np.asarray(y, dtype=float)
    safe = np.where(y == 0, 1.0, y)
    return np.where(np.abs(y) < 1e-4, 0.5 + y * y / 24, (np.cosh(safe) - 1) / safe ** 2)


def _gram_weights(kappa, d):
    """``int |C|^2``, ``int conj(C) S`` and ``int |S|^2`` over ``[0, d]``.

    ``C = cos(kappa x)`` and ``S = sin(kappa x)/kappa``.
    """
    kappa = np.asarray(kappa, dtype=complex)
    d = np.asarray(d, dtype=float)
    kd = kappa * d
    small = np.abs(kd) <= 1.0
    # double Taylor series (exact polynomial for kappa = 0)
    q = -(np.where(small, kappa, 0.0) ** 2)
    n = 11
    c = [q ** k / math.factorial(2 * k) for k in range(n)]
    s = [q ** k / math.factorial(2 * k + 1) for k in range(n)]
    i1 = i2 = i3 = 0
    for a in range(n):
        for b in range(n - a):
            e = 2 * (a + b)
            i1 = i1 + c[a] * np.conj(c[b]) * d ** (e + 1) / (e + 1)
            i2 = i2 + np.conj(c[a]) * s[b] * d ** (e + 2) / (e + 2)
            i3 = i3 + np.conj(s[a]) * s[b] * d ** (e + 3) / (e + 3)
    # closed form away from the origin
    k_big = np.where(small, 1.0, kappa)
    al, be = k_big.real * d, k_big.imag * d
    with np.errstate(over="ignore", invalid="ignore"):  # growth past double range stays inf
        shc = np.sinh(2 * be) / np.where(be == 0, 1.0, 2 * be)
        shc = np.where(be == 0, 1.0, shc)
        snc = np.sinc(2 * al / np.pi)
        j1 = 0.5 * d * (shc + snc)
        j3 = 0.5 * d * (shc - snc) / np.abs(k_big) ** 2
        j2 = d * (al * _cvc(2 * al) + 1j * be * _chc(2 * be)) / k_big
    return (np.where(small, i1, j1), np.where(small, i2, j2), np.where(small, i3, j3))


def _grams(a11, a12, a22, d, z):
    """Stack of cell Gram matrices, shape ``(n_cells, n_z, 2, 2)``."""
    a11, a12, a22, d = (np.asarray(v, dtype=float)[:, None] for v in (a11, a12, a22, d))
    z = np.asarray(z, dtype=complex)[None, :]
    det = _effective_det(a11, a12, a22)
    kappa = z * np.sqrt(det)
    i1, i2, i3 = _gram_weights(kappa, d)
    shape = np.broadcast(i1, a11).shape
    M = np.zeros(shape + (2, 2), dtype=complex)
    M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1] = a11, a12, a12, a22
    A = np.zeros_like(M)
    A[..., 0, 0], A[..., 0, 1] = z * a12, z * a22
    A[..., 1, 0], A[..., 1, 1] = -z * a11, -z * a12
    MA = M @ A
    AhM = np.conj(np.swapaxes(A, -1, -2)) @ M
    AhMA = AhM @ A
    w = lambda v: np.asarray(v)[..., None, None]
    return w(i1) * M + w(i2) * MA + w(np.conj(i2)) * AhM + w(i3) * AhMA


def cell_gram(M: PSDMatrix2, delta: float, z):
    """``int_0^delta E(x)^* M E(x) dx`` with ``E`` the cell propagator."""
    scalar = np.ndim(z) == 0
    K = _grams([M.a11], [M.a12], [M.a22], [delta], np.atleast_1d(z))[0]
    return K[0] if scalar else K


def transfer_and_gram(H: HalfLineHamiltonian, N: float, z):
    """``T(N)`` and ``K(N) = int_0^N T^* H T`` for an array of ``z``.

    ``int_0^N f^* H f = f(0)^* K f(0)`` for any solution ``f``.
    """
    if not N >= 0:
        raise DomainError(f"N must be >= 0, got {N!r}")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    nz = len(z)
    T = _identity_stack(nz)
    K = np.zeros((nz, 2, 2), dtype=complex)
    segs = H.segments(0.0, N)
    if not segs:
        return T, K
    a11, a12, a22, d = _segment_arrays(segs)
    if H.side == "left":
        # the mirrored cells R M R carry the Gram of the leftward solution
        a12 = -a12
    for k in range(0, len(d), _BLOCK):
        sl = slice(k, k + _BLOCK)
        E = _propagators(a11[sl], a12[sl], a22[sl], d[sl], z)
        G = _grams(a11[sl], a12[sl], a22[sl], d[sl], z)
        for Ek, Gk in zip(E, G):
            K = K + np.conj(np.swapaxes(T, -1, -2)) @ Gk @ T
            T = Ek @ T
    if H.side == "left":
        R = np.diag([1.0, -1.0])
        T = R @ T @ R
        K = R @ K @ R
    return T, K


# ---------------------------------------------------------------------------
# identities


def greens_identity_residual(H: HalfLineHamiltonian, N: float, z: complex, m: complex) -> float:
    """Scaled residual of Green's identity for ``f = u + m v``.

    The identity ``W_N(conj f, f) = 2i Im m - 2i Im z int_0^N f^* H f`` holds
    exactly for the continuous problem; the returned number is
    ``|lhs - rhs|`` divided by ``max(1, |W_N|, 2|Im m|, 2|Im z| int f^*Hf)``.
    """
    if not N > 0:
        raise DomainError("N must be positive")
    if complex(z).imag == 0:
        raise DomainError("Green's identity check needs Im z != 0")
    T, K = transfer_and_gram(H, N, [z])
    f0 = np.array([1.0, m], dtype=complex)
    f = T[0] @ f0
    energy = float(np.real(np.conj(f0) @ K[0] @ f0))
    W = wronskian(np.conj(f), f)
    lhs = W - 2j * complex(m).imag + 2j * complex(z).imag * energy
    scale = max(1.0, abs(W), 2 * abs(complex(m).imag), 2 * abs(complex(z).imag) * energy)
    return abs(lhs) / scale


@dataclass(frozen=True)
class EnergyIntegrals:
    vHv: complex
    im_uHv: float
    N: float
    uHv: complex = 0j
    uHu: float = 0.0


def energy_integrals(H: HalfLineHamiltonian, N: float, z: complex) -> EnergyIntegrals:
    """``int_0^N v^*Hv`` and ``int_0^N Im(u^* H v)`` from the cellwise Gram matrices."""
    if not N > 0:
        raise DomainError("N must be positive")
    _, K = transfer_and_gram(H, N, [z])
    K = K[0]
    return EnergyIntegrals(
        vHv=complex(K[1, 1]), im_uHv=float(K[0, 1].imag), N=float(N),
        uHv=complex(K[0, 1]), uHu=float(K[0, 0].real),
    )


# ---------------------------------------------------------------------------
# Picard iteration oracle


def _poly_int(c):
    """Antiderivative (zero at 0) of coefficients ``c[k] s^k``, axis 0."""
    out = np.zeros((c.shape[0] + 1,) + c.shape[1:], dtype=complex)
    out[1:] = c / np.arange(1, c.shape[0] + 1).reshape((-1,) + (1,) * (c.ndim - 1))
    return out


def _poly_eval(c, s):
    return sum(c[k] * s ** k for k in range(c.shape[0]))


def _poly_supnorm_bound(c, d):
    """Upper bound of ``max_{0<=s<=d} ||p(s)||_inf``."""
    return float(np.max(np.sum(np.abs(c) * d ** np.arange(c.shape[0])[:, None], axis=0)))


MAX_PICARD_DEGREE = 24


def picard_solve(H: HalfLineHamiltonian, x: float, z: complex, u0, max_iter: int = MAX_PICARD_DEGREE,
                 tol: float = 1e-13) -> np.ndarray:
    """Fixed point of ``T u(t) = u0 - z J int_0^t H u`` evaluated at ``x``.

    Iterates are kept as exact polynomials on each cell, so every integral
    is exact.  The iteration is only accepted in the contraction regime
    ``|z| int_0^x ||H|| < 1``; outside it the caller has to split the
    interval.  Polynomial degree equals the iteration count and is capped
    at ``MAX_PICARD_DEGREE``.
    """
    if not x >= 0:
        raise DomainError("x must be >= 0")
    u0 = np.asarray(u0, dtype=complex)
    if x == 0:
        return u0.copy()
    if max_iter > MAX_PICARD_DEGREE:
        raise NonContractionError(f"max_iter above the degree cap {MAX_PICARD_DEGREE}; subdivide instead")
    z = complex(z)
    if H.side == "left":
        raise DomainError("picard_solve works on right half-line Hamiltonians")
    segs = H.segments(0.0, x)
    q = abs(z) * sum(d * np.linalg.norm(m.as_array(), 2) for _, d, m in segs)
    if q >= 1:
        parts = math.ceil(2 * q)
        raise NonContractionError(
            f"|z| * int ||H|| = {q:.3g} >= 1 on [0, {x}]; split into at least {parts} pieces "
            "and chain the solutions"
        )
    zJ = z * J
    polys = [np.zeros((1, 2), dtype=complex) + u0 for _ in segs]  # u_0 constant
    prev_delta = math.inf
    for _ in range(max_iter):
        new = []
        acc = np.zeros(2, dtype=complex)
        for (s0, d, m), p in zip(segs, polys):
            integrand = p @ m.as_array().T  # rows: coefficients of H u
            prim = _poly_int(integrand)
            prim[0] += acc
            poly = -prim @ zJ.T
            poly[0] += u0
            new.append(poly)
            acc = _poly_eval(prim, d)
        delta = max(_poly_supnorm_bound(a - np.pad(b, ((0, a.shape[0] - b.shape[0]), (0, 0))), d)
                    for a, b, (_, d, _) in zip(new, polys, segs))
        polys = new
        if delta <= tol * max(1.0, float(np.max(np.abs(u0)))):
            _, d_last, _ = segs[-1]
            return _poly_eval(polys[-1], d_last)
        if delta > prev_delta and delta > 1e-8:
            raise NonContractionError("Picard differences grew; subdivide the interval")
        prev_delta = delta
    raise ConvergenceError(
        f"Picard iteration did not reach tol={tol} within {max_iter} iterations",
        partial=_poly_eval(polys[-1], segs[-1][1]),
    )


def picard_step(H: HalfLineHamiltonian, x: float, z: complex, u0, iterate=None) -> np.ndarray:
    """One application of the Picard map to the constant function ``u0``
    (or to ``iterate``, a callable), returned at ``x``.  Used as a hand check.
    """
    u0 = np.asarray(u0, dtype=complex)
    total = np.zeros(2, dtype=complex)
    for s0, d, m in H.segments(0.0, x):
        if iterate is None:
            total = total + d * (m.as_array() @ u0)
        else:
            ts, ws = np.polynomial.legendre.leggauss(20)
            pts = s0 + 0.5 * d * (ts + 1)
            total = total + 0.5 * d * sum(w * (m.as_array() @ iterate(t)) for t, w in zip(pts, ws))
    return u0 - complex(z) * (J @ total)

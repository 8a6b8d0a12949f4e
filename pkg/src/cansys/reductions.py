"""Schrödinger, Dirac and Jacobi problems as canonical systems.

Each reduction produces a piecewise-constant :class:`HalfLineHamiltonian`.
The module also carries independent oracles for the original problems
(a Riccati sweep for Schrödinger, a continued fraction for Jacobi) and a
report that compares both sides of the m-function correspondences.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DomainError, ReductionError, ValidationError
from .hamiltonian import HalfLineHamiltonian, HamiltonianCell, PSDMatrix2, normalize_trace
from .weyl import m_halfline_batch, m_on_interval

DEFAULT_CELLS_PER_PIECE = 64


def _pieces(cells, what: str) -> tuple:
    out = []
    for i, c in enumerate(cells):
        length, value = float(c[0]), float(c[1])
        if not (math.isfinite(length) and length > 0):
            raise ValidationError(f"{what} piece length must be positive", cell_index=i)
        if not math.isfinite(value):
            raise ValidationError(f"{what} value must be finite", cell_index=i)
        out.append((length, value))
    if not out:
        raise ValidationError(f"{what} needs at least one piece")
    return tuple(out)


@dataclass(frozen=True)
class SchrodingerProblem:
    """Piecewise-constant potential ``V`` given as ``(length, value)`` pieces.

    Beyond the last piece the potential keeps its last value.
    """

    cells: tuple

    def __post_init__(self):
        object.__setattr__(self, "cells", _pieces(self.cells, "potential"))

    @property
    def x_max(self) -> float:
        return sum(c[0] for c in self.cells)


@dataclass(frozen=True)
class DiracPotential:
    """Piecewise-constant ``W`` given as ``(length, value)`` pieces."""

    cells: tuple

    def __post_init__(self):
        object.__setattr__(self, "cells", _pieces(self.cells, "Dirac potential"))

    @property
    def x_max(self) -> float:
        return sum(c[0] for c in self.cells)

    def schrodinger_potential(self, orientation: str = "+") -> "SchrodingerProblem":
        """Regular part ``W^2`` of ``V = W^2 +- W'``; the jumps are handled by :meth:`jumps`."""
        return SchrodingerProblem(tuple((l, w * w) for l, w in self.cells))

    def jumps(self, orientation: str = "+") -> list:
        """Point masses ``(x_k, +-(W(x_k+) - W(x_k-)))`` of ``+-W'``."""
        sig = _sigma(orientation)
        out, x = [], 0.0
        for (l0, w0), (_, w1) in zip(self.cells, self.cells[1:]):
            x += l0
            if w1 != w0:
                out.append((x, sig * (w1 - w0)))
        return out


@dataclass(frozen=True)
class JacobiProblem:
    """Coefficients ``a(n) > 0`` and ``b(n)`` for ``n = 1 .. n_max``.

    Entries may be ints or :class:`fractions.Fraction` for exact arithmetic.
    The recursion reads ``a(n) u(n+1) + a(n-1) u(n-1) + b(n) u(n) = z u(n)``
    with ``a(0) = a0`` (default 1).
    """

    a: tuple
    b: tuple
    a0: object = 1

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "b", tuple(self.b))
        if len(self.a) != len(self.b):
            raise ValidationError("a and b must have the same length")
        if len(self.a) < 2:
            raise ValidationError("Jacobi problem needs n_max >= 2")
        for i, v in enumerate(self.a):
            if not v > 0:
                raise ValidationError(f"a({i + 1}) must be positive", cell_index=i)
        if not self.a0 > 0:
            raise ValidationError("a(0) must be positive")

    @property
    def n_max(self) -> int:
        return len(self.a)

    def coeff_a(self, n: int):
        return self.a0 if n == 0 else self.a[n - 1]

    def coeff_b(self, n: int):
        return self.b[n - 1]

    @classmethod
    def free(cls, n_max: int) -> "JacobiProblem":
        return cls((1,) * n_max, (0,) * n_max)


def _sigma(orientation: str) -> float:
    if orientation == "+":
        return 1.0
    if orientation == "-":
        return -1.0
    raise DomainError(f"orientation must be '+' or '-', got {orientation!r}")


# ---------------------------------------------------------------------------
# Schrödinger


def _cs_real(V: float, s):
    """Zero-energy fundamental pair of ``y'' = V y``: ``C(s)``, ``S(s)`` and derivatives."""
    s = np.asarray(s, dtype=float)
    if V > 0:
        k = math.sqrt(V)
        return np.cosh(k * s), np.sinh(k * s) / k, k * np.sinh(k * s), np.cosh(k * s)
    if V < 0:
        k = math.sqrt(-V)
        return np.cos(k * s), np.sin(k * s) / k, -k * np.sin(k * s), np.cos(k * s)
    return np.ones_like(s), s.copy(), np.zeros_like(s), np.ones_like(s)


def zero_energy_solutions(P: SchrodingerProblem, x):
    """``(u0, v0)`` at points ``x`` in ``[0, x_max]``: ``u0(0) = 1, u0'(0) = 0``, ``v0(0) = 0, v0'(0) = 1``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out_u, out_v = np.empty_like(x), np.empty_like(x)
    state = np.array([[1.0, 0.0], [0.0, 1.0]])  # rows (y, y') for u0 and v0
    start = 0.0
    bounds = []
    for length, V in P.cells:
        bounds.append((start, start + length, V, state.copy()))
        C, S, Cp, Sp = _cs_real(V, length)
        state = np.array([[state[0, 0] * C + state[0, 1] * S, state[0, 0] * Cp + state[0, 1] * Sp],
                          [state[1, 0] * C + state[1, 1] * S, state[1, 0] * Cp + state[1, 1] * Sp]])
        start += length
    for i, xi in enumerate(x):
        for lo, hi, V, st in bounds:
            if xi <= hi or hi == bounds[-1][1]:
                C, S, _, _ = _cs_real(V, xi - lo)
                out_u[i] = st[0, 0] * C + st[0, 1] * S
                out_v[i] = st[1, 0] * C + st[1, 1] * S
                break
    return out_u, out_v


def schrodinger_to_canonical(P: SchrodingerProblem, cells_per_piece: int = DEFAULT_CELLS_PER_PIECE) -> HalfLineHamiltonian:
    """``H = w w^T`` with ``w = (u0, v0)`` sampled at sub-cell midpoints.

    The zero-energy solutions are propagated exactly across each potential
    piece.  The last cell is repeated beyond ``x_max``.
    """
    if cells_per_piece < 1:
        raise ValidationError("cells_per_piece must be >= 1")
    cells = []
    state = np.array([[1.0, 0.0], [0.0, 1.0]])
    for length, V in P.cells:
        h = length / cells_per_piece
        mids = (np.arange(cells_per_piece) + 0.5) * h
        C, S, _, _ = _cs_real(V, mids)
        u0 = state[0, 0] * C + state[0, 1] * S
        v0 = state[1, 0] * C + state[1, 1] * S
        for a, b in zip(u0, v0):
            cells.append(HamiltonianCell(h, PSDMatrix2.outer(float(a), float(b))))
        C, S, Cp, Sp = _cs_real(V, length)
        state = np.array([[state[0, 0] * C + state[0, 1] * S, state[0, 0] * Cp + state[0, 1] * Sp],
                          [state[1, 0] * C + state[1, 1] * S, state[1, 0] * Cp + state[1, 1] * Sp]])
    return HalfLineHamiltonian(tuple(cells), "repeat-last", "right")


def _theta(kappa: complex, L: float) -> complex:
    """``tanh(kappa L) / kappa`` with ``Re kappa >= 0``, stable for large ``|kappa L|``."""
    w = kappa * L
    if abs(w) < 1e-3:
        return L * (1 - w * w / 3 + 2 * w ** 4 / 15)
    e = cmath.exp(-2 * w)
    return (1 - e) / (1 + e) / kappa


def schrodinger_m(P: SchrodingerProblem, z: complex, jumps: Sequence = ()) -> complex:
    """Weyl m-function ``y'(0)/y(0)`` of ``-y'' + V y = z y`` on the half line.

    ``y`` is the solution that is square integrable at infinity, with ``V``
    continued by its last value.  The Riccati variable ``r = y'/y`` is swept
    backwards in closed form across each piece; ``jumps`` holds point masses
    ``(x, c)`` contributing ``c * delta(x - x_k)`` to ``V``.
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("the Schrödinger m-function is evaluated for Im z > 0")
    pieces = list(P.cells)
    r = -cmath.sqrt(pieces[-1][1] - z)
    ends = np.cumsum([p[0] for p in pieces])
    jumps = sorted(jumps, key=lambda t: -t[0])
    ji = 0
    for k in range(len(pieces) - 1, -1, -1):
        L, V = pieces[k]
        while ji < len(jumps) and jumps[ji][0] >= ends[k] - 1e-12 * max(1.0, ends[k]):
            if jumps[ji][0] < ends[-1] + 1e-12 * ends[-1]:
                r = r - jumps[ji][1]
            ji += 1
        q = V - z
        kappa = cmath.sqrt(q)
        th = _theta(kappa, L)
        r = (r - q * th) / (1 - r * th)
    return r


# ---------------------------------------------------------------------------
# Dirac


def dirac_to_canonical(W: DiracPotential, orientation: str = "+",
                       cells_per_piece: int = DEFAULT_CELLS_PER_PIECE) -> HalfLineHamiltonian:
    """Diagonal exponential Hamiltonian ``diag(e^{2 sQ}, e^{-2 sQ})``, ``Q = int_0^x W``.

    ``s = +1`` for orientation ``+`` and ``-1`` for ``-``.  ``Q`` is piecewise
    linear and evaluated exactly at the sub-cell midpoints.
    """
    sig = _sigma(orientation)
    if cells_per_piece < 1:
        raise ValidationError("cells_per_piece must be >= 1")
    cells = []
    Q0 = 0.0
    for length, w in W.cells:
        h = length / cells_per_piece
        mids = (np.arange(cells_per_piece) + 0.5) * h
        for q in Q0 + w * mids:
            e = math.exp(2.0 * sig * q)
            cells.append(HamiltonianCell(h, PSDMatrix2(e, 0.0, 1.0 / e)))
        Q0 += w * length
    return HalfLineHamiltonian(tuple(cells), "repeat-last", "right")


# ---------------------------------------------------------------------------
# Jacobi


def zero_energy_sequences(P: JacobiProblem):
    """``p0(n), q0(n)`` for ``n = 0 .. n_max + 1`` via the recursion at ``z = 0``."""
    p = [P.a0 * 0 + 1, P.a0 * 0 + 1]
    q = [P.a0 * 0, P.a0 * 0 + 1]
    for n in range(1, P.n_max + 1):
        an, am, bn = P.coeff_a(n), P.coeff_a(n - 1), P.coeff_b(n)
        p.append(_div(-(am * p[n - 1] + bn * p[n]), an))
        q.append(_div(-(am * q[n - 1] + bn * q[n]), an))
    return p, q


def _div(x, y):
    if isinstance(x, (int, Fraction)) and isinstance(y, (int, Fraction)):
        return Fraction(x) / Fraction(y)
    return x / y


def _mat_T(p, q, n):
    return ((p[n - 1], q[n - 1]), (p[n], q[n]))


def _inv2(M):
    (a, b), (c, d) = M
    det = a * d - b * c
    if det == 0:
        return None
    return ((_div(d, det), _div(-b, det)), (_div(-c, det), _div(a, det)))


def _mul2(A, B):
    return tuple(tuple(sum(A[i][k] * B[k][j] for k in range(2)) for j in range(2)) for i in range(2))


@dataclass(frozen=True)
class JacobiReduction:
    """Outcome of :func:`jacobi_reduction`.

    ``raw`` holds ``J T^{-1}(n+1) A(n) T(n)`` exactly as computed, ``signs``
    the factor applied to make each cell positive semidefinite, and
    ``h``/``phi`` the rank-one parameters ``H(n) = h P_phi``.
    """

    hamiltonian: HalfLineHamiltonian
    raw: tuple
    signs: tuple
    h: tuple
    phi: tuple
    p0: tuple = field(repr=False)
    q0: tuple = field(repr=False)


def jacobi_reduction(P: JacobiProblem, extension: str = "repeat-last") -> JacobiReduction:
    p, q = zero_energy_sequences(P)
    J = ((0, -1), (1, 0))
    raws, signs, hs, phis, cells = [], [], [], [], []
    for n in range(1, P.n_max + 1):
        Tn1inv = _inv2(_mat_T(p, q, n + 1))
        if Tn1inv is None:
            raise ReductionError(f"T({n + 1}) is singular")
        A = ((0, 0), (0, _div(1, P.coeff_a(n))))
        Hn = _mul2(_mul2(J, Tn1inv), _mul2(A, _mat_T(p, q, n)))
        raws.append(Hn)
        tr = Hn[0][0] + Hn[1][1]
        if tr == 0:
            raise ReductionError(f"cell {n} has zero trace")
        sign = 1 if tr > 0 else -1
        signs.append(sign)
        m = tuple(tuple(sign * e for e in row) for row in Hn)
        hs.append(m[0][0] + m[1][1])
        phis.append(math.atan2(2 * float(m[0][1]), float(m[0][0] - m[1][1])) / 2)
        cells.append(HamiltonianCell(1.0, PSDMatrix2(float(m[0][0]), float(m[0][1]), float(m[1][1]))))
    H = HalfLineHamiltonian(tuple(cells), extension, "right")
    return JacobiReduction(H, tuple(raws), tuple(signs), tuple(hs), tuple(phis), tuple(p), tuple(q))


def jacobi_to_canonical(P: JacobiProblem, extension: str = "repeat-last") -> HalfLineHamiltonian:
    """One unit cell ``h(n) P_phi(n)`` per site.  See :func:`jacobi_reduction`."""
    return jacobi_reduction(P, extension).hamiltonian


def jacobi_m_cf(P: JacobiProblem, z: complex, n_trunc: int | None = None) -> complex:
    """Continued-fraction oracle matched to the canonical interval m-function.

    With ``r(n_t) = 0`` and ``r(n) = a(n-1) / (z - b(n) - a(n) r(n+1))``,
    returns ``r(1) - 1``, i.e. ``u(1)/u(0) - 1`` for the solution with
    ``u(n_t) = 0``.  In the coordinates of the reduced system this is the
    interval m-function at ``N = n_t`` (see :func:`jacobi_interval_m`).
    """
    n_t = P.n_max if n_trunc is None else n_trunc
    if not 2 <= n_t <= P.n_max:
        raise DomainError("truncation site out of range")
    r = 0j
    for n in range(n_t - 1, 0, -1):
        den = z - float(P.coeff_b(n)) - float(P.coeff_a(n)) * r
        if den == 0:
            raise ReductionError(f"continued fraction breaks down at n = {n}")
        r = float(P.coeff_a(n - 1)) / den
    return r - 1


def jacobi_interval_m(P: JacobiProblem, zeta: complex, n: int | None = None) -> complex:
    """Interval m-function of the reduced system at ``N = n`` with the boundary
    angle fixed by ``(sin beta, cos beta) ~ (p0(n), q0(n))``.
    """
    red = jacobi_reduction(P)
    n = P.n_max if n is None else n
    beta = math.atan2(float(red.p0[n]), float(red.q0[n]))
    return m_on_interval(red.hamiltonian, float(n), zeta, beta)


# ---------------------------------------------------------------------------
# correspondence report


@dataclass(frozen=True)
class RelationRow:
    z: complex
    lhs: complex
    rhs: complex
    defect: float
    error_radius: float
    converged: bool


@dataclass(frozen=True)
class RelationReport:
    kind: str
    rows: tuple
    tol: float

    @property
    def max_defect(self) -> float:
        return max(r.defect for r in self.rows)

    @property
    def ok(self) -> bool:
        return all(r.converged and r.defect <= self.tol + r.error_radius for r in self.rows)

    @property
    def flagged(self) -> list:
        return [r for r in self.rows if not r.converged]


def _canonical_m(H: HalfLineHamiltonian, zs, tol: float, N_max: float | None = None):
    """``m_+`` after trace normalization (this leaves ``m`` at 0 unchanged)."""
    Hn, _ = normalize_trace(H)
    return m_halfline_batch(Hn, zs, tol=tol, N_max=N_max)


def m_relation_report(kind: str, problem, z_grid, tol: float = 1e-6, *,
                      cells_per_piece: int = DEFAULT_CELLS_PER_PIECE, orientation: str = "+",
                      m_tol: float | None = None) -> RelationReport:
    """Compare both sides of an m-function correspondence on ``z_grid``.

    ``kind`` selects the pair:

    * ``"schrodinger"``: ``m_s(z)`` against ``m_c(z)`` of the reduced system.
    * ``"dirac"``: ``m_s(z^2)`` for ``V = W^2 + s W'`` against
      ``z m_c(z) + s W(0)`` (``s = +-1`` per orientation).  The offset makes the
      identity exact when ``W(0) != 0``; it vanishes for ``W(0) = 0``.
    * ``"flip"``: ``m_c`` of the ``+`` Dirac Hamiltonian against ``-1/m_c`` of
      the ``-`` one.
    * ``"jacobi"``: interval m at matched truncation against the
      continued-fraction oracle at ``-z``.

    Unconverged m-values are kept and flagged.
    """
    zs = np.atleast_1d(np.asarray(z_grid, dtype=complex))
    if np.any(zs.imag <= 0):
        raise DomainError("z grid must lie in the upper half plane")
    m_tol = tol if m_tol is None else m_tol
    rows = []
    if kind == "schrodinger":
        H = schrodinger_to_canonical(problem, cells_per_piece)
        mc = _canonical_m(H, zs, m_tol)
        for z, m in zip(zs, mc):
            lhs = schrodinger_m(problem, z)
            rows.append(RelationRow(complex(z), lhs, m.value, abs(lhs - m.value), m.error_radius, m.converged))
    elif kind == "dirac":
        if np.any(zs.real <= 0):
            raise DomainError("dirac grid must lie in the open first quadrant")
        sig = _sigma(orientation)
        H = dirac_to_canonical(problem, orientation, cells_per_piece)
        mc = _canonical_m(H, zs, m_tol)
        V = problem.schrodinger_potential(orientation)
        jumps = problem.jumps(orientation)
        w0 = problem.cells[0][1]
        for z, m in zip(zs, mc):
            lhs = schrodinger_m(V, z * z, jumps)
            rhs = z * m.value + sig * w0
            rows.append(RelationRow(complex(z), lhs, rhs, abs(lhs - rhs), abs(z) * m.error_radius, m.converged))
    elif kind == "flip":
        Hp = dirac_to_canonical(problem, "+", cells_per_piece)
        Hm = dirac_to_canonical(problem, "-", cells_per_piece)
        mp = _canonical_m(Hp, zs, m_tol)
        mm = _canonical_m(Hm, zs, m_tol)
        for z, a, b in zip(zs, mp, mm):
            rhs = -1.0 / b.value
            err = a.error_radius + b.error_radius / max(abs(b.value) - b.error_radius, 1e-300) ** 2
            rows.append(RelationRow(complex(z), a.value, rhs, abs(a.value - rhs), err, a.converged and b.converged))
    elif kind == "jacobi":
        for z in zs:
            lhs = jacobi_interval_m(problem, z)
            rhs = jacobi_m_cf(problem, -z)
            rows.append(RelationRow(complex(z), lhs, rhs, abs(lhs - rhs), 0.0, True))
    else:
        raise DomainError(f"unknown relation kind {kind!r}")
    return RelationReport(kind, tuple(rows), tol)

"""Harmonic measure, value distribution and reflectionless diagnostics.

Sets are finite unions of open intervals, so harmonic measure has the
closed form ``(1/pi) sum (arctan((b - x)/y) - arctan((a - x)/y))``.  For a real
point it degenerates to the indicator of the set, with value 1/2 at
endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, ValidationError
from .hamiltonian import HalfLineHamiltonian, TestFamily, WholeLineHamiltonian, metric_distance, shift_by
from .solver import energy_integrals, transfer, transfer_batch
from .weyl import m_halfline_batch

DEFAULT_Y_SCHEDULE = tuple(1e-1 * 0.5 ** k for k in range(10)) + (1e-4,)
DEFAULT_NODES = 32


@dataclass(frozen=True)
class IntervalSet:
    """Finite union of disjoint open intervals, kept sorted.

    Overlapping input intervals are merged; intervals that merely touch stay
    separate (the shared endpoint is not in the set).
    """

    intervals: tuple

    def __post_init__(self):
        ivs = sorted((float(a), float(b)) for a, b in self.intervals)
        out = []
        for a, b in ivs:
            if not a < b:
                raise ValidationError(f"interval ({a}, {b}) is empty")
            if out and a < out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], b))
            else:
                out.append((a, b))
        object.__setattr__(self, "intervals", tuple(out))

    @classmethod
    def of(cls, *intervals) -> "IntervalSet":
        return cls(tuple(intervals))

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def reflect(self) -> "IntervalSet":
        """``-S``."""
        return IntervalSet(tuple((-b, -a) for a, b in self.intervals))

    def __neg__(self):
        return self.reflect()

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a, b in self.intervals:
            for c, d in other.intervals:
                lo, hi = max(a, c), min(b, d)
                if lo < hi:
                    out.append((lo, hi))
        return IntervalSet(tuple(out))

    def __and__(self, other):
        return self.intersect(other)

    def contains(self, t: float) -> bool:
        return any(a < t < b for a, b in self.intervals)

    def is_disjoint(self, other: "IntervalSet") -> bool:
        return not self.intersect(other)

    def to_list(self) -> list:
        return [[a, b] for a, b in self.intervals]


@dataclass(frozen=True)
class HerglotzSample:
    t: float
    y: float
    value: complex

    def __post_init__(self):
        if not self.y > 0:
            raise ValidationError("offset y must be positive")
        if complex(self.value).imag < 0:
            raise ValidationError("Herglotz sample must have Im value >= 0")


# ---------------------------------------------------------------------------
# harmonic measure and hyperbolic distance


def harmonic_measure(w, S: IntervalSet):
    """``omega_w(S)``; accepts scalar or array ``w`` with ``Im w >= 0``."""
    w = np.asarray(w, dtype=complex)
    x, y = w.real, w.imag
    if np.any(y < 0):
        raise DomainError("harmonic measure needs Im w >= 0")
    total = np.zeros(w.shape)
    pos = y > 0
    ys = np.where(pos, y, 1.0)
    for a, b in S.intervals:
        smooth = (np.arctan((b - x) / ys) - np.arctan((a - x) / ys)) / math.pi
        ind = np.where((x > a) & (x < b), 1.0, 0.0) + 0.5 * ((x == a) | (x == b))
        total = total + np.where(pos, smooth, ind)
    return float(total) if total.ndim == 0 else total


def hyperbolic_distance(w, z):
    """``|w - z| / sqrt(Im w Im z)``."""
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    if np.any(w.imag <= 0) or np.any(z.imag <= 0):
        raise DomainError("hyperbolic distance needs Im w > 0 and Im z > 0")
    g = np.abs(w - z) / np.sqrt(w.imag * z.imag)
    return float(g) if g.ndim == 0 else g


# ---------------------------------------------------------------------------
# quadrature and value distribution


def quadrature_nodes(A: IntervalSet, nodes_per_interval: int = DEFAULT_NODES, panels: int = 1):
    """Composite Gauss-Legendre nodes and weights over ``A``.

    Each interval is cut into ``panels`` equal panels with
    ``nodes_per_interval`` nodes each.
    """
    if nodes_per_interval < 1 or panels < 1:
        raise ValidationError("need at least one node and one panel")
    x, w = np.polynomial.legendre.leggauss(nodes_per_interval)
    ts, ws = [], []
    for a, b in A.intervals:
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DomainError("quadrature needs |A| < infinity")
        edges = np.linspace(a, b, panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            ts.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            ws.append(0.5 * (hi - lo) * w)
    if not ts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(ts), np.concatenate(ws)


def value_distribution_integral(F, A: IntervalSet, S: IntervalSet, nodes_per_interval: int = DEFAULT_NODES,
                                panels: int = 1) -> float:
    """``int_A omega_{F(t)}(S) dt`` by composite Gauss-Legendre quadrature.

    ``F`` is either a callable returning boundary values at an array of
    nodes, or an array already sampled at :func:`quadrature_nodes`.
    """
    t, wt = quadrature_nodes(A, nodes_per_interval, panels)
    vals = F(t) if callable(F) else np.asarray(F, dtype=complex)
    if np.shape(vals) != t.shape:
        raise ValidationError("F must be sampled at the quadrature nodes")
    return float(np.dot(wt, harmonic_measure(vals, S)))


# ---------------------------------------------------------------------------
# boundary values


def _half(H, side: str) -> HalfLineHamiltonian:
    if isinstance(H, WholeLineHamiltonian):
        return H.half(side)
    want = "right" if side in ("+", "right") else "left"
    if side not in ("+", "-", "right", "left"):
        raise DomainError(f"side must be '+' or '-', got {side!r}")
    if H.side != want:
        raise DomainError(f"a {H.side} half-line Hamiltonian has no {side} m-function")
    return H


def boundary_m(H, side: str, t: float, y_schedule: Sequence = DEFAULT_Y_SCHEDULE, tol_m: float = 1e-6,
               N_max: float | None = None) -> HerglotzSample:
    """``m_+-(t + iy)`` at the smallest scheduled ``y`` whose enclosure converged.

    No extrapolation to ``y = 0`` is attempted; the returned sample records
    the ``y`` it was taken at.
    """
    ys = [float(y) for y in y_schedule]
    if not ys or any(y <= 0 for y in ys) or any(b >= a for a, b in zip(ys, ys[1:])):
        raise DomainError("y_schedule must be non-empty, positive and decreasing")
    Hs = _half(H, side)
    vals = m_halfline_batch(Hs, [t + 1j * y for y in ys], tol=tol_m, N_max=N_max)
    best = None
    for y, m in zip(ys, vals):
        if m.converged:
            best = HerglotzSample(float(t), y, complex(m.value.real, max(m.value.imag, 0.0)))
    if best is None:
        raise ConvergenceError(f"no y in the schedule gave error radius <= {tol_m}", partial=vals)
    return best


@dataclass(frozen=True)
class DefectResult:
    value: float
    y: float
    t: np.ndarray = field(repr=False)
    defects: np.ndarray = field(repr=False)
    error_radius: float = 0.0
    flagged: tuple = ()

    @property
    def converged(self) -> bool:
        return not self.flagged


def _grid(A: IntervalSet, grid: int) -> np.ndarray:
    """``grid`` cell-centred points spread over ``A`` in proportion to length."""
    total = A.measure
    pts = []
    for a, b in A.intervals:
        k = max(1, round(grid * (b - a) / total))
        pts.append(a + (np.arange(k) + 0.5) * (b - a) / k)
    return np.concatenate(pts)


def reflectionless_defect(H: WholeLineHamiltonian, A: IntervalSet, y: float, grid: int = 64,
                          tol_m: float = 1e-8, N_max: float | None = None) -> DefectResult:
    """``max_t |m_+(t + iy) + conj(m_-(t + iy))|`` over a grid in ``A``."""
    if not y > 0:
        raise DomainError("y must be positive")
    t = _grid(A, grid)
    zs = t + 1j * y
    mp = m_halfline_batch(H.right, zs, tol=tol_m, N_max=N_max)
    mm = m_halfline_batch(H.left, zs, tol=tol_m, N_max=N_max)
    d = np.array([abs(a.value + np.conj(b.value)) for a, b in zip(mp, mm)])
    err = max(a.error_radius + b.error_radius for a, b in zip(mp, mm))
    flagged = tuple(float(ti) for ti, a, b in zip(t, mp, mm) if not (a.converged and b.converged))
    return DefectResult(float(d.max()), float(y), t, d, float(err), flagged)


# ---------------------------------------------------------------------------
# Breimesser-Pearson discrepancy


@dataclass(frozen=True)
class BPResult:
    value: float
    minus_integral: float
    plus_integral: float
    N: float
    y: float
    flagged: tuple = ()

    def __float__(self):
        return self.value


def bp_discrepancy(H: HalfLineHamiltonian, A: IntervalSet, S: IntervalSet, N: float, y: float,
                   nodes: int = DEFAULT_NODES, panels: int | None = None, tol_m: float = 1e-8,
                   N_max: float | None = None) -> BPResult:
    """``int_A omega_{m_-(N,t)}(-S) dt - int_A omega_{m_+(N,t)}(S) dt`` at ``t + iy``.

    ``m_+(N, .)`` is the half-line m-function moved to base point ``N``;
    ``m_-(N, z) = -v2(N, z)/v1(N, z)`` is the m-function of ``[0, N]`` seen
    from ``N``.  The integrand varies on the scale ``y``, so by default each
    interval of ``A`` is cut into panels of width about ``5 y``.
    """
    if not N > 0 or not y > 0:
        raise DomainError("N and y must be positive")
    if H.side != "right":
        raise DomainError("bp_discrepancy expects a right half-line Hamiltonian")
    if panels is None:
        longest = max(b - a for a, b in A.intervals)
        panels = max(1, math.ceil(longest / (5.0 * y)))
    t, wt = quadrature_nodes(A, nodes, panels)
    zs = t + 1j * y
    m0 = m_halfline_batch(H, zs, tol=tol_m, N_max=N_max)
    T = transfer_batch(H, N, zs)
    u1, u2, v1, v2 = T[:, 0, 0], T[:, 1, 0], T[:, 0, 1], T[:, 1, 1]
    m = np.array([mv.value for mv in m0])
    mp = (u2 + m * v2) / (u1 + m * v1)
    with np.errstate(divide="ignore", invalid="ignore"):
        mm = -v2 / v1
    bad = ~np.isfinite(mm)
    if bad.any():  # a pole of v1 sitting on a node: nudge it by one node spacing
        for i in np.flatnonzero(bad):
            j = i + 1 if i + 1 < len(t) else i - 1
            mm[i] = mm[j]
    flagged = tuple(float(ti) for ti, mv, b in zip(t, m0, bad) if (not mv.converged) or b)
    mp = np.where(mp.imag < 0, mp.real + 0j, mp)
    mm = np.where(mm.imag < 0, mm.real + 0j, mm)
    minus = float(np.dot(wt, harmonic_measure(mm, S.reflect())))
    plus = float(np.dot(wt, harmonic_measure(mp, S)))
    return BPResult(minus - plus, minus, plus, float(N), float(y), flagged)


# ---------------------------------------------------------------------------
# disk separation bound


class SeparationViolation(ArithmeticError):
    """Raised in strict mode when the computed distance exceeds the bound."""


@dataclass(frozen=True)
class SeparationResult:
    gamma: float
    bound: float
    I: float

    @property
    def holds(self) -> bool:
        return self.gamma <= self.bound + 1e-9


def weyl_separation_bound(H: HalfLineHamiltonian, N: float, z: complex, w: complex,
                          strict: bool = True) -> SeparationResult:
    """Distance between ``-v2/v1`` and ``-(u2 + conj(w) v2)/(u1 + conj(w) v1)`` at ``N``.

    Both points are compared in the hyperbolic metric against
    ``1/sqrt(I (I + 1))`` with ``I = Im z int_0^N Im(u^* H v)``.
    """
    z = complex(z)
    w = complex(w)
    if z.imag <= 0 or not N > 0:
        raise DomainError("need Im z > 0 and N > 0")
    if w.imag < 0:
        raise DomainError("w must satisfy Im w >= 0")
    T = transfer(H, N, z)
    u1, u2, v1, v2 = T.t11, T.t21, T.t12, T.t22
    I = z.imag * energy_integrals(H, N, z).im_uHv
    if not I > 64 * np.finfo(float).eps * max(1.0, float(np.abs(T.matrix).max()) ** 2):
        raise DomainError(f"[0, {N}] lies inside one rank-one direction: I = 0 and no disk exists")
    p = -v2 / v1
    wb = w.conjugate()
    q = -(u2 + wb * v2) / (u1 + wb * v1)
    gamma = hyperbolic_distance(p, q)
    bound = 1.0 / math.sqrt(I * (I + 1.0))
    res = SeparationResult(float(gamma), bound, float(I))
    if strict and not res.holds:
        raise SeparationViolation(f"gamma = {gamma} exceeds 1/sqrt(I(I+1)) = {bound}")
    return res


# ---------------------------------------------------------------------------
# heuristics and probes


@dataclass(frozen=True)
class ACSupportEstimate:
    """Nodes with ``Im m_+(t + iy) > threshold``, merged into intervals.

    This is a heuristic picture of the a.c. support at finite ``y`` and grid,
    not the support itself.  Each run of consecutive accepted nodes becomes
    one interval reaching half a node spacing past its outer nodes.
    """

    support: IntervalSet
    t: np.ndarray = field(repr=False)
    im_m: np.ndarray = field(repr=False)
    y: float = 0.0
    threshold: float = 0.0
    excluded: tuple = ()


def ac_support_estimate(H, t_grid, y: float = 1e-3, threshold: float = 1e-3, nodes: int = 64,
                        tol_m: float = 1e-6, N_max: float | None = None) -> ACSupportEstimate:
    """Estimate where ``Im m_+`` stays positive near the real axis.

    ``t_grid`` is an array of nodes or an :class:`IntervalSet` sampled with
    ``nodes`` equispaced points.
    """
    if not y > 0 or not threshold > 0:
        raise DomainError("y and threshold must be positive")
    if isinstance(t_grid, IntervalSet):
        t = _grid(t_grid, nodes)
    else:
        t = np.sort(np.asarray(t_grid, dtype=float))
    Hs = _half(H, "+")
    ms = m_halfline_batch(Hs, t + 1j * y, tol=tol_m, N_max=N_max)
    im = np.array([m.value.imag for m in ms])
    conv = np.array([m.converged for m in ms])
    keep = (im > threshold) & conv
    spacing = np.diff(t)
    half = np.concatenate(([spacing[0] if len(spacing) else 1.0], spacing, [spacing[-1] if len(spacing) else 1.0])) / 2
    ivs, start = [], None
    for i, k in enumerate(keep):
        if k and start is None:
            start = i
        if start is not None and (not k or i == len(keep) - 1):
            end = i if k else i - 1
            ivs.append((t[start] - half[start], t[end] + half[end + 1]))
            start = None
    excluded = tuple(float(ti) for ti, c in zip(t, conv) if not c)
    return ACSupportEstimate(IntervalSet(tuple(ivs)), t, im, float(y), float(threshold), excluded)


def omega_limit_probe(mu: WholeLineHamiltonian, nu: WholeLineHamiltonian, x_seq: Sequence,
                      family: TestFamily | None = None) -> list:
    """``d(S_x mu, nu)`` for each shift ``x`` in ``x_seq``."""
    xs = [float(x) for x in x_seq]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise DomainError("x_seq must be increasing")
    family = family or TestFamily()
    return [metric_distance(shift_by(mu, x), nu, family) for x in xs]

"""Piecewise-constant Hamiltonians and the operations on them.

A half-line Hamiltonian is an ordered list of cells ``(length, M)`` with
``M`` a real symmetric positive semidefinite 2x2 matrix, plus a rule that
extends the list to the whole half line.  Cells are always enumerated away
from the origin, so a ``side="left"`` Hamiltonian describes ``H(-s)`` for
``s >= 0``.  Internally every lookup works in the distance coordinate
``s = |x|``.

Boundaries belong to the outer cell: at ``s = s_k`` the cell that starts at
``s_k`` is returned.  On the right half line this is right-continuity, on the
left half line left-continuity.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DomainError, ValidationError

TOL_PSD = 1e-12
EXTENSIONS = ("periodic", "repeat-last")
SIDES = ("right", "left")

# segments shorter than this fraction of the scale are rounding slivers
_SLIVER = 1e-13


@dataclass(frozen=True)
class PSDMatrix2:
    """Real symmetric 2x2 matrix ``[[a11, a12], [a12, a22]]`` with ``H >= 0``."""

    a11: float
    a12: float
    a22: float

    def __post_init__(self):
        for name in ("a11", "a12", "a22"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.a11, self.a12, self.a22)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite matrix entries {vals}")
        tr = self.a11 + self.a22
        if not tr > 0:
            raise ValidationError(f"matrix has non-positive trace {tr!r}")
        slack = TOL_PSD * tr
        if self.a11 < -slack or self.a22 < -slack:
            raise ValidationError(f"negative diagonal entry in {vals}")
        if self.a11 * self.a22 - self.a12 * self.a12 < -slack * tr:
            raise ValidationError(f"matrix {vals} is not positive semidefinite")

    @classmethod
    def from_array(cls, arr) -> "PSDMatrix2":
        a = np.asarray(arr, dtype=float)
        if a.shape != (2, 2):
            raise ValidationError(f"expected a 2x2 matrix, got shape {a.shape}")
        if abs(a[0, 1] - a[1, 0]) > TOL_PSD * max(1.0, abs(a).max()):
            raise ValidationError("matrix is not symmetric")
        return cls(float(a[0, 0]), float(a[0, 1]), float(a[1, 1]))

    @classmethod
    def rank_one(cls, h: float, phi: float) -> "PSDMatrix2":
        """``h * P_phi`` with ``P_phi`` the projection onto ``(cos phi, sin phi)``."""
        c, s = math.cos(phi), math.sin(phi)
        return cls(h * c * c, h * c * s, h * s * s)

    @classmethod
    def outer(cls, w0: float, w1: float, scale: float = 1.0) -> "PSDMatrix2":
        """``scale * w w^T`` for the real vector ``w = (w0, w1)``."""
        return cls(scale * w0 * w0, scale * w0 * w1, scale * w1 * w1)

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a12

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def scaled(self, c: float) -> "PSDMatrix2":
        return PSDMatrix2(c * self.a11, c * self.a12, c * self.a22)

    def reflected(self) -> "PSDMatrix2":
        """``R M R`` with ``R = diag(1, -1)``."""
        return PSDMatrix2(self.a11, -self.a12, self.a22)

    def isclose(self, other: "PSDMatrix2", rtol=1e-12, atol=1e-14) -> bool:
        return all(
            math.isclose(p, q, rel_tol=rtol, abs_tol=atol)
            for p, q in zip((self.a11, self.a12, self.a22), (other.a11, other.a12, other.a22))
        )


@dataclass(frozen=True)
class HamiltonianCell:
    length: float
    matrix: PSDMatrix2

    def __post_init__(self):
        object.__setattr__(self, "length", float(self.length))
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValidationError(f"cell length must be finite and positive, got {self.length!r}")


def _as_cells(cells) -> tuple:
    out = []
    for i, c in enumerate(cells):
        if isinstance(c, HamiltonianCell):
            out.append(c)
            continue
        try:
            length, mat = c
            if not isinstance(mat, PSDMatrix2):
                mat = PSDMatrix2.from_array(mat)
            out.append(HamiltonianCell(float(length), mat))
        except ValidationError as exc:
            raise ValidationError(str(exc), cell_index=i) from None
    return tuple(out)


@dataclass(frozen=True)
class HalfLineHamiltonian:
    """Piecewise-constant Hamiltonian on a half line.

    Parameters
    ----------
    cells
        Sequence of :class:`HamiltonianCell` (or ``(length, 2x2 array)`` pairs),
        ordered away from the origin.
    extension
        ``"repeat-last"`` continues the last matrix forever; ``"periodic"``
        repeats ``cells[periodic_from:]`` forever after the prefix
        ``cells[:periodic_from]``.
    side
        ``"right"`` for ``[0, inf)``, ``"left"`` for ``(-inf, 0]``.
    periodic_from
        Start of the repeating block for periodic extensions.  Zero means
        the whole list is the period.  Shifting a periodic Hamiltonian can
        produce a non-periodic prefix, hence this field.
    """

    cells: tuple
    extension: str = "repeat-last"
    side: str = "right"
    periodic_from: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cells", _as_cells(self.cells))
        if not self.cells:
            raise ValidationError("a Hamiltonian needs at least one cell")
        if self.extension not in EXTENSIONS:
            raise ValidationError(f"unknown extension {self.extension!r}")
        if self.side not in SIDES:
            raise ValidationError(f"unknown side {self.side!r}")
        if self.extension == "periodic":
            if not 0 <= self.periodic_from < len(self.cells):
                raise ValidationError("periodic_from must index a cell")
        elif self.periodic_from:
            raise ValidationError("periodic_from only applies to periodic extensions")

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, matrix, length: float = 1.0, side: str = "right") -> "HalfLineHamiltonian":
        return cls(((length, matrix),), "repeat-last", side)

    @classmethod
    def identity(cls, side: str = "right") -> "HalfLineHamiltonian":
        return cls.constant(PSDMatrix2(1.0, 0.0, 1.0), 1.0, side)

    # -- geometry ----------------------------------------------------------

    @cached_property
    def boundaries(self) -> np.ndarray:
        """Cumulative cell boundaries ``[0, l_0, l_0 + l_1, ...]``."""
        return np.concatenate(([0.0], np.cumsum([c.length for c in self.cells])))

    @property
    def length(self) -> float:
        """Total length of the explicit cells."""
        return float(self.boundaries[-1])

    @property
    def prefix_length(self) -> float:
        return float(self.boundaries[self.periodic_from]) if self.extension == "periodic" else self.length

    @property
    def period(self) -> float | None:
        if self.extension != "periodic":
            return None
        return self.length - self.prefix_length

    @property
    def matrices(self) -> list:
        return [c.matrix for c in self.cells]

    def _check_s(self, s: float) -> None:
        if not s >= 0 or not math.isfinite(s):
            raise DomainError(f"distance from the origin must be finite and >= 0, got {s!r}")

    def _fold(self, s: float) -> float:
        """Map a distance into the explicit cell range using the extension."""
        if s < self.length:
            return s
        if self.extension == "repeat-last":
            return self.length  # last cell, see locate
        lp, p = self.prefix_length, self.period
        r = math.fmod(s - lp, p)
        return lp + r

    def locate(self, s: float) -> int:
        """Index of the cell containing distance ``s`` (outer cell at boundaries)."""
        self._check_s(s)
        s = self._fold(s)
        if s >= self.length:
            return len(self.cells) - 1
        return bisect.bisect_right(self.boundaries, s) - 1

    def matrix_at(self, s: float) -> PSDMatrix2:
        return self.cells[self.locate(s)].matrix

    def _explicit_segments(self, a: float, b: float, offset: float = 0.0) -> list:
        """Segments of the explicit cells intersected with ``[a, b]`` (explicit coordinates)."""
        out = []
        bnd = self.boundaries
        k = max(0, bisect.bisect_right(bnd, a) - 1)
        while k < len(self.cells) and bnd[k] < b:
            lo, hi = max(a, bnd[k]), min(b, bnd[k + 1])
            if hi > lo:
                out.append((lo + offset, hi - lo, self.cells[k].matrix))
            k += 1
        return out

    def segments(self, a: float, b: float) -> list:
        """Constant pieces on the distance interval ``[a, b]``.

        Returns a list of ``(start, length, matrix)`` with ``start`` measured
        from the origin.
        """
        self._check_s(a)
        if b <= a:
            return []
        out = []
        L = self.length
        if a < L:
            out.extend(self._explicit_segments(a, min(b, L)))
        if b > L:
            start = max(a, L)
            if self.extension == "repeat-last":
                out.append((start, b - start, self.cells[-1].matrix))
            else:
                lp, p = self.prefix_length, self.period
                k = math.floor((start - lp) / p)
                while lp + k * p < b:
                    base = lp + k * p
                    lo, hi = max(start, base) - base, min(b, base + p) - base
                    if hi > lo:
                        out.extend(self._explicit_segments(lp + lo, lp + hi, base - lp))
                    k += 1
        scale = max(1.0, abs(b))
        return [(x0, d, m) for (x0, d, m) in out if d > _SLIVER * scale]

    # -- transformations -----------------------------------------------------

    def with_cells(self, cells, periodic_from: int | None = None, side: str | None = None):
        pf = self.periodic_from if periodic_from is None else periodic_from
        return HalfLineHamiltonian(tuple(cells), self.extension, side or self.side,
                                   pf if self.extension == "periodic" else 0)

    def reflected(self) -> "HalfLineHamiltonian":
        """Mirror image as a right half-line Hamiltonian.

        If ``u`` solves the system on the left half line, ``R u(-y)`` with
        ``R = diag(1, -1)`` solves the system with cells ``R M R`` on the right
        half line, for the same spectral parameter.
        """
        cells = [HamiltonianCell(c.length, c.matrix.reflected()) for c in self.cells]
        return self.with_cells(cells, side="left" if self.side == "right" else "right")

    def merged(self) -> "HalfLineHamiltonian":
        """Merge adjacent cells carrying the same matrix."""
        def merge(cells):
            out = []
            for c in cells:
                if out and out[-1].matrix.isclose(c.matrix):
                    out[-1] = HamiltonianCell(out[-1].length + c.length, out[-1].matrix)
                else:
                    out.append(c)
            return out

        if self.extension == "periodic":
            pre = merge(self.cells[: self.periodic_from])
            per = merge(self.cells[self.periodic_from:])
            return self.with_cells(pre + per, periodic_from=len(pre))
        cells = merge(self.cells)
        return self.with_cells(cells)

    def tail(self, s: float) -> "HalfLineHamiltonian":
        """The half-line Hamiltonian ``t -> H(s + t)`` (same side)."""
        self._check_s(s)
        if s == 0:
            return self
        L = self.length
        if self.extension == "repeat-last":
            if s >= L:
                last = self.cells[-1]
                return self.with_cells([last])
            segs = self._explicit_segments(s, L)
            return self.with_cells([HamiltonianCell(d, m) for _, d, m in segs])
        lp, p = self.prefix_length, self.period
        if s < lp:
            pre = [HamiltonianCell(d, m) for _, d, m in self._explicit_segments(s, lp)]
            pre = [c for c in pre if c.length > _SLIVER * max(1.0, lp)]
            return self.with_cells(pre + list(self.cells[self.periodic_from:]), periodic_from=len(pre))
        r = math.fmod(s - lp, p)
        head = self._explicit_segments(lp + r, L)
        back = self._explicit_segments(lp, lp + r)
        cells = [HamiltonianCell(d, m) for _, d, m in head + back if d > _SLIVER * max(1.0, p)]
        return self.with_cells(cells, periodic_from=0)

    def prepend(self, cells) -> "HalfLineHamiltonian":
        """Add cells next to the origin, keeping the extension of the rest."""
        cells = list(_as_cells(cells))
        if not cells:
            return self
        pf = self.periodic_from + len(cells) if self.extension == "periodic" else None
        return self.with_cells(cells + list(self.cells), periodic_from=pf)

    def cumulative(self, s: float, weight: Callable[[PSDMatrix2], float]) -> float:
        """``int_0^s weight(H(t)) dt`` exactly, using the extension rule."""
        self._check_s(s)
        L = self.length
        if s <= L or self.extension == "repeat-last":
            segs = self._explicit_segments(0.0, min(s, L))
            total = sum(d * weight(m) for _, d, m in segs)
            if s > L:
                total += (s - L) * weight(self.cells[-1].matrix)
            return total
        lp, p = self.prefix_length, self.period
        k, r = divmod(s - lp, p)
        pre = sum(d * weight(m) for _, d, m in self._explicit_segments(0.0, lp))
        per = sum(d * weight(m) for _, d, m in self._explicit_segments(lp, L))
        part = sum(d * weight(m) for _, d, m in self._explicit_segments(lp, lp + r))
        return pre + k * per + part

    def to_dict(self) -> dict:
        d = {
            "side": self.side,
            "extension": self.extension,
            "cells": [
                {"len": c.length, "H": [[c.matrix.a11, c.matrix.a12], [c.matrix.a12, c.matrix.a22]]}
                for c in self.cells
            ],
        }
        if self.periodic_from:
            d["periodic_from"] = self.periodic_from
        return d


@dataclass(frozen=True)
class WholeLineHamiltonian:
    """A pair of half-line Hamiltonians glued at the origin."""

    right: HalfLineHamiltonian
    left: HalfLineHamiltonian

    def __post_init__(self):
        if self.right.side != "right" or self.left.side != "left":
            raise ValidationError("whole-line Hamiltonian needs a right and a left side")

    @classmethod
    def symmetric(cls, right: HalfLineHamiltonian) -> "WholeLineHamiltonian":
        """Whole line with ``H(-x) = H(x)``."""
        return cls(right, right.with_cells(right.cells, side="left"))

    @classmethod
    def identity(cls) -> "WholeLineHamiltonian":
        return cls(HalfLineHamiltonian.identity("right"), HalfLineHamiltonian.identity("left"))

    def half(self, sign: str) -> HalfLineHamiltonian:
        if sign in ("+", "right"):
            return self.right
        if sign in ("-", "left"):
            return self.left
        raise DomainError(f"side must be '+' or '-', got {sign!r}")

    def segments(self, a: float, b: float) -> list:
        """Constant pieces ``(start, length, matrix)`` on the real interval ``[a, b]``."""
        out = []
        if a < 0:
            lo, hi = max(0.0, -b), -a
            for s0, d, m in reversed(self.left.segments(lo, hi)):
                out.append((-(s0 + d), d, m))
        if b > 0:
            out.extend(self.right.segments(max(0.0, a), b))
        return out

    def to_dict(self) -> dict:
        return {"right": self.right.to_dict(), "left": self.left.to_dict()}


# ---------------------------------------------------------------------------
# evaluation, normalization, shifts


def evaluate_at(H: HalfLineHamiltonian, x: float) -> PSDMatrix2:
    """Matrix ``H(x)``; ``x >= 0`` for right, ``x <= 0`` for left Hamiltonians."""
    if H.side == "right" and x < 0 or H.side == "left" and x > 0:
        raise DomainError(f"x = {x} is outside the domain of a {H.side} half-line Hamiltonian")
    return H.matrix_at(abs(x))


@dataclass(frozen=True)
class Reparametrization:
    """The map ``t(x) = int_0^x tr H(s) ds`` recorded piecewise linearly.

    ``x_breaks`` and ``t_breaks`` hold the images of the explicit cell
    boundaries; the extension rule of the source Hamiltonian covers the rest.
    For left Hamiltonians both coordinates are negative.
    """

    source: HalfLineHamiltonian
    x_breaks: np.ndarray = field(repr=False)
    t_breaks: np.ndarray = field(repr=False)

    def __call__(self, x: float) -> float:
        sign = -1.0 if self.source.side == "left" else 1.0
        if sign * x < 0:
            raise DomainError(f"x = {x} outside the domain")
        return sign * self.source.cumulative(abs(x), lambda m: m.trace)

    def inverse(self, t: float) -> float:
        """``x(t)``, solved cell by cell (``t`` is monotone with slope ``tr H > 0``)."""
        sign = -1.0 if self.source.side == "left" else 1.0
        tt = abs(t)
        H = self.source
        T_L = float(self.t_breaks[-1]) * sign
        if tt <= T_L:
            k = max(0, bisect.bisect_right(list(np.abs(self.t_breaks)), tt) - 1)
            k = min(k, len(H.cells) - 1)
            x0, t0 = abs(self.x_breaks[k]), abs(self.t_breaks[k])
            return sign * (x0 + (tt - t0) / H.cells[k].matrix.trace)
        if H.extension == "repeat-last":
            return sign * (H.length + (tt - T_L) / H.cells[-1].matrix.trace)
        t_pre = abs(self.t_breaks[H.periodic_from])
        t_per = T_L - t_pre
        k, r = divmod(tt - t_pre, t_per)
        inner = Reparametrization(H, self.x_breaks, self.t_breaks).inverse(sign * (t_pre + r))
        return sign * (abs(inner) + k * H.period)


def normalize_trace(H: HalfLineHamiltonian):
    """Rescale to ``tr H == 1`` cellwise.

    Returns ``(H_normalized, reparametrization)``.  Each cell keeps its
    position in the list; its length is multiplied by its trace and its
    matrix divided by it, so the normalized system has the same interval
    m-functions at the corresponding points and the same half-line m.
    """
    cells = []
    for c in H.cells:
        tr = c.matrix.trace
        if tr == 1.0:
            cells.append(c)
        else:
            cells.append(HamiltonianCell(c.length * tr, c.matrix.scaled(1.0 / tr)))
    Hn = H.with_cells(cells)
    sign = -1.0 if H.side == "left" else 1.0
    x_b = sign * H.boundaries
    t_b = sign * np.concatenate(([0.0], np.cumsum([c.length for c in cells])))
    return Hn, Reparametrization(H, x_b, t_b)


def shift_by(H: WholeLineHamiltonian, x: float) -> WholeLineHamiltonian:
    """The translate ``t -> H(x + t)``, re-partitioned into cells."""
    if x == 0:
        return H
    if x > 0:
        segs = H.right.segments(0.0, x)
        moved = [HamiltonianCell(d, m) for _, d, m in reversed(segs)]
        return WholeLineHamiltonian(H.right.tail(x), H.left.prepend(moved))
    segs = H.left.segments(0.0, -x)
    moved = [HamiltonianCell(d, m) for _, d, m in reversed(segs)]
    return WholeLineHamiltonian(H.right.prepend(moved), H.left.tail(-x))


def functions_equal(a, b, atol: float = 1e-12, horizon: float | None = None) -> bool:
    """Compare two Hamiltonians as functions on a bounded window.

    Works for half-line or whole-line inputs.  The default window covers the
    explicit cells of both inputs and two periods beyond them, which decides
    equality for the extension rules used here.
    """
    def reach(h: HalfLineHamiltonian) -> float:
        return h.length + 2.0 * (h.period or h.cells[-1].length)

    if isinstance(a, WholeLineHamiltonian):
        R = horizon or max(reach(a.right), reach(b.right), reach(a.left), reach(b.left))
        lo, hi = -R, R
        segs_a, segs_b = a.segments(lo, hi), b.segments(lo, hi)
    else:
        if a.side != b.side:
            return False
        hi = horizon or max(reach(a), reach(b))
        lo = 0.0
        segs_a, segs_b = a.segments(0.0, hi), b.segments(0.0, hi)
    pts = sorted({lo, hi} | {s for s, _, _ in segs_a} | {s for s, _, _ in segs_b}
                 | {s + d for s, d, _ in segs_a} | {s + d for s, d, _ in segs_b})

    def value(segs, t):
        for s, d, m in segs:
            if s <= t < s + d:
                return m
        return None

    for p0, p1 in zip(pts[:-1], pts[1:]):
        if p1 - p0 <= 1e-10 * max(1.0, abs(p1)):  # slivers left by rounding at cell edges
            continue
        t = 0.5 * (p0 + p1)
        ma, mb = value(segs_a, t), value(segs_b, t)
        if ma is None or mb is None:
            return False
        if not ma.isclose(mb, rtol=0.0, atol=atol):
            return False
    return True


# ---------------------------------------------------------------------------
# the metric on Hamiltonians


@dataclass(frozen=True)
class TestFamily:
    """Countable family of tent functions used to build the metric.

    Tents are enumerated level by level.  Level ``q = 1, 2, ...`` contributes
    the tents with half-width ``1/q`` centred at ``p/q`` for
    ``|p| <= q**2``, taken in the order ``p = 0, -1, 1, -2, 2, ...``.
    Level ``q`` therefore covers ``[-q, q]`` on a grid of mesh ``1/q``, and
    the union over all levels is dense in ``C_c(R)`` (finite linear
    combinations of such tents approximate any compactly supported
    continuous function uniformly).  Each tent is continuous, supported on
    ``[c - w, c + w]`` and peaks at 1.
    """

    __test__ = False  # not a pytest class

    n_max: int = 20

    def __post_init__(self):
        if self.n_max < 1:
            raise ValidationError("test family needs at least one function")

    def tents(self) -> list:
        """First ``n_max`` tents as ``(center, half_width)`` floats."""
        out: list = []
        for c, w in _tent_enumeration():
            out.append((float(c), float(w)))
            if len(out) == self.n_max:
                return out
        return out  # pragma: no cover

    def __call__(self, n: int, x):
        """Value of the ``n``-th tent (1-based) at ``x``."""
        c, w = self.tents()[n - 1]
        return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float) - c) / w)


def _tent_enumeration() -> Iterator[tuple]:
    q = 1
    while True:
        bound = q * q
        order = [0] + [s * k for k in range(1, bound + 1) for s in (-1, 1)]
        for p in order:
            yield Fraction(p, q), Fraction(1, q)
        q += 1


def tent_integral(c: float, w: float, a: float, b: float) -> float:
    """``int_a^b max(0, 1 - |x - c|/w) dx`` in closed form."""
    def F(x):
        if x <= c - w:
            return 0.0
        if x <= c:
            return (x - c + w) ** 2 / (2.0 * w)
        if x <= c + w:
            d = x - c
            return 0.5 * w + d - d * d / (2.0 * w)
        return w

    return F(b) - F(a)


def _tent_moments(H: WholeLineHamiltonian, c: float, w: float) -> np.ndarray:
    acc = np.zeros(3)
    for s0, d, m in H.segments(c - w, c + w):
        t = tent_integral(c, w, s0, s0 + d)
        acc += t * np.array([m.a11, m.a12, m.a22])
    return acc


@dataclass(frozen=True)
class MetricResult:
    value: float
    tail_bound: float
    n_terms: int

    def __float__(self):
        return self.value


def metric_distance(mu: WholeLineHamiltonian, nu: WholeLineHamiltonian,
                    family: TestFamily | None = None) -> MetricResult:
    """Truncated metric ``sum_n 2^-n rho_n / (1 + rho_n)``.

    ``rho_n`` sums ``|int f_n d(mu_ij - nu_ij)|`` over all four entries (the
    off-diagonal entry counts twice).  The neglected tail is at most
    ``2^-n_max`` and is reported, not added.
    """
    family = family or TestFamily()
    total = 0.0
    for n, (c, w) in enumerate(family.tents(), start=1):
        diff = _tent_moments(mu, c, w) - _tent_moments(nu, c, w)
        rho = abs(diff[0]) + 2.0 * abs(diff[1]) + abs(diff[2])
        total += 2.0 ** (-n) * rho / (1.0 + rho)
    return MetricResult(total, 2.0 ** (-family.n_max), family.n_max)


def cells_from_pairs(pairs: Sequence) -> tuple:
    """Convenience: ``[(length, [[h11, h12], [h12, h22]]), ...]`` to cells."""
    return _as_cells(pairs)

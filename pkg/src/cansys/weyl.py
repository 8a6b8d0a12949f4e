"""Weyl disks and m-functions.

For ``Im z > 0`` the interval m-functions ``m_N^beta(z)`` trace a circle with
centre ``W_N(u, conj v) / W_N(conj v, v)`` and radius ``1/|W_N(conj v, v)|``.
The disks are nested in ``N``, so the centre at any ``N`` is a certified
approximation of the half-line value with error at most the radius.

Left half-line Hamiltonians are handled by reflection: ``m_-`` for ``H``
(with ``u - m_- v`` square integrable on the left) equals ``m_+`` of the
right half-line Hamiltonian ``R H(-x) R``, ``R = diag(1, -1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PoleError, ValidationError
from .hamiltonian import HalfLineHamiltonian
from .solver import Propagator, TransferMatrix, pull_back, transfer_batch

TOL_LP = 1e-8
TOL_LC_REL = 0.01


@dataclass(frozen=True)
class WeylDisk:
    center: complex
    radius: float
    N: float
    z: complex

    def contains(self, m: complex, slack: float = 0.0) -> bool:
        return abs(m - self.center) <= self.radius + slack

    def on_circle(self, m: complex, tol: float = 1e-9) -> bool:
        return abs(abs(m - self.center) - self.radius) <= tol * max(1.0, abs(self.center))


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary angle ``alpha`` in ``(0, pi]``; ``pi`` is the ``alpha = 0`` condition."""

    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= math.pi:
            raise ValidationError(f"alpha must lie in (0, pi], got {self.alpha!r}")

    @classmethod
    def from_angle(cls, a: float) -> "BoundaryCondition":
        r = math.fmod(a, math.pi)
        if r <= 0:
            r += math.pi
        return cls(r)

    def initial_matrix(self) -> np.ndarray:
        """Columns ``u_alpha(0) = (cos a, -sin a)`` and ``v_alpha(0) = (sin a, cos a)``."""
        return rotation(self.alpha)


def rotation(alpha: float) -> np.ndarray:
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class MValue:
    value: complex
    error_radius: float
    z: complex
    N_used: float = math.nan
    converged: bool = True

    def __complex__(self):
        return complex(self.value)


# ---------------------------------------------------------------------------


def _right_version(H: HalfLineHamiltonian) -> HalfLineHamiltonian:
    return H.reflected() if H.side == "left" else H


def _transfers(H: HalfLineHamiltonian, N: float, z, alpha: float = 0.0) -> np.ndarray:
    T = transfer_batch(_right_version(H), N, z)
    if alpha:
        T = T @ rotation(alpha)
    return T


def _disk_parts(T):
    """Centre and radius arrays from a stack of transfer matrices."""
    u1, u2, v1, v2 = T[:, 0, 0], T[:, 1, 0], T[:, 0, 1], T[:, 1, 1]
    w_vbar_v = np.conj(v1) * v2 - np.conj(v2) * v1
    w_u_vbar = u1 * np.conj(v2) - u2 * np.conj(v1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return w_u_vbar / w_vbar_v, 1.0 / np.abs(w_vbar_v)


def _check_upper(z):
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(z.imag <= 0):
        raise DomainError("Weyl disks need Im z > 0")
    return z


def disk_at(H: HalfLineHamiltonian, N: float, z: complex, alpha: float = 0.0) -> WeylDisk:
    if not N > 0:
        raise DomainError("N must be positive")
    zz = _check_upper(z)
    T = _transfers(H, N, zz, alpha)
    with np.errstate(over="ignore", invalid="ignore"):
        c, r = _disk_parts(T)
    if np.isinf(r[0]) and np.all(np.isfinite(T)):
        # v never leaves ker H: [0, N] carries a single rank-one direction
        raise DomainError(f"no Weyl disk at N = {N}: H is one rank-one projection on [0, N]")
    return WeylDisk(complex(c[0]), float(r[0]), float(N), complex(z))


def m_on_interval(H: HalfLineHamiltonian, N: float, z: complex, beta: float, alpha: float = 0.0) -> complex:
    """``m_N^beta(z) = -(u1 sin b + u2 cos b) / (v1 sin b + v2 cos b)`` at ``N``."""
    if not N > 0:
        raise DomainError("N must be positive")
    T = _transfers(H, N, [z], alpha)[0]
    return _m_beta(T, beta)


def _m_beta(T, beta):
    sb, cb = math.sin(beta), math.cos(beta)
    num = T[0, 0] * sb + T[1, 0] * cb
    den = T[0, 1] * sb + T[1, 1] * cb
    scale = abs(T[0, 1] * sb) + abs(T[1, 1] * cb)
    if not np.isfinite(den) or abs(den) <= 8 * np.finfo(float).eps * scale:
        raise PoleError(f"m_N^beta has a pole: denominator {den!r}")
    return complex(-num / den)


def _rank_one_tail(H: HalfLineHamiltonian) -> float | None:
    """Angle ``phi`` if ``H`` ends in ``P_phi`` repeated forever, else ``None``."""
    last = H.cells[-1].matrix
    if H.extension == "repeat-last" and last.det <= 8 * np.finfo(float).eps * last.trace ** 2:
        return math.atan2(last.a12, last.a11) if last.a11 > 0 else math.pi / 2
    return None


def _tail_solution(H: HalfLineHamiltonian):
    """Start ``x0`` of a constant repeat-last tail and the L^2 solution there.

    On a tail ``P_phi`` the component along ``e_phi`` is conserved, so the
    solution must be orthogonal to it.  On a full-rank tail ``M`` it is the
    eigenvector of ``J^{-1} M`` for ``i sqrt(det M)``, the eigenvalue that
    decays for ``Im z > 0``.  Returns ``None`` for periodic Hamiltonians.
    """
    if H.extension != "repeat-last":
        return None
    last = H.cells[-1].matrix
    k0 = len(H.cells) - 1
    while k0 > 0 and H.cells[k0 - 1].matrix == last:
        k0 -= 1
    x0 = float(H.boundaries[k0])
    phi = _rank_one_tail(H)
    if phi is not None:
        return x0, np.array([-math.sin(phi), math.cos(phi)], dtype=complex)
    s = math.sqrt(last.det)
    return x0, np.array([1.0, (1j * s - last.a12) / last.a22])


def default_N_max(H: HalfLineHamiltonian) -> float:
    """Probe horizon used when the caller gives none.

    A rank-one repeat-last tail acts as a boundary condition at the end of
    the explicit cells (see :func:`m_halfline_batch`), so probing stops there.
    Everything else is probed far out.
    """
    if _rank_one_tail(H) is not None:
        return H.length
    return 1e12 * max(1.0, H.length)


def m_halfline_batch(H: HalfLineHamiltonian, z, tol: float = 1e-8, N_max: float | None = None,
                     N0: float | None = None, alpha: float = 0.0, refine: bool = False,
                     exact_tail: bool = True) -> list:
    """Half-line m-function at many spectral parameters.

    ``N`` runs through ``N0, 2 N0, 4 N0, ...`` (with ``N_max`` as the last
    probe, default from :func:`default_N_max`) until the disk radius is at
    most ``tol``.  With ``refine`` the
    first sufficient ``N`` is then lowered by bisection, which is legitimate
    because radii are non-increasing in ``N``.

    A constant repeat-last tail is solved exactly unless ``exact_tail`` is
    false: the L^2 solution on it is known in closed form (for ``P_phi`` it
    is the boundary condition ``beta = pi/2 - phi``) and is swept back to
    the origin.  The error radius is then a rounding estimate growing like
    the square root of the cell count, and ``N_used`` is where the tail
    starts.
    """
    zz = _check_upper(z)
    Hr = _right_version(H)
    if N_max is None:
        N_max = default_N_max(Hr)
    if N0 is None:
        N0 = min(1.0, Hr.length)
    n = len(zz)
    best_c = np.full(n, np.nan, dtype=complex)
    best_r = np.full(n, np.inf)
    best_N = np.full(n, np.nan)
    rot = rotation(alpha) if alpha else None
    exact = np.zeros(n, dtype=bool)
    tail = _tail_solution(Hr) if exact_tail else None
    if tail is not None and N_max >= tail[0] and n:
        # beyond x0 the L^2 condition is explicit, so sweep that solution back
        x0, f0 = tail
        g = pull_back(Hr, x0, zz, np.tile(f0, (n, 1)))
        if rot is not None:
            g = g @ rot  # rot^T g, row by row
        n_cells = len(Hr.segments(0.0, x0))
        for i in range(n):
            if abs(g[i, 0]) <= 8 * np.finfo(float).eps * abs(g[i, 1]):
                continue  # the tail forces m = infinity
            m = complex(g[i, 1] / g[i, 0])
            best_c[i], best_N[i], exact[i] = m, x0, True
            best_r[i] = 16 * np.finfo(float).eps * math.sqrt(n_cells) * (1 + abs(m)) * math.hypot(1, abs(m))
    live = np.flatnonzero(~exact)
    prop = Propagator(Hr, zz[live])
    N = float(N0)
    while len(live):
        N = min(N, N_max)
        T = prop(N)
        if rot is not None:
            T = T @ rot
        with np.errstate(all="ignore"):
            c, r = _disk_parts(T)
        finite = np.isfinite(c) & np.isfinite(r)
        ok = finite & (r < best_r[live])
        hit = live[ok]
        best_c[hit], best_r[hit], best_N[hit] = c[ok], r[ok], N
        # stop on convergence, and on overflow (keep the last finite enclosure);
        # before the first finite disk the interval may still be degenerate
        keep = ~(r <= tol) & (finite | ~np.isfinite(best_r[live]))
        if not keep.all():
            live = live[keep]
            prop.restrict(np.flatnonzero(keep))
        if len(live) == 0 or N >= N_max:
            break
        N *= 2.0
    if refine:
        for i in np.flatnonzero((best_r <= tol) & ~exact):
            lo, hi = best_N[i] / 2.0, best_N[i]
            if lo < N0:
                continue
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                c, r = _disk_parts(_transfers(Hr, mid, zz[i:i + 1], alpha))
                if r[0] <= tol:
                    hi, best_c[i], best_r[i], best_N[i] = mid, c[0], r[0], mid
                else:
                    lo = mid
                if hi - lo <= 1e-3 * hi:
                    break
    return [
        MValue(complex(best_c[i]), float(best_r[i]), complex(zz[i]), float(best_N[i]), bool(best_r[i] <= tol))
        for i in range(n)
    ]


def m_halfline(H: HalfLineHamiltonian, z: complex, tol: float = 1e-8, N_max: float | None = None,
               N0: float | None = None, alpha: float = 0.0, refine: bool = True,
               exact_tail: bool = True) -> MValue:
    """Certified half-line m-function (``m_+`` on the right, ``m_-`` on the left)."""
    return m_halfline_batch(H, [z], tol, N_max, N0, alpha, refine, exact_tail)[0]


def mobius_change_alpha(m: complex, gamma: float) -> complex:
    """``(-sin g + m cos g) / (cos g + m sin g)``."""
    s, c = math.sin(gamma), math.cos(gamma)
    den = c + m * s
    if abs(den) <= 8 * np.finfo(float).eps * (abs(c) + abs(m * s)):
        raise PoleError(f"m = {m} is the pole of the rotation by {gamma}")
    return (-s + m * c) / den


def mobius_change_alpha_minus(m: complex, gamma: float) -> complex:
    """Companion of :func:`mobius_change_alpha` for ``m_-``: ``(sin g + m cos g) / (cos g - m sin g)``."""
    s, c = math.sin(gamma), math.cos(gamma)
    den = c - m * s
    if abs(den) <= 8 * np.finfo(float).eps * (abs(c) + abs(m * s)):
        raise PoleError(f"m = {m} is the pole of the rotation by {gamma}")
    return (s + m * c) / den


def translate_m(m0: complex, T, sign: str = "+") -> complex:
    """Move ``m_+`` or ``m_-`` from base point 0 to the endpoint of ``T``.

    ``m_+(a) = (u2 + m v2) / (u1 + m v1)`` and
    ``m_-(a) = -(u2 - m v2) / (u1 - m v1)``.
    """
    M = T.matrix if isinstance(T, TransferMatrix) else np.asarray(T)
    u1, u2, v1, v2 = M[0, 0], M[1, 0], M[0, 1], M[1, 1]
    if sign == "+":
        num, den, pre = u2 + m0 * v2, u1 + m0 * v1, 1.0
    elif sign == "-":
        num, den, pre = u2 - m0 * v2, u1 - m0 * v1, -1.0
    else:
        raise DomainError(f"sign must be '+' or '-', got {sign!r}")
    if abs(den) <= 8 * np.finfo(float).eps * (abs(u1) + abs(m0 * v1)):
        raise PoleError("translated m-function has a pole here")
    return complex(pre * num / den)


@dataclass(frozen=True)
class LimitClassification:
    kind: str
    N_seq: tuple
    radii: tuple = field(default=())

    def __str__(self):
        return self.kind


def classify_limit_type(H: HalfLineHamiltonian, z: complex, N_seq, tol_lp: float = TOL_LP,
                        tol_lc: float = TOL_LC_REL) -> LimitClassification:
    """Heuristic limit-point / limit-circle decision from disk radii along ``N_seq``.

    Limit point if the last radius is below ``tol_lp``; limit circle if the
    last two radii differ by less than ``tol_lc`` relatively; otherwise
    undetermined.
    """
    N_seq = tuple(float(n) for n in N_seq)
    if not N_seq or any(b <= a for a, b in zip(N_seq, N_seq[1:])):
        raise DomainError("N_seq must be non-empty and increasing")
    radii = []
    for n in N_seq:
        with np.errstate(all="ignore"):
            r = disk_at(H, n, z).radius
        # an overflowed transfer matrix means the disk is below double resolution
        radii.append(r if math.isfinite(r) else 0.0)
    radii = tuple(radii)
    if radii[-1] < tol_lp:
        kind = "limit-point"
    elif len(radii) >= 2 and abs(radii[-1] - radii[-2]) <= tol_lc * radii[-2]:
        kind = "limit-circle"
    else:
        kind = "undetermined"
    return LimitClassification(kind, N_seq, radii)

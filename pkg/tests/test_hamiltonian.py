import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cansys import (DomainError, HalfLineHamiltonian, PSDMatrix2, TestFamily, ValidationError,
                    WholeLineHamiltonian, evaluate_at, functions_equal, metric_distance,
                    normalize_trace, shift_by)
from cansys.hamiltonian import tent_integral

from conftest import half_lines, psd_matrices, whole_lines

I2 = PSDMatrix2(1, 0, 1)
P1 = PSDMatrix2(1, 0, 0)
P2 = PSDMatrix2(0, 0, 1)


def two_cell(ext="periodic", side="right"):
    return HalfLineHamiltonian(((1, P1), (1, P2)), ext, side)


# -- types --------------------------------------------------------------------

def test_psd_rejects_zero_and_indefinite():
    with pytest.raises(ValidationError):
        PSDMatrix2(0, 0, 0)
    with pytest.raises(ValidationError):
        PSDMatrix2(1, 2, 1)
    with pytest.raises(ValidationError):
        PSDMatrix2(-1, 0, 3)


def test_psd_tolerates_rounding_in_rank_one():
    # det = -1e-17: rounding noise on an outer product
    M = PSDMatrix2(1.0, 1.0 + 5e-18, 1.0)
    assert M.det <= 0


def test_cell_index_in_error():
    with pytest.raises(ValidationError, match="cell 1"):
        HalfLineHamiltonian(((1, I2), (1, [[1, 2], [2, 1]])))


def test_bad_length_and_extension():
    with pytest.raises(ValidationError):
        HalfLineHamiltonian(((0.0, I2),))
    with pytest.raises(ValidationError):
        HalfLineHamiltonian(((1, I2),), "sometimes")
    with pytest.raises(ValidationError):
        HalfLineHamiltonian(())


def test_whole_line_sides_checked():
    with pytest.raises(ValidationError):
        WholeLineHamiltonian(HalfLineHamiltonian.identity("right"), HalfLineHamiltonian.identity("right"))


# -- evaluate_at ------------------------------------------------------------------

def test_evaluate_examples():
    H = HalfLineHamiltonian.identity()
    assert evaluate_at(H, 5.0) == I2
    H2 = two_cell()
    assert evaluate_at(H2, 2.5) == P1
    assert evaluate_at(H2, 1.0) == P2


def test_evaluate_left_side_and_domain():
    H = two_cell(side="left")
    assert evaluate_at(H, -0.5) == P1
    assert evaluate_at(H, -1.0) == P2  # left-continuity: the outer cell
    with pytest.raises(DomainError):
        evaluate_at(H, 0.5)
    with pytest.raises(DomainError):
        evaluate_at(two_cell(), -0.1)


def test_repeat_last_beyond_cells():
    H = HalfLineHamiltonian(((1, P1), (2, P2)))
    assert evaluate_at(H, 100.0) == P2


# -- normalize_trace -----------------------------------------------------------

def test_normalize_identity_example():
    Hn, t = normalize_trace(HalfLineHamiltonian.identity())
    assert Hn.cells[0].length == 2.0
    assert Hn.cells[0].matrix == PSDMatrix2(0.5, 0, 0.5)
    assert t(1.0) == 2.0


def test_normalize_quadratic_example():
    # [[1, x], [x, x^2]] sampled at k midpoints: t(1) -> 1 + 1/3
    errs = []
    for k in (50, 100, 200):
        xs = (np.arange(k) + 0.5) / k
        H = HalfLineHamiltonian(tuple((1 / k, PSDMatrix2(1, x, x * x)) for x in xs))
        _, t = normalize_trace(H)
        errs.append(abs(t(1.0) - 4 / 3))
    assert errs[-1] < 1e-5
    assert errs[0] > errs[1] > errs[2]


def test_normalized_is_unchanged():
    H = HalfLineHamiltonian(((1, PSDMatrix2(0.5, 0.1, 0.5)), (2, P1)))
    Hn, t = normalize_trace(H)
    assert Hn == H
    for x in (0.3, 1.0, 2.7, 8.0):
        assert t(x) == pytest.approx(x, abs=1e-15)


@given(half_lines())
def test_normalize_idempotent(H):
    H1, _ = normalize_trace(H)
    H2, _ = normalize_trace(H1)
    assert functions_equal(H1, H2, atol=1e-14)
    assert all(abs(c.matrix.trace - 1) < 1e-14 for c in H1.cells)


@given(half_lines(), st.floats(0.0, 1.0))
def test_normalize_pointwise(H, frac):
    Hn, t = normalize_trace(H)
    k = min(int(frac * len(H.cells)), len(H.cells) - 1)
    x = H.boundaries[k] + 0.37 * H.cells[k].length
    M = evaluate_at(H, x)
    assert evaluate_at(Hn, t(x)).isclose(M.scaled(1 / M.trace), atol=1e-13)
    assert t.inverse(t(x)) == pytest.approx(x, rel=1e-12)


def test_reparametrization_inverse_on_periodic_tail():
    H = HalfLineHamiltonian(((1, PSDMatrix2(2, 0, 1)), (1, P1)), "periodic")
    _, t = normalize_trace(H)
    for x in (0.2, 3.4, 10.9):
        assert t.inverse(t(x)) == pytest.approx(x, rel=1e-12)
    # -- rate: trace 3 then 1 per unit cell
    assert t(4.0) == pytest.approx(8.0)


# -- shift_by ------------------------------------------------------------------------

def test_shift_constant():
    W = WholeLineHamiltonian.identity()
    assert functions_equal(shift_by(W, 3.7), W)


def test_shift_periodic_by_period():
    R = two_cell()
    L = HalfLineHamiltonian(((1, P2), (1, P1)), "periodic", "left")
    W = WholeLineHamiltonian(R, L)
    assert functions_equal(shift_by(W, 2.0), W)
    assert functions_equal(shift_by(W, -4.0), W)


def test_shift_splits_cell():
    A, B = PSDMatrix2(1, 0.2, 1), PSDMatrix2(2, 0, 1)
    R = HalfLineHamiltonian(((1, A), (1, B)))
    W = WholeLineHamiltonian(R, HalfLineHamiltonian.identity("left"))
    S = shift_by(W, 0.5).right
    assert [(c.length, c.matrix) for c in S.cells] == [(0.5, A), (1.0, B)]
    assert S.extension == "repeat-last"


@given(whole_lines(), st.floats(-3, 3), st.floats(-3, 3))
def test_shift_composes(W, a, b):
    lhs = shift_by(shift_by(W, a), b)
    rhs = shift_by(W, a + b)
    assert functions_equal(lhs, rhs, atol=1e-12, horizon=12.0)


# -- tent family and metric -------------------------------------------------------------------

def test_tent_enumeration_order():
    tents = TestFamily(8).tents()
    assert tents[:3] == [(0.0, 1.0), (-1.0, 1.0), (1.0, 1.0)]
    assert tents[3] == (0.0, 0.5)  # level 2 starts at the origin
    assert tents[4] == (-0.5, 0.5)


def test_tent_values_bounded_and_continuous():
    fam = TestFamily(30)
    x = np.linspace(-6, 6, 4001)
    for n in range(1, 31):
        f = fam(n, x)
        assert f.max() <= 1.0 and f.min() >= 0.0
        assert np.max(np.abs(np.diff(f))) < 0.02


@given(st.floats(-2, 2), st.floats(0.05, 2), st.floats(-4, 4), st.floats(0, 4))
def test_tent_integral_matches_quadrature(c, w, a, d):
    b = a + d
    x = np.linspace(a, b, 20001)
    f = np.maximum(0, 1 - np.abs(x - c) / w)
    ref = np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(x))
    assert tent_integral(c, w, a, b) == pytest.approx(ref, abs=2e-6)


def test_metric_identical_is_zero():
    W = WholeLineHamiltonian(two_cell(), two_cell(side="left"))
    assert metric_distance(W, W).value == 0.0


def test_metric_brute_force_oracle():
    mu = WholeLineHamiltonian.symmetric(HalfLineHamiltonian.constant(P1))
    nu = WholeLineHamiltonian.symmetric(HalfLineHamiltonian.constant(P2))
    # independent sum: each tent integrates to w against a constant, and rho = 2w
    total, n = 0.0, 0
    q = 1
    while n < 20:
        for p in [0] + [s * k for k in range(1, q * q + 1) for s in (-1, 1)]:
            if n == 20:
                break
            n += 1
            rho = 2 * Fraction(1, q)
            total += 2.0 ** (-n) * float(rho / (1 + rho))
        q += 1
    r = metric_distance(mu, nu, TestFamily(20))
    assert r.value == pytest.approx(total, rel=1e-14)
    assert r.tail_bound == 2.0 ** -20


@given(whole_lines(2), whole_lines(2), whole_lines(2))
def test_metric_axioms(a, b, c):
    fam = TestFamily(12)
    slack = 3 * 2.0 ** -12
    dab = metric_distance(a, b, fam).value
    assert 0 <= dab < 1
    assert dab == pytest.approx(metric_distance(b, a, fam).value, abs=1e-15)
    assert dab <= metric_distance(a, c, fam).value + metric_distance(c, b, fam).value + slack


def test_metric_periodic_shift_zero():
    R = two_cell()
    L = HalfLineHamiltonian(((1, P2), (1, P1)), "periodic", "left")
    W = WholeLineHamiltonian(R, L)
    assert metric_distance(shift_by(W, 2.0), W).value == pytest.approx(0.0, abs=1e-15)

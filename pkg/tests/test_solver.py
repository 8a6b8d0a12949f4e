import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from cansys import (DomainError, HalfLineHamiltonian, NonContractionError, PSDMatrix2, WholeLineHamiltonian,
                    energy_integrals, greens_identity_residual, picard_solve, shift_by, transfer, wronskian)
from cansys.solver import J, J_INV, cell_propagator, generator, picard_step, transfer_batch

from conftest import half_lines, psd_matrices, upper

IDENT = HalfLineHamiltonian.identity()
ch, sh = math.cosh(1.0), math.sinh(1.0)
FREE_T1 = np.array([[ch, 1j * sh], [-1j * sh, ch]])


def expm_taylor(A, terms=80):
    # plain Taylor series with scaling and squaring, independent of the closed form
    s = max(0, int(np.ceil(np.log2(max(np.abs(A).max(), 1e-300)))) + 1)
    B = A / 2 ** s
    out, term = np.eye(2, dtype=complex), np.eye(2, dtype=complex)
    for k in range(1, terms):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def test_identity_cell_closed_form():
    E = cell_propagator(PSDMatrix2(1, 0, 1), 1.0, 1j)
    assert np.allclose(E, FREE_T1, atol=1e-14)


def test_rank_one_cell_is_linear_in_z():
    phi = 0.7
    P = PSDMatrix2.rank_one(1.0, phi)
    for z in (0.3 + 2j, -5 + 0.1j, 40j):
        E = cell_propagator(P, 1.3, z)
        assert np.allclose(E, np.eye(2) + z * 1.3 * J_INV @ P.as_array(), atol=1e-12 * abs(z))


def test_nonpositive_length_rejected():
    with pytest.raises(DomainError):
        cell_propagator(PSDMatrix2(1, 0, 1), 0.0, 1j)


@given(psd_matrices(), st.floats(0.01, 3.0), upper)
def test_cell_matches_taylor_exponential(M, d, z):
    ref = expm_taylor(z * d * generator(M))
    E = cell_propagator(M, d, z)
    assert np.allclose(E, ref, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(ref).max()))


def test_small_generator_uses_series():
    M = PSDMatrix2(1, 0, 1)
    E = cell_propagator(M, 1e-6, 1j)
    ref = expm_taylor(1j * 1e-6 * generator(M))
    assert np.allclose(E, ref, atol=1e-16)


def test_transfer_examples():
    assert np.array_equal(transfer(IDENT, 0.0, 1j).matrix, np.eye(2))
    T = transfer(IDENT, 1.0, 1j)
    assert np.allclose(T.matrix, FREE_T1, atol=1e-14)
    assert np.allclose(T.u, [ch, -1j * sh]) and np.allclose(T.v, [1j * sh, ch])


def test_transfer_splits_cell_at_N():
    H = HalfLineHamiltonian(((2.0, PSDMatrix2(1, 0, 1)), (1.0, PSDMatrix2(1, 0, 0))))
    assert np.allclose(transfer(H, 1.0, 1j).matrix, FREE_T1, atol=1e-14)


@given(half_lines(normalized=True), st.floats(0.1, 100.0), st.builds(complex, st.floats(-7, 7), st.floats(-7, 7)))
def test_det_one(H, N, z):
    T = transfer(H, N, z)
    big = float(np.abs(T.matrix).max())
    assume(big < 1e150)  # beyond this the determinant itself overflows
    scale = max(1.0, big ** 2)
    assert abs(T.det - 1) <= 1e-10 * scale


@given(half_lines(), st.floats(0.0, 5.0), st.floats(0.0, 5.0), upper)
def test_cocycle(H, a, b, z):
    W = WholeLineHamiltonian(H, HalfLineHamiltonian.identity("left"))
    tailH = shift_by(W, a).right
    lhs = transfer(H, a + b, z).matrix
    rhs = transfer(tailH, b, z).matrix @ transfer(H, a, z).matrix
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(lhs).max()))


def test_left_side_solves_mirrored_system():
    # on the left, T(-N) should satisfy T(-N) = exp(-z N J^-1 M) for one constant cell
    M = PSDMatrix2(2, 0.5, 1)
    H = HalfLineHamiltonian(((3.0, M),), side="left")
    z = 0.4 + 0.9j
    T = transfer(H, 1.5, z)
    assert T.x == -1.5
    assert np.allclose(T.matrix, expm_taylor(-z * 1.5 * generator(M)), atol=1e-12)


def test_periodic_tail_uses_monodromy():
    A, B = PSDMatrix2(2, 0, 0.5), PSDMatrix2(1, 0.3, 1)
    H = HalfLineHamiltonian(((1, A), (1, B)), "periodic")
    z = 0.7 + 0.2j
    mono = cell_propagator(B, 1.0, z) @ cell_propagator(A, 1.0, z)
    T = transfer(H, 7.5, z).matrix
    # 7.5 = three periods, then all of A and half of B
    ref = cell_propagator(B, 0.5, z) @ cell_propagator(A, 1.0, z) @ np.linalg.matrix_power(mono, 3)
    assert np.allclose(T, ref, rtol=1e-12)


def test_batch_agrees_with_scalar():
    H = HalfLineHamiltonian(((1, PSDMatrix2(2, 0, 0.5)), (0.5, PSDMatrix2.rank_one(1, 0.3))), "periodic")
    zs = np.array([1j, 2 + 0.5j, -1 + 3j])
    Tb = transfer_batch(H, 4.2, zs)
    for z, T in zip(zs, Tb):
        assert np.allclose(T, transfer(H, 4.2, z).matrix, rtol=1e-13)


def test_wronskian_convention():
    assert wronskian([1, 0], [0, 1]) == 1
    assert wronskian([0, 1], [1, 0]) == -1


# -- energy integrals --------------------------------------------------------------

def test_energy_integrals_identity():
    E = energy_integrals(IDENT, 1.0, 1j)
    assert E.vHv == pytest.approx(math.sinh(2) / 2, abs=1e-13)
    assert E.im_uHv == pytest.approx((math.cosh(2) - 1) / 2, abs=1e-13)


def test_energy_integrals_vanish():
    E = energy_integrals(IDENT, 1e-9, 1j)
    assert abs(E.vHv) < 2e-9 and abs(E.im_uHv) < 1e-17


@given(half_lines(), st.floats(0.1, 8.0), upper)
def test_energy_integrals_wronskian_identities(H, N, z):
    E = energy_integrals(H, N, z)
    T = transfer(H, N, z)
    u, v = T.u, T.v
    # the two identities behind the disk separation bound
    w_vvbar = wronskian(v, np.conj(v))
    w_uvbar = wronskian(u, np.conj(v))
    scale = max(1.0, abs(w_vvbar), abs(w_uvbar))
    assert abs(E.vHv - w_vvbar / (2j * z.imag)) <= 1e-9 * scale / z.imag
    assert abs(E.im_uHv - (1 - w_uvbar.real) / (-2 * z.imag)) <= 1e-9 * scale / z.imag
    assert E.vHv.real >= -1e-12 * scale


def test_energy_against_quadrature():
    H = HalfLineHamiltonian(((0.7, PSDMatrix2(2, 0.4, 1)), (1.1, PSDMatrix2.rank_one(1.5, 2.0))))
    z = -0.50 + 0.8j
    xs = np.linspace(0, 1.8, 3601)
    vals = []
    for x in xs:
        T = transfer(H, x, z)
        M = H.matrix_at(min(x, 1.8 - 1e-12)).as_array()
        vals.append(np.conj(T.v) @ M @ T.v)
    vals = np.array(vals)
    ref = np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(xs))
    assert energy_integrals(H, 1.8, z).vHv == pytest.approx(ref, rel=2e-4)


# -- Green's identity -----------------------------------------------------------------

def test_green_identity_examples():
    assert greens_identity_residual(IDENT, 1.0, 1j, 1j) < 1e-10
    assert greens_identity_residual(IDENT, 0.2, 1j, 0.7) < 1e-8


@given(half_lines(), st.floats(0.1, 20.0), upper, st.builds(complex, st.floats(-3, 3), st.floats(-3, 3)))
def test_green_identity_property(H, N, z, m):
    assert greens_identity_residual(H, N, z, m) < 1e-8


def test_green_needs_nonreal_z():
    with pytest.raises(DomainError):
        greens_identity_residual(IDENT, 1.0, 2.0, 1j)


# -- Picard ------------------------------------------------------------------------------

def test_picard_first_step():
    for z in (1j, 0.3 - 0.2j):
        for x in (0.1, 0.4):
            assert np.allclose(picard_step(IDENT, x, z, [1, 0]), [1, -z * x], atol=1e-15)


def test_picard_identity():
    u = picard_solve(IDENT, 0.1, 1j, [1, 0])
    assert np.allclose(u, transfer(IDENT, 0.1, 1j).matrix @ [1, 0], atol=1e-10)


def test_picard_zero_length():
    u0 = np.array([0.3 + 1j, -2.0])
    assert np.array_equal(picard_solve(IDENT, 0.0, 5j, u0), u0)


def test_picard_refuses_outside_contraction():
    with pytest.raises(NonContractionError, match="split"):
        picard_solve(IDENT, 2.0, 1j, [1, 0])


@given(half_lines(max_cells=3), st.floats(0.01, 1.0), upper,
       st.builds(complex, st.floats(-1, 1), st.floats(-1, 1)))
def test_picard_matches_transfer(H, frac, z, b):
    norm = max(np.linalg.norm(c.matrix.as_array(), 2) for c in H.cells)
    x = min(frac, 0.5 / (abs(z) * norm))
    u0 = np.array([1.0, b])
    u = picard_solve(H, x, z, u0)
    assert np.allclose(u, transfer(H, x, z).matrix @ u0, atol=1e-8)

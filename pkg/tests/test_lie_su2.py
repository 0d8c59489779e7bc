import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from csdual import lie_su2 as su

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


def levi_civita(i, j, k):
    return float((i - j) * (j - k) * (k - i) / 2)


def T_loops(A):
    out = np.zeros((3, 3))
    for Z, p in itertools.product(range(3), repeat=2):
        for q, r, B, C in itertools.product(range(3), repeat=4):
            out[Z, p] += levi_civita(p, q, r) * levi_civita(Z, B, C) * A[B, q] * A[C, r]
    return out


def test_levi_civita_table():
    for i, j, k in itertools.product(range(3), repeat=3):
        assert su.EPS[i, j, k] == levi_civita(i, j, k)


def test_structure_constants_from_matrices():
    sd = su.derive_structure_constants()
    E = su.Su2Basis.standard().E
    for J, K in itertools.product(range(3), repeat=2):
        lhs = su.commutator(E[J], E[K])
        rhs = np.einsum("L,Lab->ab", sd.c[J, K], E)
        assert np.allclose(lhs, rhs, atol=1e-14)
    assert sd.c[0, 1, 2] == pytest.approx(-2.0)
    assert sd.sign == -1


def test_verify_identities_reports_sign():
    rep = su.verify_identities()
    assert rep.passed
    info = rep.extra["triple_trace_sign"]
    assert info["measured_sign"] == -1 and info["discrepancy"]
    assert rep.extra["bracket_pairing_E3_E1E2"] == pytest.approx(-2.0)


def test_conjugated_basis_keeps_identities():
    U = su.random_unitary(np.random.default_rng(1))
    assert su.verify_identities(su.Su2Basis.standard().conjugated(U)).passed


def test_broken_basis_is_reported_not_raised():
    rep = su.verify_identities(su.Su2Basis.standard().scaled(1.1))
    assert not rep.passed
    assert any(c.name == "squares_minus_identity" for c in rep.failures())


def test_inner_product_normalisation():
    E = su.Su2Basis.standard().E
    gram = np.array([[su.inner(E[J], E[K]) for K in range(3)] for J in range(3)])
    assert np.allclose(gram, np.eye(3), atol=1e-15)


def test_quad_T_matches_index_loops():
    rng = np.random.default_rng(0)
    for _ in range(5):
        A = rng.standard_normal((3, 3))
        assert np.allclose(su.quad_T(A), T_loops(A), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(mat3)
def test_T_is_twice_cofactor_and_contracts_to_det(A):
    def minor(i, j):
        m = np.delete(np.delete(A, i, 0), j, 1)
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    cof = np.array([[(-1) ** (i + j) * minor(i, j) for j in range(3)] for i in range(3)])
    det = np.dot(A[0], cof[0])
    assert np.allclose(su.quad_T(A), 2 * cof, atol=1e-9)
    assert np.sum(A * su.quad_T(A)) == pytest.approx(6 * det, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(mat3, mat3)
def test_coupling_matrix_is_polarised_T(lam, A):
    M = su.coupling_matrix(lam)
    a = A.reshape(9)
    assert a @ M @ a == pytest.approx(np.sum(lam * su.quad_T(A)), abs=1e-8)
    assert np.allclose(M, M.T, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(mat3)
def test_key_estimate(A):
    nT = np.linalg.norm(su.quad_T(A))
    assert nT <= 2 * np.sum(A ** 2) * (1 + 1e-12) + 1e-300

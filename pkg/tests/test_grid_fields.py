import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csdual import grid_fields as gf
from csdual.lie_su2 import EPS


@pytest.mark.parametrize("scheme,n", [("sbp42", 7), ("central2", 2)])
def test_grid_too_small(scheme, n):
    with pytest.raises(gf.GridTooSmall):
        gf.BoxGrid.unit(n, scheme)


def test_mismatched_grids_rejected():
    a, b = gf.BoxGrid.unit(8), gf.BoxGrid.unit(9)
    with pytest.raises(gf.GridMismatch):
        gf.pairing(gf.CoeffField.zeros(a), gf.CoeffField.zeros(b))
    with pytest.raises(gf.GridMismatch):
        gf.CoeffField(a, np.zeros((8, 8, 8, 3, 2)))


def test_nonfinite_data_rejected():
    d = np.zeros((8, 8, 8, 3, 3))
    d[1, 2, 3, 0, 0] = np.nan
    with pytest.raises(ValueError):
        gf.CoeffField(gf.BoxGrid.unit(8), d)


@pytest.mark.parametrize("n", [8, 13])
def test_sbp_property(n):
    h = 0.1
    D, w = gf.diff_operator(n, h)
    Q = np.diag(w) @ D
    B = np.zeros((n, n))
    B[0, 0], B[-1, -1] = -1, 1
    assert np.allclose(Q + Q.T, B, atol=1e-13)


@pytest.mark.parametrize("scheme", gf.SCHEMES)
def test_derivative_exact_on_quadratics(scheme):
    n, h = 11, 0.2
    D, w = gf.diff_operator(n, h, scheme)
    x = np.arange(n) * h
    assert np.allclose(D @ (3 * x ** 2 - x + 1), 6 * x - 1, atol=1e-11)
    assert np.sum(w) == pytest.approx((n - 1) * h)


def test_sbp_interior_is_fourth_order():
    errs = []
    for n in (17, 33):
        D, _ = gf.diff_operator(n, 1 / (n - 1))
        x = np.linspace(0, 1, n)
        errs.append(np.max(np.abs((D @ np.sin(2 * x) - 2 * np.cos(2 * x))[4:-4])))
    assert np.log2(errs[0] / errs[1]) > 3.7


def test_quadrature_of_linear_on_shifted_box():
    g = gf.BoxGrid((1.0, -2.0, 0.5), (2.0, 1.0, 3.0), (9, 10, 11))
    x = g.coords()
    assert gf.volume_integral(g, x[..., 0]) == pytest.approx(2.0 * 6.0, rel=1e-12)
    assert g.volume == pytest.approx(6.0)


def test_curl_adjoint_is_transpose():
    rng = np.random.default_rng(0)
    g = gf.BoxGrid((0, 0, 0), (1, 2, 1), (8, 9, 10))
    u = rng.standard_normal(g.n + (3, 3))
    v = rng.standard_normal(g.n + (3, 3))
    lhs = np.sum(gf.curl_array(g, u) * v)
    rhs = np.sum(u * gf.curl_adjoint_array(g, v))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_curl_matches_index_loops():
    rng = np.random.default_rng(1)
    g = gf.BoxGrid.unit(8)
    A = rng.standard_normal(g.n + (3, 3))
    d = [gf.diff(g, A, q) for q in range(3)]
    ref = np.zeros_like(A)
    for Z in range(3):
        for r in range(3):
            for q in range(3):
                for p in range(3):
                    ref[..., Z, r] += EPS[r, q, p] * d[q][..., Z, p]
    assert np.allclose(gf.curl_array(g, A), ref)


def test_discrete_green_identity():
    rng = np.random.default_rng(2)
    g = gf.BoxGrid((0, 0, 0), (1, 1.5, 0.7), (8, 9, 11))
    A = gf.CoeffField.random(g, rng)
    lam = gf.CoeffField.random(g, rng)
    lhs = gf.pairing(A, gf.curl_rowwise(lam)) - gf.pairing(lam, gf.curl_rowwise(A))
    # B_h(lam, A|bdry) is the boundary pairing with the trace of A
    rhs = gf.boundary_pairing(lam, gf.BoundaryField.trace(A))
    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_abelian_pure_gauge():
    # exp(x_1 E_3) gives A_31 = 1 in the continuum; the stencils carry O(h^2) error
    target = np.zeros((3, 3))
    target[2, 0] = 1.0
    errs = []
    for n in (9, 17, 33):
        g = gf.BoxGrid.unit(n)
        A = gf.pure_gauge_field(g, gf.gauge_from_factors(g, [(1, 3, 1.0)]))
        errs.append(np.max(np.abs(A.data - target)))
    assert errs[0] < 1e-2
    assert np.log2(errs[0] / errs[1]) > 1.9 and np.log2(errs[1] / errs[2]) > 1.9


def test_pure_gauge_requires_su2():
    g = gf.BoxGrid.unit(8)
    with pytest.raises(gf.NotUnitary):
        gf.pure_gauge_field(g, 1.1 * gf.gauge_from_factors(g, [(1, 1, 0.5)]))


def test_su2_exp_is_special_unitary():
    v = np.random.default_rng(3).standard_normal((20, 3))
    U = gf.su2_exp(v)
    assert np.allclose(np.conj(np.swapaxes(U, -1, -2)) @ U, np.eye(2), atol=1e-13)
    assert np.allclose(np.linalg.det(U), 1, atol=1e-13)


def test_snapshot_round_trip(tmp_path):
    g = gf.BoxGrid((0.5, 0, -1), (1, 2, 3), (8, 9, 10))
    f = gf.CoeffField.random(g, np.random.default_rng(4))
    p = tmp_path / "f.csdf"
    gf.write_snapshot(p, f)
    hdr = gf.read_header(p)
    assert hdr["n"] == [8, 9, 10] and hdr["origin"] == [0.5, 0.0, -1.0]
    back = gf.read_snapshot(p)
    assert back.grid == g and np.array_equal(back.data, f.data)


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csdf"
    p.write_bytes(b"nope" * 30)
    with pytest.raises(ValueError):
        gf.read_snapshot(p)


def test_csv_export_layout():
    g = gf.BoxGrid.unit(8)
    f = gf.CoeffField.random(g, np.random.default_rng(5))
    buf = io.StringIO()
    gf.export_csv(f, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x1,x2,x3,Z,p,value"
    assert len(lines) == 1 + 8 ** 3 * 9
    first = lines[1].split(",")
    assert first[3:5] == ["1", "1"] and float(first[5]) == f.data[0, 0, 0, 0, 0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_pairing_is_symmetric_bilinear(seed, a, b):
    rng = np.random.default_rng(seed)
    g = gf.BoxGrid.unit(8)
    f, h, k = (gf.CoeffField.random(g, rng) for _ in range(3))
    assert gf.pairing(f, h) == pytest.approx(gf.pairing(h, f), rel=1e-12)
    lhs = gf.pairing(a * f + b * h, k)
    rhs = a * gf.pairing(f, k) + b * gf.pairing(h, k)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)

"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Run under pytest (the lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time

import numpy as np

from csdual import chern_simons as cs
from csdual import dual_quadratic as dq
from csdual import grid_fields as gf
from csdual import lie_su2 as su
from csdual import tilde_dual as td
from csdual.g_pointwise import GParams, certify_bounds, g_quadratic_closed, g_sup_oracle, quadratic_batch
from csdual.gradcheck import STEPS, directional_check, random_direction, smooth_field

RESULTS: dict[int, tuple[str, bool, str]] = {}


def verdict(num: int, name: str, ok: bool, detail: str) -> None:
    RESULTS[num] = (name, bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {name}: {detail}")
    assert ok, detail


def _pure_gauge(grid, factors=((1, 1, 0.3), (2, 2, 0.3))):
    return gf.pure_gauge_field(grid, gf.gauge_from_factors(grid, list(factors)))


def _frob(x):
    return np.sqrt(np.einsum("...ij,...ij->...", x, x))


# 1 ------------------------------------------------------------------------------

def test_c01_algebra_suite():
    t = time.perf_counter()
    rep = su.verify_identities()
    sd = su.derive_structure_constants()
    dt = time.perf_counter() - t
    worst = max(c.value for c in rep.checks)
    mag = float(np.max(np.abs(np.abs(sd.c) - 2 * np.abs(su.EPS))))
    sign = rep.extra["triple_trace_sign"]
    ok = (rep.passed and worst < 1e-12 and mag < 1e-12 and sign["discrepancy"]
          and abs(rep.extra["c_123"] + 2) < 1e-12 and dt < 1.0)
    verdict(1, "algebra suite", ok,
            f"max dev {worst:.1e}, |c|-2|eps| {mag:.1e}, c_123 {rep.extra['c_123']:+.0f}, "
            f"sign discrepancy reported {sign['discrepancy']}, {dt:.2f}s")


# 2 ------------------------------------------------------------------------------

def test_c02_cubic_unboundedness():
    t = time.perf_counter()
    grid = gf.BoxGrid.unit(33)
    phi = cs.bump(grid)
    fit = cs.cubic_demo(grid, phi=phi)
    expected = 8 * gf.volume_integral(grid, phi ** 3)
    rel = abs(fit.t3 - expected) / abs(expected)
    dt = time.perf_counter() - t
    verdict(2, "cubic unboundedness", rel < 0.01 and dt < 10.0,
            f"t^3 coeff {fit.t3:.6g} vs 8*int(phi^3) {expected:.6g}, rel err {rel:.1e}, {dt:.2f}s")


# 3 ------------------------------------------------------------------------------

def test_c03_gradient_checks():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    grid = gf.BoxGrid.unit(9)
    worst = {}

    # cs_gradient is the gradient with respect to non-boundary values
    A = smooth_field(grid, rng, 0.5)
    G = cs.cs_gradient(A)
    worst["cs"] = max(directional_check(cs.cs_action, A, random_direction(grid, rng, True), G, STEPS).rel_error
                      for _ in range(10))

    Abar = smooth_field(grid, rng, 0.3)
    prob = dq.QuadDualProblem(grid, Abar, gf.BoundaryField.trace(Abar), 2.0)
    lam = smooth_field(grid, rng, 0.05)
    G = dq.dual_gradient(lam, prob)
    worst["dual"] = max(directional_check(lambda x: dq.dual_action(x, prob), lam,
                                          random_direction(grid, rng), G, STEPS).rel_error
                        for _ in range(10))

    params = GParams(2.0, 0.5)
    Ab = gf.BoundaryField.trace(_pure_gauge(grid))
    lam = smooth_field(grid, rng, 0.05)
    G = td.tilde_gradient(lam, params, Ab)
    worst["tilde"] = max(directional_check(lambda x: td.tilde_action(x, params, Ab), lam,
                                           random_direction(grid, rng), G, STEPS).rel_error
                         for _ in range(10))
    dt = time.perf_counter() - t
    ok = max(worst.values()) < 1e-5 and dt < 60.0
    verdict(3, "gradient checks", ok,
            ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {dt:.1f}s")


# 4 ------------------------------------------------------------------------------

def test_c04_dtp_exactness():
    rng = np.random.default_rng(4)
    grid = gf.BoxGrid.unit(8)
    worst_res, worst_act, used = 0.0, 0.0, 0
    while used < 20:
        lam = smooth_field(grid, rng, rng.uniform(0.05, 0.5))
        Abar = smooth_field(grid, rng, rng.uniform(0.1, 1.0))
        k = dq.QuadDualProblem.default_k(lam) * rng.uniform(1.0, 3.0)
        prob = dq.QuadDualProblem(grid, Abar, gf.BoundaryField.trace(Abar), k)
        K = dq.assemble_K(lam, k)
        if np.max(K.cond()) > 1e8:
            continue
        A = dq.dtp_map(lam, prob)
        P = dq.assemble_P(lam, prob).data
        res = np.max(np.abs(k * K.apply((A - Abar).data) - P)) / (1 + np.max(np.abs(P)))
        S = dq.dual_action(lam, prob)
        Shat = dq.predual_action(A, lam, prob)
        worst_res = max(worst_res, res)
        worst_act = max(worst_act, abs(S - Shat) / max(abs(Shat), 1e-300))
        used += 1
    verdict(4, "DtP exactness", worst_res < 1e-10 and worst_act < 1e-9,
            f"20 cases, residual/(1+|P|) {worst_res:.1e}, dual vs predual o dtp {worst_act:.1e}")


# 5 ------------------------------------------------------------------------------

def test_c05_flat_base_critical():
    norms = []
    for n in (9, 17, 33):
        grid = gf.BoxGrid.unit(n)
        Abar = _pure_gauge(grid)
        prob = dq.QuadDualProblem(grid, Abar, gf.BoundaryField.trace(Abar), 1.0)
        norms.append(dq.dual_gradient(gf.CoeffField.zeros(grid), prob).linf())
    orders = [math.log2(norms[i] / norms[i + 1]) for i in range(2)]
    verdict(5, "flat base => lambda=0 critical", min(orders) >= 1.9,
            f"|grad| {', '.join(f'{v:.2e}' for v in norms)}; orders {orders[0]:.2f}, {orders[1]:.2f}")


# 6 ------------------------------------------------------------------------------

def test_c06_quadratic_dichotomy():
    rng = np.random.default_rng(6)
    params = GParams(2.0, 0.5)
    worst, lower_ok, finite, tried = 0.0, True, 0, 0
    while finite < 100:
        tried += 1
        v = rng.standard_normal((3, 3))
        lam = v / np.linalg.norm(v) * 1.4 * rng.uniform()
        mu = rng.standard_normal((3, 3)) * rng.uniform(0.1, 3.0)
        closed = g_quadratic_closed(lam, mu, 0.5)
        if not closed.finite:
            continue
        finite += 1
        oracle = g_sup_oracle(lam, mu, params, seed=finite)
        worst = max(worst, abs(oracle.value - closed.value) / max(abs(closed.value), 1e-12))
        lower_ok &= closed.value >= np.sum(mu ** 2) / 14 * (1 - 1e-12)
    big = rng.standard_normal((100, 3, 3))
    big *= (1.5 * rng.uniform(1.0001, 3.0, 100) / _frob(big))[:, None, None]
    q = quadratic_batch(big, rng.standard_normal((100, 3, 3)), 0.5)
    ok = worst < 1e-6 and lower_ok and bool(np.all(q.min_eig <= 0)) and bool(np.all(np.isinf(q.value)))
    verdict(6, "quadratic g dichotomy", ok,
            f"closed vs oracle {worst:.1e} on 100 finite ({tried - 100} infinite draws rejected), "
            f"max min-eig beyond 3/2 {np.max(q.min_eig):.3f}, g >= |mu|^2/14 {lower_ok}")


# 7 ------------------------------------------------------------------------------

def test_c07_coercivity_alpha4():
    t = time.perf_counter()
    ell = (3 / 8) ** 6 / (4 * 18)
    c_expected = min(1 / 16, (3 / 8) ** 2 / (32 * 144), 1 / 12)
    params = GParams.certified(4.0)
    rep = certify_bounds(params, n_samples=200, rng_seed=7)
    dt = time.perf_counter() - t
    ident = next(c for c in rep.checks if c.name == "case3_witness_identity")
    ok = (abs(params.ell - ell) < 1e-15 and abs(params.c_cert - c_expected) < 1e-15
          and rep.extra["passed_count"] == 200 and ident.value < 1e-12 and dt < 60.0)
    verdict(7, "coercivity alpha=4", ok,
            f"{rep.extra['passed_count']}/200 satisfy bound (c_cert {params.c_cert:.3e}), "
            f"cases {rep.extra['case_counts']}, witness identity {ident.value:.1e}, {dt:.1f}s")


# 8 ------------------------------------------------------------------------------

def test_c08_key_estimate():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((100_000, 3, 3)) * rng.lognormal(0, 2, (100_000, 1, 1))
    lhs, rhs = _frob(su.quad_T(A)), 2 * _frob(A) ** 2
    viol = int(np.sum(lhs > rhs * (1 + 1e-12)))
    verdict(8, "key estimate |T(A)| <= 2|A|^2", viol == 0,
            f"{viol} violations on 1e5 matrices, max ratio {np.max(lhs / rhs):.4f}")


# 9 ------------------------------------------------------------------------------

def test_c09_end_to_end_minimization():
    t = time.perf_counter()
    grid = gf.BoxGrid.unit(8)
    Abar = _pure_gauge(grid)
    pg_linf, _ = cs.residual_norms(cs.flatness_residual(Abar))
    thresh = 5 * pg_linf
    lam0 = gf.CoeffField.random(grid, np.random.default_rng(9), 0.01)
    lam, rep = td.minimize(lam0, GParams(2.0, 0.5), gf.BoundaryField.trace(Abar),
                           td.MinimizeOptions(max_iters=3000, rel_grad_tol=1e-7))
    dt = time.perf_counter() - t
    ratio = rep.grad_linf / rep.grad0_linf
    ok = (ratio < 1e-6 and rep.flatness_linf <= thresh and rep.boundary_mismatch <= thresh
          and dt < 300.0)
    verdict(9, "end-to-end dual minimization", ok,
            f"{rep.iterations} iters ({rep.status}), grad ratio {ratio:.1e} (need < 1e-6), "
            f"flatness {rep.flatness_linf:.1e}, mismatch {rep.boundary_mismatch:.1e}, "
            f"threshold 5x{pg_linf:.1e}={thresh:.1e}, {dt:.0f}s")


# 10 -----------------------------------------------------------------------------

def test_c10_convexity():
    rng = np.random.default_rng(10)
    grid = gf.BoxGrid.unit(8)
    params = GParams(2.0, 0.5)
    Ab = gf.BoundaryField.trace(_pure_gauge(grid))
    worst, pairs = -math.inf, 0
    while pairs < 30:
        l1 = smooth_field(grid, rng, rng.uniform(0.01, 0.1))
        l2 = smooth_field(grid, rng, rng.uniform(0.01, 0.1))
        if not (math.isfinite(td.tilde_action(l1, params, Ab)) and math.isfinite(td.tilde_action(l2, params, Ab))):
            continue
        scale = 1 + abs(td.tilde_action(l1, params, Ab)) + abs(td.tilde_action(l2, params, Ab))
        worst = max(worst, td.convexity_gap(l1, l2, params, Ab) / scale)
        pairs += 1
    verdict(10, "convexity of the dual", worst <= 1e-9,
            f"30 pairs, max (S(mid) - chord)/scale {worst:.1e}")


if __name__ == "__main__":
    import sys
    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_c")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)

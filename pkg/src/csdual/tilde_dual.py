"""Field-level dual functional  S[lam] = sum_i w_i g(lam_i, (curl lam)_i) - pairing(lam, A^(b)),
its gradient, the pointwise primal recovery and a projected L-BFGS minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chern_simons import flatness_residual, residual_norms
from .dual_quadratic import envelope_gradient
from .g_pointwise import GParams, g_gradient, g_sup_batch, quadratic_batch
from .grid_fields import (BoundaryField, CoeffField, _require_same, boundary_pairing, curl_array,
                          full_mismatch, tangential_mismatch, volume_integral)


class InfiniteValue(ValueError):
    pass


class InfeasibleStart(ValueError):
    pass


class LineSearchFailure(RuntimeError):
    pass


@dataclass
class Pointwise:
    """Nodewise sup: values (n1,n2,n3), argmax (n1,n2,n3,3,3), finite mask."""

    values: np.ndarray
    argmax: np.ndarray
    finite: np.ndarray

    @property
    def all_finite(self) -> bool:
        return bool(np.all(self.finite))


def pointwise_sup(lam: CoeffField, params: GParams, warm: np.ndarray | None = None,
                  seed: int = 0) -> Pointwise:
    """g(lam(x), curl lam(x)) at every node; closed form for alpha = 2, batched oracle otherwise."""
    n = lam.grid.n
    mu = curl_array(lam.grid, lam.data)
    if params.alpha == 2:
        q = quadratic_batch(lam.data, mu, params.ell)
        fin = np.isfinite(q.value)
        return Pointwise(q.value.reshape(n), q.A.reshape(n + (3, 3)), fin.reshape(n))
    N = lam.grid.n_nodes
    seeds = np.random.SeedSequence(seed).spawn(N)
    extra = None if warm is None else warm.reshape(N, 1, 9)
    gv = g_sup_batch(lam.data.reshape(N, 3, 3), mu.reshape(N, 3, 3), params, seeds, extra)
    vals = np.array([v.value for v in gv])
    A = np.array([v.argmax if v.argmax is not None else np.full((3, 3), np.nan) for v in gv])
    return Pointwise(vals.reshape(n), A.reshape(n + (3, 3)), np.isfinite(vals).reshape(n))


def tilde_action(lam: CoeffField, params: GParams, Ab: BoundaryField, pw: Pointwise | None = None) -> float:
    _require_same(lam.grid, Ab.grid)
    pw = pointwise_sup(lam, params) if pw is None else pw
    if not pw.all_finite:
        return math.inf
    return volume_integral(lam.grid, pw.values) - boundary_pairing(lam, Ab)


def tilde_gradient(lam: CoeffField, params: GParams, Ab: BoundaryField, pw: Pointwise | None = None) -> CoeffField:
    """Danskin gradient: d/dlam of the integrand is T(A*), d/dmu is A*, then the boundary rows."""
    pw = pointwise_sup(lam, params) if pw is None else pw
    if not pw.all_finite:
        raise InfiniteValue("dual functional is +inf at this lambda")
    return lam.like(envelope_gradient(pw.argmax, lam.grid, Ab))


def recover_primal(lam: CoeffField, params: GParams, pw: Pointwise | None = None) -> CoeffField:
    """Nodewise argmax A*(x) of A:curl lam + lam:T(A) - H(A)."""
    pw = pointwise_sup(lam, params) if pw is None else pw
    if not pw.all_finite:
        raise InfiniteValue("g is +inf at some node; no primal field")
    return lam.like(pw.argmax)


def primal_stationarity(lam: CoeffField, A: CoeffField, params: GParams) -> float:
    """Max nodewise first-order residual of the pointwise objective, relative to its scale."""
    mu = curl_array(lam.grid, lam.data)
    g = g_gradient(A.data, lam.data, mu, params)
    scale = 1.0 + np.max(np.abs(mu)) + np.max(np.abs(lam.data)) * np.max(np.abs(A.data)) \
        + params.alpha * params.ell * np.max(np.abs(A.data)) ** (params.alpha - 1)
    return float(np.max(np.abs(g)) / scale)


# -- minimization ------------------------------------------------------------------

@dataclass
class MinimizeOptions:
    max_iters: int = 500
    grad_tol: float = 1e-10
    rel_grad_tol: float = 0.0      # also stop once |grad| <= rel_grad_tol * |grad_0|
    memory: int = 10
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 50
    constraint_radius: float = 1.4

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 0 or self.memory < 1:
            raise ValueError("max_iters >= 0 and memory >= 1 required")


@dataclass
class MinimizeReport:
    iterations: int
    value: float
    grad_linf: float
    grad0_linf: float
    flatness_linf: float
    flatness_l2: float
    boundary_mismatch: float
    boundary_mismatch_full: float
    converged: bool
    status: str
    monotone: bool
    stationarity: float
    history: list = field(default_factory=list)  # (iter, value, grad_linf)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["history"] = [list(h) for h in self.history]
        return d


def project_ball(data: np.ndarray, radius: float) -> np.ndarray:
    r = np.sqrt(np.einsum("...ij,...ij->...", data, data))
    f = np.minimum(1.0, radius / np.maximum(r, 1e-300))
    return data * f[..., None, None]


class _Evaluator:
    def __init__(self, params: GParams, Ab: BoundaryField):
        self.params, self.Ab = params, Ab
        self.warm = None

    def __call__(self, lam: CoeffField):
        pw = pointwise_sup(lam, self.params, self.warm)
        f = tilde_action(lam, self.params, self.Ab, pw)
        return f, pw


def minimize(lam0: CoeffField, params: GParams, Ab: BoundaryField,
             opts: MinimizeOptions | None = None) -> tuple[CoeffField, MinimizeReport]:
    """Projected L-BFGS in the quadrature-weighted inner product, Armijo backtracking.

    Trial points where the functional is +inf are rejected like any failed
    Armijo test, so accepted iterates always have a finite value.
    """
    opts = MinimizeOptions() if opts is None else opts
    _require_same(lam0.grid, Ab.grid)
    grid = lam0.grid
    W = grid.weights()[..., None, None]

    def ip(u, v):
        return float(np.sum(W * u * v))

    constrained = params.alpha == 2
    proj = (lambda d: project_ball(d, opts.constraint_radius)) if constrained else (lambda d: d)
    ev = _Evaluator(params, Ab)
    x = proj(lam0.data.copy())
    lam = lam0.like(x)
    f, pw = ev(lam)
    if not math.isfinite(f):
        raise InfeasibleStart("dual functional is +inf at the starting lambda")
    ev.warm = pw.argmax
    G = envelope_gradient(pw.argmax, grid, Ab)
    g0 = float(np.max(np.abs(G)))
    target = max(opts.grad_tol, opts.rel_grad_tol * g0)
    S, Y, RHO = [], [], []
    history = [(0, f, g0)]
    status = "max_iters"
    it = 0
    gnorm = g0
    while True:
        gnorm = float(np.max(np.abs(G)))
        if gnorm <= target:
            status = "converged"
            break
        if it >= opts.max_iters:
            break
        # two-loop recursion in the weighted inner product
        q = -G.copy()
        alphas = []
        for s, y, rho in zip(reversed(S), reversed(Y), reversed(RHO)):
            a = rho * ip(s, q)
            alphas.append(a)
            q -= a * y
        if S:
            q *= ip(S[-1], Y[-1]) / ip(Y[-1], Y[-1])
        for (s, y, rho), a in zip(zip(S, Y, RHO), reversed(alphas)):
            b = rho * ip(y, q)
            q += (a - b) * s
        d = q
        if ip(d, G) >= 0:
            S, Y, RHO = [], [], []
            d = -G
        if not S:
            # first step: scale so the largest nodal change is modest
            d = d * min(1.0, 0.1 / max(float(np.max(np.abs(d))), 1e-300))
        t = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            xt = proj(x + t * d)
            lt = lam.like(xt)
            ft, pwt = ev(lt)
            if math.isfinite(ft) and ft <= f + opts.armijo_c1 * ip(G, xt - x):
                accepted = True
                break
            t *= opts.backtrack
        if not accepted:
            if S:
                S, Y, RHO = [], [], []
                continue
            status = "line_search_failure"
            break
        Gt = envelope_gradient(pwt.argmax, grid, Ab)
        s, y = xt - x, Gt - G
        sy = ip(s, y)
        if sy > 1e-12 * math.sqrt(ip(s, s) * ip(y, y)):
            S.append(s)
            Y.append(y)
            RHO.append(1.0 / sy)
            if len(S) > opts.memory:
                S.pop(0), Y.pop(0), RHO.pop(0)
        x, f, G, pw, lam = xt, ft, Gt, pwt, lt
        ev.warm = pw.argmax
        it += 1
        history.append((it, f, float(np.max(np.abs(G)))))

    A = recover_primal(lam, params, pw)
    linf, l2 = residual_norms(flatness_residual(A))
    vals = [h[1] for h in history]
    monotone = all(b <= a for a, b in zip(vals, vals[1:]))
    rep = MinimizeReport(
        iterations=it, value=f, grad_linf=gnorm, grad0_linf=g0, flatness_linf=linf, flatness_l2=l2,
        boundary_mismatch=tangential_mismatch(A, Ab), boundary_mismatch_full=full_mismatch(A, Ab),
        converged=status == "converged", status=status, monotone=monotone,
        stationarity=primal_stationarity(lam, A, params), history=history)
    return lam, rep


# -- structural checks ---------------------------------------------------------------

def convexity_gap(lam1: CoeffField, lam2: CoeffField, params: GParams, Ab: BoundaryField,
                  ts=(0.25, 0.5, 0.75)) -> float:
    """max over t of S(t l1 + (1-t) l2) - t S(l1) - (1-t) S(l2); <= 0 for a convex functional."""
    f1, f2 = tilde_action(lam1, params, Ab), tilde_action(lam2, params, Ab)
    worst = -math.inf
    for t in ts:
        ft = tilde_action(t * lam1 + (1 - t) * lam2, params, Ab)
        worst = max(worst, ft - t * f1 - (1 - t) * f2)
    return worst


def coercivity_terms(lam: CoeffField, params: GParams, Ab: BoundaryField) -> tuple[float, float]:
    """(S[lam] + pairing(lam, A^(b)), c_cert * sum w (|curl lam|^alpha' + |lam|^beta)).

    The pointwise bound makes the first at least the second.
    """
    mu = curl_array(lam.grid, lam.data)
    mn = np.sqrt(np.einsum("...ij,...ij->...", mu, mu))
    ln = np.sqrt(np.einsum("...ij,...ij->...", lam.data, lam.data))
    rhs = volume_integral(lam.grid, params.bound(ln, mn))
    return tilde_action(lam, params, Ab) + boundary_pairing(lam, Ab), rhs


def growth_profile(lam: CoeffField, params: GParams, Ab: BoundaryField, ts) -> np.ndarray:
    return np.array([tilde_action(t * lam, params, Ab) for t in ts])

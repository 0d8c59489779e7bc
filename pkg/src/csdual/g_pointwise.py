"""Pointwise value function g(lam, mu) = sup_A { A:mu + lam:T(A) - ell |A|^alpha }.

Matrices are flattened row-major to 9-vectors a = A.reshape(9); then
lam:T(A) = a . M(lam) a with the symmetric coupling matrix M.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lie_su2 import coupling_matrix, quad_T
from .report import RunReport

EIG_MARGIN = 1e-10
DIVERGENCE_RADIUS = 1e6
STATIONARITY_TOL = 1e-8
N_STARTS = 16


def _fro(X: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...ij,...ij->...", X, X))


# -- parameters ------------------------------------------------------------------

def certified_ell(alpha: float, variant: str = "auto") -> float:
    """The potential constant for which the pointwise lower bound is proved.

    ``variant="auto"`` uses the dedicated quartic constants for alpha = 4.
    """
    if alpha == 2:
        return 0.5
    if alpha < 2:
        raise ValueError("alpha must be >= 2")
    if alpha == 4 and variant == "auto":
        return (3 / 8) ** 6 / (4 * 18)
    ap, beta = alpha / (alpha - 1), alpha / (alpha - 2)
    return (1 / (alpha * 2 ** (alpha / 2) * 16 * 3 ** beta)) * (4 * ap) ** (-alpha / (2 - ap))


def _case_constants(alpha: float, variant: str) -> tuple[float, float, float]:
    if alpha == 4 and variant == "auto":
        return 1 / 16, (1 / (32 * 144)) * (3 / 8) ** 2, 1 / 12
    ap, beta = alpha / (alpha - 1), alpha / (alpha - 2)
    return (1 / (4 * ap),
            (1 / (32 * 16 * 3 ** beta)) * (4 * ap) ** (-ap / (2 - ap)),
            1 / (4 * 3 ** (beta / 2)))


@dataclass(frozen=True)
class GParams:
    alpha: float
    ell: float
    variant: str = "auto"

    def __post_init__(self):
        if not self.alpha >= 2:
            raise ValueError("alpha must be >= 2")
        if not self.ell > 0:
            raise ValueError("ell must be positive")
        if self.variant not in ("auto", "general"):
            raise ValueError("variant is 'auto' or 'general'")

    @classmethod
    def certified(cls, alpha: float, variant: str = "auto") -> "GParams":
        return cls(float(alpha), certified_ell(alpha, variant), variant)

    @property
    def alpha_prime(self) -> float:
        return self.alpha / (self.alpha - 1)

    @property
    def beta(self) -> float:
        return math.inf if self.alpha == 2 else self.alpha / (self.alpha - 2)

    @property
    def ref_ell(self) -> float:
        return certified_ell(self.alpha, self.variant)

    @property
    def scale(self) -> float:
        """ell / ref_ell; g_ell(lam, mu) = s * g_ref(lam / s, mu / s)."""
        return self.ell / self.ref_ell

    @property
    def case_constants(self) -> tuple[float, ...]:
        if self.alpha == 2:
            return (1 / 14,)
        return _case_constants(self.alpha, self.variant)

    @property
    def c_cert(self) -> float:
        """Certified constant c in g >= c (|mu|^alpha' + |lam|^beta), carried to ell by scaling.

        For alpha = 2 it is the constant in g >= c |mu|^2 on |lam| <= lam_cap.
        """
        s = self.scale
        c = min(self.case_constants)
        if self.alpha == 2:
            return c / s
        return c * min(s ** (1 - self.alpha_prime), s ** (1 - self.beta))

    @property
    def lam_cap(self) -> float:
        """For alpha = 2, the |lam| bound of the quadratic lower bound (3/2 at ell = 1/2)."""
        return 1.5 * self.scale if self.alpha == 2 else math.inf

    def bound(self, lam_norm, mu_norm):
        if self.alpha == 2:
            return self.c_cert * np.asarray(mu_norm) ** 2
        return self.c_cert * (np.asarray(mu_norm) ** self.alpha_prime + np.asarray(lam_norm) ** self.beta)


@dataclass
class GValue:
    value: float
    argmax: np.ndarray | None
    certified: bool = False
    status: str = "converged"  # converged | infinite | max_iterations
    stationarity: float = 0.0
    iterations: int = 0

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def to_dict(self) -> dict:
        return {"value": self.value, "finite": self.finite,
                "argmax": None if self.argmax is None else self.argmax.tolist(),
                "certified": self.certified, "status": self.status,
                "stationarity": self.stationarity, "iterations": self.iterations}


# -- objective ---------------------------------------------------------------------

def T_of(A: np.ndarray) -> np.ndarray:
    return quad_T(np.asarray(A, float))


def g_objective(A, lam, mu, params: GParams):
    A, lam, mu = (np.asarray(x, float) for x in (A, lam, mu))
    return (np.einsum("...ij,...ij->...", A, mu) + np.einsum("...ij,...ij->...", lam, quad_T(A))
            - params.ell * _fro(A) ** params.alpha)


def g_gradient(A, lam, mu, params: GParams) -> np.ndarray:
    """d/dA of g_objective: mu + 2 M(lam) A - alpha ell |A|^(alpha-2) A."""
    A = np.asarray(A, float)
    a = A.reshape(A.shape[:-2] + (9,))
    Ma = np.einsum("...ab,...b->...a", coupling_matrix(np.asarray(lam, float)), a)
    r = _fro(A)[..., None]
    pen = params.alpha * params.ell * (r ** (params.alpha - 2) if params.alpha != 2 else 1.0)
    return np.asarray(mu, float) + (2 * Ma - pen * a).reshape(A.shape)


def _obj_flat(a, m, M, alpha, ell):
    r2 = np.einsum("...a,...a->...", a, a)
    return (np.einsum("...a,...a->...", a, m) + np.einsum("...a,...ab,...b->...", a, M, a)
            - ell * r2 ** (alpha / 2))


def _grad_flat(a, m, M, alpha, ell):
    r2 = np.einsum("...a,...a->...", a, a)
    pw = np.ones_like(r2) if alpha == 2 else r2 ** ((alpha - 2) / 2)
    return m + 2 * np.einsum("...ab,...b->...a", M, a) - (alpha * ell * pw)[..., None] * a


def _hess_flat(a, M, alpha, ell):
    r2 = np.einsum("...a,...a->...", a, a)
    I = np.eye(9)
    if alpha == 2:
        return 2 * M - 2 * ell * I
    pw = r2 ** ((alpha - 2) / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        pw4 = np.where(r2 > 0, r2 ** ((alpha - 4) / 2), 0.0)
    outer = np.einsum("...a,...b->...ab", a, a) * ((alpha - 2) * pw4)[..., None, None]
    return 2 * M - alpha * ell * (pw[..., None, None] * I + outer)


@dataclass
class AscentResult:
    a: np.ndarray          # (N, 9) best point per problem
    f: np.ndarray          # (N,) best value, +inf when divergent
    status: np.ndarray     # (N,) 0 converged, 2 divergent, 3 not converged
    stationarity: np.ndarray
    iterations: np.ndarray


def batched_ascent(m: np.ndarray, M: np.ndarray, alpha: float, ell: float, starts: np.ndarray,
                   max_iter: int = 300, tol: float = STATIONARITY_TOL,
                   radius: float = DIVERGENCE_RADIUS, grow_tol: float = 1e-6) -> AscentResult:
    """Damped Newton ascent from ``starts`` (N, S, 9) for N problems (m (N,9), M (N,9,9)).

    Uses |H|^{-1} g (eigenvalue magnitudes floored) as the ascent direction
    with Armijo backtracking.  A path that leaves ``radius`` while still
    increasing the objective marks the problem as unbounded.
    """
    N, S, _ = starts.shape
    mm = np.repeat(m, S, axis=0)
    MM = np.repeat(M, S, axis=0)
    a = starts.reshape(N * S, 9).astype(float).copy()
    f = _obj_flat(a, mm, MM, alpha, ell)
    status = np.zeros(N * S, dtype=int)
    stat = np.full(N * S, np.inf)
    iters = np.zeros(N * S, dtype=int)
    Mnorm = np.linalg.norm(MM, axis=(-2, -1))
    for _ in range(max_iter):
        act = np.flatnonzero(status == 0)
        if act.size == 0:
            break
        aa, ma, Ma = a[act], mm[act], MM[act]
        g = _grad_flat(aa, ma, Ma, alpha, ell)
        r = np.linalg.norm(aa, axis=-1)
        scale = 1.0 + np.linalg.norm(ma, axis=-1) + 2 * Mnorm[act] * r + alpha * ell * r ** (alpha - 1)
        gn = np.linalg.norm(g, axis=-1) / scale
        stat[act] = gn
        done = gn <= tol
        status[act[done]] = 1
        act, g, aa, ma, Ma = act[~done], g[~done], aa[~done], ma[~done], Ma[~done]
        if act.size == 0:
            break
        iters[act] += 1
        H = _hess_flat(aa, Ma, alpha, ell)
        w, V = np.linalg.eigh(H)
        floor = np.maximum(1e-12, 1e-10 * np.max(np.abs(w), axis=-1, keepdims=True))
        d = np.einsum("...ab,...b->...a", V, np.einsum("...ba,...b->...a", V, g) / np.maximum(np.abs(w), floor))
        slope = np.einsum("...a,...a->...", g, d)
        t = np.ones(act.size)
        f0 = f[act]
        accepted = np.zeros(act.size, dtype=bool)
        a_new = aa.copy()
        f_new = f0.copy()
        for _ls in range(60):
            pend = ~accepted
            if not pend.any():
                break
            trial = aa[pend] + t[pend, None] * d[pend]
            ft = _obj_flat(trial, ma[pend], Ma[pend], alpha, ell)
            ok = ft >= f0[pend] + 1e-4 * t[pend] * slope[pend]
            idx = np.flatnonzero(pend)
            a_new[idx[ok]] = trial[ok]
            f_new[idx[ok]] = ft[ok]
            accepted[idx[ok]] = True
            t[idx[~ok]] *= 0.5
        stuck = ~accepted
        # no ascent possible along d: stationary to rounding
        status[act[stuck]] = np.where(gn[~done][stuck] <= 1e3 * tol, 1, 3)
        a[act] = a_new
        gain = f_new - f0
        f[act] = f_new
        far = (np.linalg.norm(a_new, axis=-1) > radius) & (gain > grow_tol) & accepted
        status[act[far]] = 2
    status[status == 0] = 3
    f_out = np.where(status == 2, np.inf, f).reshape(N, S)
    st = status.reshape(N, S)
    best = np.argmax(f_out, axis=1)
    rows = np.arange(N)
    a_b = a.reshape(N, S, 9)[rows, best]
    f_b = f_out[rows, best]
    st_b = st[rows, best]
    st_b = np.where(st_b == 1, 0, st_b)
    return AscentResult(a_b, f_b, st_b, stat.reshape(N, S)[rows, best], iters.reshape(N, S)[rows, best])


# -- closed form for alpha = 2 ---------------------------------------------------------

@dataclass
class QuadraticBatch:
    value: np.ndarray   # (N,), +inf where unbounded
    A: np.ndarray       # (N, 3, 3), nan where unbounded
    min_eig: np.ndarray  # min eigenvalue of ell I - M(lam)


def quadratic_batch(lam: np.ndarray, mu: np.ndarray, ell: float) -> QuadraticBatch:
    lam = np.asarray(lam, float).reshape(-1, 3, 3)
    mu = np.asarray(mu, float).reshape(-1, 3, 3)
    m = mu.reshape(-1, 9)
    B = coupling_matrix(lam)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    w, V = np.linalg.eigh(ell * np.eye(9) - B)
    c = np.einsum("...ba,...b->...a", V, m)
    pos = w > EIG_MARGIN
    # on (near-)null directions the sup is finite only if m has no component there
    null_ok = np.all(pos | ((np.abs(w) <= EIG_MARGIN) & (np.abs(c) <= 1e-12 * (1 + np.abs(m).max(-1, keepdims=True)))), axis=-1)
    inv = np.where(pos, 1.0 / np.where(pos, w, 1.0), 0.0)
    a = 0.5 * np.einsum("...ab,...b->...a", V, inv * c)
    val = 0.25 * np.einsum("...a,...a->...", c, inv * c)
    val = np.where(null_ok, val, np.inf)
    A = np.where(null_ok[:, None], a, np.nan).reshape(-1, 3, 3)
    return QuadraticBatch(val, A, w[:, 0])


def g_quadratic_closed(lam, mu, ell: float = 0.5) -> GValue:
    q = quadratic_batch(lam, mu, ell)
    if not np.isfinite(q.value[0]):
        return GValue(math.inf, None, True, "infinite")
    A = q.A[0]
    st = float(np.max(np.abs(g_gradient(A, lam, mu, GParams(2.0, ell)))))
    return GValue(float(q.value[0]), A, True, "converged", st, 0)


# -- lower-bound witnesses ---------------------------------------------------------------

def case3_frame(lam: np.ndarray) -> tuple[int, float, np.ndarray]:
    """(V, m, E): dominant row index, its norm, and a right-handed orthonormal frame with E[V] = lam_V / m."""
    lam = np.asarray(lam, float)
    norms = np.linalg.norm(lam, axis=1)
    V = int(np.argmax(norms))
    m = float(norms[V])
    E = np.zeros((3, 3))
    if m == 0:
        return V, 0.0, np.eye(3)
    e = lam[V] / m
    seed = np.eye(3)[int(np.argmin(np.abs(e)))]
    u = seed - (seed @ e) * e
    u /= np.linalg.norm(u)
    E[V], E[(V + 1) % 3], E[(V + 2) % 3] = e, u, np.cross(e, u)
    return V, m, E


def classify_case(lam_norm: float, mu_norm: float, params: GParams) -> int:
    """Lower-bound case (1, 2 or 3) for alpha > 2 at the reference ell; ties go to the lower case."""
    if params.alpha == 2:
        return 1
    ap = params.alpha_prime
    if params.alpha == 4 and params.variant == "auto":
        t1 = (3 / 8) * mu_norm ** (2 / 3)
        t3 = lam_norm ** 1.5 / 12
    else:
        t1 = mu_norm ** (2 - ap) / (4 * ap)
        t3 = lam_norm ** (1 / (2 - ap)) / (4 * 3 ** (params.beta / 2))
    if lam_norm <= t1:
        return 1
    if mu_norm <= t3:
        return 3
    return 2


def witness_points(lam: np.ndarray, mu: np.ndarray, params: GParams) -> dict[int, np.ndarray]:
    """The three explicit matrices that certify the lower bound, at the actual ell by scaling."""
    lam, mu = np.asarray(lam, float), np.asarray(mu, float)
    if params.alpha == 2:
        return {1: mu / 7.0 * (0.5 / params.ell)}
    s = params.scale
    lt, mt = lam / s, mu / s  # reference-ell arguments
    ap, beta = params.alpha_prime, params.beta
    mn, ln = float(_fro(mt)), float(_fro(lt))
    pts = {}
    pts[1] = mt * mn ** (ap - 2) if mn > 0 else np.zeros((3, 3))
    pts[2] = mt / (4 * ln) if ln > 0 else np.zeros((3, 3))
    V, m, E = case3_frame(lt)
    A3 = np.zeros((3, 3))
    if m > 0:
        for Y in range(3):
            if Y != V:
                A3[Y] = m ** ((beta - 1) / 2) * E[Y]
    pts[3] = A3
    return pts


@dataclass
class Witness:
    case: int
    A: np.ndarray
    value: float


def witness_lower_bound(lam, mu, params: GParams) -> Witness:
    """Objective at the explicit witness for the case (lam, mu) falls in; a valid lower bound on g."""
    lam, mu = np.asarray(lam, float), np.asarray(mu, float)
    pts = witness_points(lam, mu, params)
    if params.alpha == 2:
        case = 1
    else:
        case = classify_case(float(_fro(lam)) / params.scale, float(_fro(mu)) / params.scale, params)
    A = pts[case]
    return Witness(case, A, float(g_objective(A, lam, mu, params)))


# -- sup oracle ------------------------------------------------------------------------

def _starts(lam: np.ndarray, mu: np.ndarray, params: GParams, rng: np.random.Generator,
            extra: np.ndarray | None = None, n_starts: int = N_STARTS) -> np.ndarray:
    pts = [np.zeros(9)]
    mn = float(_fro(mu))
    wit = witness_points(lam, mu, params)
    if params.alpha > 2 and mn > 0:
        # maximizer of t|mu| - ell t^alpha along mu
        t = (mn / (params.alpha * params.ell)) ** (1 / (params.alpha - 1))
        pts.append((mu / mn * t).ravel())
    else:
        pts.append(mu.ravel() / (2 * params.ell))
    for k in sorted(wit):
        pts.append(wit[k].ravel())
    if extra is not None:
        pts.extend(np.asarray(extra, float).reshape(-1, 9))
    B = coupling_matrix(lam)
    w, V = np.linalg.eigh(B)
    r = max(1.0, max(np.linalg.norm(p) for p in pts))
    if params.alpha > 2 and w[-1] > 0:
        # maximizer of w t^2 - ell t^alpha along the top eigenvector
        r_eig = (2 * w[-1] / (params.alpha * params.ell)) ** (1 / (params.alpha - 2))
        pts.extend([V[:, -1] * r_eig, -V[:, -1] * r_eig])
    while len(pts) < n_starts:
        v = rng.standard_normal(9)
        pts.append(v / np.linalg.norm(v) * r * rng.uniform(0.1, 1.5))
    return np.array(pts[:max(n_starts, 5 + (0 if extra is None else len(extra)))])


def g_sup_batch(lam: np.ndarray, mu: np.ndarray, params: GParams, seeds=None, extra=None,
                n_starts: int = N_STARTS, max_iter: int = 300) -> list[GValue]:
    """Sup oracle for N pointwise problems at once; lam, mu of shape (N, 3, 3)."""
    lam = np.asarray(lam, float).reshape(-1, 3, 3)
    mu = np.asarray(mu, float).reshape(-1, 3, 3)
    N = lam.shape[0]
    if seeds is None:
        seeds = np.random.SeedSequence(0).spawn(N)
    S = [_starts(lam[i], mu[i], params, np.random.default_rng(seeds[i]),
                 None if extra is None else extra[i], n_starts) for i in range(N)]
    width = max(len(s) for s in S)
    starts = np.stack([np.vstack([s, np.repeat(s[:1], width - len(s), axis=0)]) for s in S])
    # the penalty dominates for alpha > 2, so unboundedness is only possible at alpha = 2
    radius = DIVERGENCE_RADIUS if params.alpha == 2 else math.inf
    res = batched_ascent(mu.reshape(N, 9), coupling_matrix(lam), params.alpha, params.ell, starts,
                         max_iter, radius=radius)
    out = []
    for i in range(N):
        wv = witness_lower_bound(lam[i], mu[i], params).value
        if res.status[i] == 2:
            out.append(GValue(math.inf, None, True, "infinite", float("nan"), int(res.iterations[i])))
            continue
        val = float(res.f[i])
        status = "converged" if res.status[i] == 0 else "max_iterations"
        out.append(GValue(val, res.a[i].reshape(3, 3), bool(val >= wv) and status == "converged",
                          status, float(res.stationarity[i]), int(res.iterations[i])))
    return out


def g_sup_oracle(lam, mu, params: GParams, seed: int = 0, n_starts: int = N_STARTS,
                 max_iter: int = 300) -> GValue:
    return g_sup_batch(np.asarray(lam, float)[None], np.asarray(mu, float)[None], params,
                       [np.random.SeedSequence(seed)], None, n_starts, max_iter)[0]


def g_value(lam, mu, params: GParams) -> GValue:
    """Closed form for alpha = 2, oracle otherwise."""
    if params.alpha == 2:
        return g_quadratic_closed(lam, mu, params.ell)
    return g_sup_oracle(lam, mu, params)


# -- certification -------------------------------------------------------------------

def _sample(rng: np.random.Generator, lo: float, hi: float) -> np.ndarray:
    v = rng.standard_normal((3, 3))
    return v / _fro(v) * math.exp(rng.uniform(math.log(lo), math.log(hi)))


@dataclass
class CertSample:
    lam: np.ndarray
    mu: np.ndarray
    g: float
    witness: float
    case: int
    bound: float

    @property
    def value(self) -> float:
        return max(self.g, self.witness)

    @property
    def slack(self) -> float:
        return self.value - self.bound


def draw_samples(params: GParams, n_samples: int, rng_seed: int, lo: float = 1e-2, hi: float = 1e2):
    """Per-sample generators spawned from one seed, so draws do not depend on batching."""
    seeds = np.random.SeedSequence(rng_seed).spawn(n_samples)
    lams, mus, child = [], [], []
    lam_hi = min(hi, params.lam_cap)
    for s in seeds:
        rng = np.random.default_rng(s)
        lams.append(_sample(rng, lo, lam_hi))
        mus.append(_sample(rng, lo, hi))
        child.append(s.spawn(1)[0])
    return np.array(lams), np.array(mus), child


def certify_bounds(params: GParams, n_samples: int = 200, rng_seed: int = 0, workers: int = 1,
                   chunk: int = 50, lo: float = 1e-2, hi: float = 1e2) -> RunReport:
    """Check max(g, witness) >= c_cert (|mu|^alpha' + |lam|^beta) on log-uniform samples."""
    lams, mus, seeds = draw_samples(params, n_samples, rng_seed, lo, hi)

    def run(sl):
        if params.alpha == 2:
            q = quadratic_batch(lams[sl], mus[sl], params.ell)
            return [GValue(float(v), None) for v in q.value]
        return g_sup_batch(lams[sl], mus[sl], params, seeds[sl])

    slices = [slice(i, min(i + chunk, n_samples)) for i in range(0, n_samples, chunk)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, slices))
    else:
        parts = [run(s) for s in slices]
    gv = [v for p in parts for v in p]

    samples = []
    for i in range(n_samples):
        w = witness_lower_bound(lams[i], mus[i], params)
        ln, mn = float(_fro(lams[i])), float(_fro(mus[i]))
        samples.append(CertSample(lams[i], mus[i], gv[i].value, w.value, w.case, float(params.bound(ln, mn))))

    rep = RunReport(f"certify-alpha-{params.alpha:g}")
    fails = [s for s in samples if not s.value >= s.bound]
    rep.flag("lower_bound", not fails, len(samples) - len(fails),
             f"{len(samples) - len(fails)}/{len(samples)} samples satisfy the bound")
    if params.alpha > 2:
        dev = 0.0
        for s in samples:
            lt = s.lam / params.scale
            V, m, E = case3_frame(lt)
            A3 = witness_points(s.lam, s.mu, params)[3]
            target = np.zeros((3, 3))
            target[V] = 2 * lt[V] * m ** (params.beta - 2)
            dev = max(dev, float(np.max(np.abs(quad_T(A3) - target))) / max(1.0, float(np.max(np.abs(target)))))
        rep.check("case3_witness_identity", dev, 1e-12)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(rng_seed).spawn(n_samples + 1)[-1])
        big = []
        for _ in range(n_samples):
            v = rng.standard_normal((3, 3))
            big.append(v / _fro(v) * params.lam_cap * rng.uniform(1.0001, 3.0))
        q = quadratic_batch(np.array(big), np.zeros((n_samples, 3, 3)), params.ell)
        rep.flag("infinite_beyond_cap", bool(np.all(q.min_eig <= 0)), float(np.max(q.min_eig)),
                 "min eigenvalue of ell I - B_lam is <= 0 for every sample with |lam| > cap")
    slacks = np.array([s.slack / max(s.bound, 1e-300) for s in samples])
    rep.extra.update({
        "alpha": params.alpha, "ell": params.ell, "c_cert": params.c_cert,
        "n_samples": n_samples, "seed": rng_seed, "passed_count": len(samples) - len(fails),
        "min_relative_slack": float(np.min(slacks)) if len(slacks) else None,
        "case_counts": {str(c): sum(1 for s in samples if s.case == c) for c in (1, 2, 3)},
        "failures": [{"lam": s.lam, "mu": s.mu, "g": s.g, "bound": s.bound} for s in fails],
    })
    rep.extra["samples"] = [{"lam_norm": float(_fro(s.lam)), "mu_norm": float(_fro(s.mu)),
                             "g": s.g, "witness": s.witness, "bound": s.bound, "slack": s.slack,
                             "case": s.case} for s in samples]
    return rep

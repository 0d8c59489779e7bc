"""Explicit dual functional for the shifted quadratic potential H = k/2 |A - Abar|^2.

The pre-dual integrand A:curl lam + lam:T(A) + k/2 |A - Abar|^2 is quadratic
in A at each node, with Hessian k*K where K = I + (2/k) M(lam).  Its
stationary point is the dual-to-primal image A = Abar + K^{-1} P / k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_fields import (BoundaryField, BoxGrid, CoeffField, _require_same, boundary_pairing,
                          boundary_pairing_gradient, curl_adjoint_array, curl_array, volume_integral)
from .lie_su2 import EPS, coupling_matrix, quad_T

COND_LIMIT = 1e12


class SingularK(np.linalg.LinAlgError):
    def __init__(self, node, cond):
        self.node = tuple(int(i) for i in node)
        self.cond = float(cond)
        super().__init__(f"K is near-singular at node {self.node} (cond {self.cond:.3e}); "
                         "increase k or shrink lambda")


@dataclass
class QuadDualProblem:
    grid: BoxGrid
    Abar: CoeffField
    Ab: BoundaryField
    k: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        _require_same(self.grid, self.Abar.grid, self.Ab.grid)

    @classmethod
    def default_k(cls, lam0: CoeffField) -> float:
        """1 + 4 max|lam0|, which keeps K diagonally dominant at lam0."""
        return 1.0 + 4.0 * float(np.max(np.abs(lam0.data)))


@dataclass
class KOperator:
    """Per-node 9x9 matrices; flat index 3*D + i for the pair (D, i)."""

    mats: np.ndarray

    def cond(self) -> np.ndarray:
        return np.linalg.cond(self.mats)

    def apply(self, X: np.ndarray) -> np.ndarray:
        shp = X.shape
        return np.einsum("...ab,...b->...a", self.mats, X.reshape(shp[:-2] + (9,))).reshape(shp)


def coupling_apply(lam: np.ndarray, A: np.ndarray) -> np.ndarray:
    """(M(lam) A)_Di = lam_Zp eps_pir eps_ZDC A_Cr, without forming M."""
    # eps_pir lam_Zp A_Cr = (A_C x lam_Z)_i ; summed against eps_ZDC
    cr = np.cross(A[..., None, :, :], lam[..., :, None, :])  # [Z, C, i]
    return np.einsum("ZDC,...ZCi->...Di", EPS, cr)


def assemble_P(lam: CoeffField, prob: QuadDualProblem) -> CoeffField:
    _require_same(lam.grid, prob.grid)
    return lam.like(-curl_array(lam.grid, lam.data) - 2.0 * coupling_apply(lam.data, prob.Abar.data))


def assemble_K(lam: CoeffField, k: float) -> KOperator:
    if not k > 0:
        raise ValueError("k must be positive")
    return KOperator(np.eye(9) + (2.0 / k) * coupling_matrix(lam.data))


@dataclass
class DtpInfo:
    residual: float  # max over nodes of |kK(A-Abar) - P| / (1 + |P|_inf)
    max_cond: float


def dtp_map(lam: CoeffField, prob: QuadDualProblem, return_info: bool = False):
    """A^(H)(lam) = Abar + K^{-1} P / k, solved node by node."""
    P = assemble_P(lam, prob)
    K = assemble_K(lam, prob.k)
    cond = K.cond()
    worst = np.unravel_index(np.argmax(cond), cond.shape)
    if not cond[worst] <= COND_LIMIT:
        raise SingularK(worst, cond[worst])
    Pf = P.data.reshape(prob.grid.n + (9, 1))
    D = np.linalg.solve(prob.k * K.mats, Pf)[..., 0].reshape(prob.grid.n + (3, 3))
    A = lam.like(prob.Abar.data + D)
    if not return_info:
        return A
    r = prob.k * K.apply(D) - P.data
    res = float(np.max(np.max(np.abs(r), axis=(-2, -1)) / (1.0 + np.max(np.abs(P.data)))))
    return A, DtpInfo(res, float(cond[worst]))


def predual_density(A: CoeffField, lam: CoeffField, prob: QuadDualProblem) -> np.ndarray:
    d = A.data - prob.Abar.data
    return (np.einsum("...ij,...ij->...", A.data, curl_array(lam.grid, lam.data))
            + np.einsum("...ij,...ij->...", lam.data, quad_T(A.data))
            + 0.5 * prob.k * np.einsum("...ij,...ij->...", d, d))


def predual_action(A: CoeffField, lam: CoeffField, prob: QuadDualProblem) -> float:
    _require_same(A.grid, lam.grid, prob.grid)
    return volume_integral(prob.grid, predual_density(A, lam, prob)) - boundary_pairing(lam, prob.Ab)


def predual_partial_A(A: CoeffField, lam: CoeffField, prob: QuadDualProblem) -> CoeffField:
    """Pointwise derivative of the pre-dual integrand in A: curl lam + 2 M A + k (A - Abar)."""
    return A.like(curl_array(lam.grid, lam.data) + 2.0 * coupling_apply(lam.data, A.data)
                  + prob.k * (A.data - prob.Abar.data))


def dual_action(lam: CoeffField, prob: QuadDualProblem) -> float:
    """Closed-form value of the pre-dual at the DtP image.

    Density -1/2 P.K^{-1}P/k + lam:T(Abar) + Abar:curl lam; the last term is
    what the pre-dual contributes through A = Abar + D and does not cancel.
    """
    A = dtp_map(lam, prob)
    D = A.data - prob.Abar.data  # K^{-1} P / k
    P = assemble_P(lam, prob).data
    dens = (-0.5 * np.einsum("...ij,...ij->...", P, D)
            + np.einsum("...ij,...ij->...", lam.data, quad_T(prob.Abar.data))
            + np.einsum("...ij,...ij->...", prob.Abar.data, curl_array(lam.grid, lam.data)))
    return volume_integral(prob.grid, dens) - boundary_pairing(lam, prob.Ab)


def envelope_gradient(A: np.ndarray, grid: BoxGrid, Ab: BoundaryField) -> np.ndarray:
    """Weighted gradient in lam of  sum w [A:curl lam + lam:T(A)] - pairing(lam, Ab)  at fixed A.

    Returned as a field G with pairing(G, beta) equal to the directional derivative.
    """
    W = grid.weights()[..., None, None]
    raw = W * quad_T(A) + curl_adjoint_array(grid, W * A) - boundary_pairing_gradient(grid, Ab)
    return raw / W


def dual_gradient(lam: CoeffField, prob: QuadDualProblem) -> CoeffField:
    """Gradient of dual_action; in the interior it is the flatness residual of the DtP image."""
    A = dtp_map(lam, prob)
    return lam.like(envelope_gradient(A.data, prob.grid, prob.Ab))

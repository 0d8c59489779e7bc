"""Coordinate Chern-Simons action, flatness residual and first variation.

Pointwise, 2 eps_pqr A_Jp d_q A_Jr = 2 A : curl A and
(4/3) eps_pqr eps_JKL A_Jp A_Kq A_Lr = 8 det A, so the density is
2 A:curl A + 8 det A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_fields import BoxGrid, CoeffField, curl_array, volume_integral
from .lie_su2 import quad_T


@dataclass
class CsReport:
    action: float
    residual_linf: float
    residual_l2: float

    def to_dict(self) -> dict:
        return {"action": self.action, "residual_linf": self.residual_linf,
                "residual_l2": self.residual_l2}


def cs_density(A: CoeffField) -> np.ndarray:
    c = curl_array(A.grid, A.data)
    return 2.0 * np.einsum("...ij,...ij->...", A.data, c) + 8.0 * np.linalg.det(A.data)


def cs_action(A: CoeffField) -> float:
    return volume_integral(A.grid, cs_density(A))


def flatness_residual(A: CoeffField) -> CoeffField:
    """R_Zp = eps_pqr (d_q A_Zr + eps_ZBC A_Bq A_Cr) = (curl A + T(A))_Zp."""
    return A.like(curl_array(A.grid, A.data) + quad_T(A.data))


def residual_norms(R: CoeffField) -> tuple[float, float]:
    """(max-norm, weighted L2 norm) of a residual field."""
    sq = np.einsum("...ij,...ij->...", R.data, R.data)
    return float(np.max(np.abs(R.data))), float(np.sqrt(volume_integral(R.grid, sq)))


def cs_gradient(A: CoeffField) -> CoeffField:
    """4 * flatness_residual at non-boundary nodes, zero on the boundary.

    With the summation-by-parts stencils this is exactly the weighted gradient
    of ``cs_action`` with respect to values at non-boundary nodes, i.e.
    pairing(cs_gradient(A), v) == d/dt cs_action(A + t v) for v vanishing on
    the boundary.
    """
    G = 4.0 * flatness_residual(A).data
    G[~A.grid.interior_mask()] = 0.0
    return A.like(G)


def cs_report(A: CoeffField) -> CsReport:
    linf, l2 = residual_norms(flatness_residual(A))
    return CsReport(cs_action(A), linf, l2)


# -- cubic unboundedness --------------------------------------------------------

def bump(grid: BoxGrid) -> np.ndarray:
    """Smooth bump vanishing with its first derivative on the box faces."""
    x = (grid.coords() - np.asarray(grid.origin)) / np.asarray(grid.extent)
    return np.prod(np.sin(np.pi * x) ** 2, axis=-1)


def diagonal_family(phi: np.ndarray, grid: BoxGrid, t: float) -> CoeffField:
    """A^t_Jk = t phi delta_Jk."""
    return CoeffField(grid, t * phi[..., None, None] * np.eye(3))


@dataclass
class CubicFit:
    t: np.ndarray
    actions: np.ndarray
    coeffs: np.ndarray  # c0..c3 of the interpolating cubic in t
    expected_t3: float
    max_residual: float

    @property
    def t3(self) -> float:
        return float(self.coeffs[3])

    @property
    def rel_error(self) -> float:
        return abs(self.t3 - self.expected_t3) / abs(self.expected_t3)


def cubic_demo(grid: BoxGrid, ts=(-2.0, -1.0, 1.0, 2.0), phi: np.ndarray | None = None) -> CubicFit:
    """Fit a cubic in t to cs_action(t phi I) and compare its t^3 term to 8 * int phi^3."""
    phi = bump(grid) if phi is None else phi
    t = np.asarray(ts, float)
    if len(t) < 4:
        raise ValueError("need at least four t values for a cubic fit")
    S = np.array([cs_action(diagonal_family(phi, grid, ti)) for ti in t])
    coeffs = np.polynomial.polynomial.polyfit(t, S, 3)
    fitted = np.polynomial.polynomial.polyval(t, coeffs)
    scale = max(1.0, float(np.max(np.abs(S))))
    return CubicFit(t, S, coeffs, 8.0 * volume_integral(grid, phi ** 3),
                    float(np.max(np.abs(fitted - S)) / scale))

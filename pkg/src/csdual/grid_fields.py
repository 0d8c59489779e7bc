"""Box grids, su(2)-coefficient fields and the discrete calculus on them.

Fields are stored as arrays of shape ``(n1, n2, n3, 3, 3)``: x3 varies
fastest, then x2, then x1; within a node the matrix is row-major with the
Lie index Z outer and the spatial index p inner.

Derivatives are first-derivative operators applied axis by axis.  The
default ``"sbp42"`` operator is a diagonal-norm summation-by-parts operator
(fourth order inside, second order in the four closure rows at each end) and
its norm doubles as the quadrature, so

    <A, curl lam>_W - <lam, curl A>_W == boundary_pairing(lam, trace(A))

holds to rounding.  ``"central2"`` is plain central differences with
second-order one-sided rows at the ends and trapezoid weights; it is kept
for comparison and does not have that property.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .lie_su2 import EPS, derive_structure_constants, Su2Basis

SCHEMES = ("sbp42", "central2")
MIN_NODES = {"sbp42": 8, "central2": 3}
MAGIC = b"CSDF1"


class GridTooSmall(ValueError):
    pass


class GridMismatch(ValueError):
    pass


class NotUnitary(ValueError):
    pass


# Strand's diagonal-norm SBP operator: norm weights and closure rows (times 1/h)
_SBP42_NORM = np.array([17 / 48, 59 / 48, 43 / 48, 49 / 48])
_SBP42_CLOSURE = np.array([
    [-24 / 17, 59 / 34, -4 / 17, -3 / 34, 0, 0],
    [-1 / 2, 0, 1 / 2, 0, 0, 0],
    [4 / 43, -59 / 86, 0, 59 / 86, -4 / 43, 0],
    [3 / 98, 0, -59 / 98, 0, 32 / 49, -4 / 49],
])
_SBP42_INTERIOR = np.array([1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])


@lru_cache(maxsize=64)
def diff_operator(n: int, h: float, scheme: str = "sbp42") -> tuple[np.ndarray, np.ndarray]:
    """Dense 1-D derivative matrix ``D`` (n x n) and quadrature weights ``w`` (n,)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if n < MIN_NODES[scheme]:
        raise GridTooSmall(f"scheme {scheme} needs at least {MIN_NODES[scheme]} nodes per axis, got {n}")
    D = np.zeros((n, n))
    if scheme == "sbp42":
        for i in range(4, n - 4):
            D[i, i - 2:i + 3] = _SBP42_INTERIOR
        D[:4, :6] = _SBP42_CLOSURE
        D[n - 4:, n - 6:] = -_SBP42_CLOSURE[::-1, ::-1]
        w = np.ones(n)
        w[:4] = _SBP42_NORM
        w[n - 4:] = _SBP42_NORM[::-1]
    else:
        for i in range(1, n - 1):
            D[i, i - 1], D[i, i + 1] = -0.5, 0.5
        D[0, :3] = [-1.5, 2.0, -0.5]
        D[-1, -3:] = [0.5, -2.0, 1.5]
        w = np.ones(n)
        w[0] = w[-1] = 0.5
    D /= h
    w = w * h
    D.flags.writeable = False
    w.flags.writeable = False
    return D, w


@dataclass(frozen=True)
class BoxGrid:
    origin: tuple[float, float, float]
    extent: tuple[float, float, float]
    n: tuple[int, int, int]
    scheme: str = "sbp42"

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "extent", tuple(float(x) for x in self.extent))
        object.__setattr__(self, "n", tuple(int(x) for x in self.n))
        if len(self.n) != 3 or len(self.origin) != 3 or len(self.extent) != 3:
            raise ValueError("BoxGrid needs three axes")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if min(self.n) < MIN_NODES[self.scheme]:
            raise GridTooSmall(f"n={self.n}: scheme {self.scheme} needs >= {MIN_NODES[self.scheme]} nodes per axis")
        if min(self.extent) <= 0:
            raise ValueError("extent must be positive")

    @classmethod
    def unit(cls, n: int, scheme: str = "sbp42") -> "BoxGrid":
        return cls((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (n, n, n), scheme)

    @property
    def h(self) -> np.ndarray:
        return np.array([e / (m - 1) for e, m in zip(self.extent, self.n)])

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n

    @property
    def n_nodes(self) -> int:
        return self.n[0] * self.n[1] * self.n[2]

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h[axis] * np.arange(self.n[axis])

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (n1, n2, n3, 3)."""
        return np.stack(np.meshgrid(*(self.axis_coords(a) for a in range(3)), indexing="ij"), axis=-1)

    def D(self, axis: int) -> np.ndarray:
        return diff_operator(self.n[axis], float(self.h[axis]), self.scheme)[0]

    def axis_weights(self, axis: int) -> np.ndarray:
        return diff_operator(self.n[axis], float(self.h[axis]), self.scheme)[1]

    def weights(self) -> np.ndarray:
        w1, w2, w3 = (self.axis_weights(a) for a in range(3))
        return w1[:, None, None] * w2[None, :, None] * w3[None, None, :]

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[1:-1, 1:-1, 1:-1] = True
        return m

    def faces(self) -> Iterator[tuple[int, int]]:
        """(axis, side) for the six faces; side 0 is the low face."""
        for axis in range(3):
            for side in (0, 1):
                yield axis, side

    def face_weights(self, axis: int) -> np.ndarray:
        a, b = [t for t in range(3) if t != axis]
        return self.axis_weights(a)[:, None] * self.axis_weights(b)[None, :]

    def compatible(self, other: "BoxGrid") -> bool:
        return (self.n == other.n and self.scheme == other.scheme
                and np.allclose(self.origin, other.origin) and np.allclose(self.extent, other.extent))


def _require_same(*grids: BoxGrid):
    g0 = grids[0]
    for g in grids[1:]:
        if not g0.compatible(g):
            raise GridMismatch(f"grid {g} does not match {g0}")


@dataclass
class CoeffField:
    grid: BoxGrid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.grid.n + (3, 3):
            raise GridMismatch(f"field data shape {self.data.shape} != {self.grid.n + (3, 3)}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field has non-finite entries")

    @classmethod
    def zeros(cls, grid: BoxGrid) -> "CoeffField":
        return cls(grid, np.zeros(grid.n + (3, 3)))

    @classmethod
    def constant(cls, grid: BoxGrid, M) -> "CoeffField":
        return cls(grid, np.broadcast_to(np.asarray(M, float), grid.n + (3, 3)).copy())

    @classmethod
    def from_function(cls, grid: BoxGrid, f: Callable[[np.ndarray], np.ndarray]) -> "CoeffField":
        """``f`` maps coordinates (..., 3) to matrices (..., 3, 3)."""
        return cls(grid, np.asarray(f(grid.coords()), float))

    @classmethod
    def random(cls, grid: BoxGrid, rng: np.random.Generator, scale: float = 1.0) -> "CoeffField":
        return cls(grid, scale * rng.standard_normal(grid.n + (3, 3)))

    def like(self, data: np.ndarray) -> "CoeffField":
        return CoeffField(self.grid, data)

    def copy(self) -> "CoeffField":
        return CoeffField(self.grid, self.data.copy())

    def __add__(self, other: "CoeffField") -> "CoeffField":
        _require_same(self.grid, other.grid)
        return self.like(self.data + other.data)

    def __sub__(self, other: "CoeffField") -> "CoeffField":
        _require_same(self.grid, other.grid)
        return self.like(self.data - other.data)

    def __mul__(self, s: float) -> "CoeffField":
        return self.like(self.data * s)

    __rmul__ = __mul__

    def __neg__(self) -> "CoeffField":
        return self.like(-self.data)

    def linf(self, mask: np.ndarray | None = None) -> float:
        d = self.data if mask is None else self.data[mask]
        return float(np.max(np.abs(d))) if d.size else 0.0

    def node_norms(self) -> np.ndarray:
        """Frobenius norm of the 3x3 matrix at each node."""
        return np.sqrt(np.einsum("...ij,...ij->...", self.data, self.data))


def _face_slice(axis: int, side: int) -> tuple:
    s = [slice(None)] * 3
    s[axis] = 0 if side == 0 else -1
    return tuple(s)


def face_normal(axis: int, side: int) -> np.ndarray:
    n = np.zeros(3)
    n[axis] = -1.0 if side == 0 else 1.0
    return n


@dataclass
class BoundaryField:
    """Per-face 3x3 data (boundary datum A^(b)) on the six faces of a box grid."""

    grid: BoxGrid
    faces: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for axis, side in self.grid.faces():
            shape = tuple(m for t, m in enumerate(self.grid.n) if t != axis) + (3, 3)
            arr = self.faces.get((axis, side))
            if arr is None:
                arr = np.zeros(shape)
            arr = np.asarray(arr, float)
            if arr.shape != shape:
                raise GridMismatch(f"face {(axis, side)} has shape {arr.shape}, expected {shape}")
            self.faces[(axis, side)] = arr

    @classmethod
    def zeros(cls, grid: BoxGrid) -> "BoundaryField":
        return cls(grid)

    @classmethod
    def trace(cls, f: CoeffField) -> "BoundaryField":
        return cls(f.grid, {fs: f.data[_face_slice(*fs)].copy() for fs in f.grid.faces()})

    def normal(self, axis: int, side: int) -> np.ndarray:
        return face_normal(axis, side)

    def da(self, axis: int) -> np.ndarray:
        return self.grid.face_weights(axis)


def cross_normal(M: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Row-wise cross product (M x n)_Zr = eps_rqs M_Zq n_s."""
    return np.einsum("rqs,...Zq,s->...Zr", EPS, M, n)


def boundary_pairing(lam: CoeffField, Ab: BoundaryField) -> float:
    """Sum over faces of the quadrature of lam : (A^(b) x n); the positive pairing."""
    _require_same(lam.grid, Ab.grid)
    total = 0.0
    for axis, side in lam.grid.faces():
        integrand = np.einsum("...Zr,...Zr->...", lam.data[_face_slice(axis, side)],
                              cross_normal(Ab.faces[(axis, side)], face_normal(axis, side)))
        total += float(np.sum(lam.grid.face_weights(axis) * integrand))
    return total


def boundary_pairing_gradient(grid: BoxGrid, Ab: BoundaryField) -> np.ndarray:
    """d/d(lam) of boundary_pairing(lam, Ab), as a raw (unweighted) array."""
    _require_same(grid, Ab.grid)
    out = np.zeros(grid.n + (3, 3))
    for axis, side in grid.faces():
        out[_face_slice(axis, side)] += (grid.face_weights(axis)[..., None, None]
                                         * cross_normal(Ab.faces[(axis, side)], face_normal(axis, side)))
    return out


def tangential_mismatch(A: CoeffField, Ab: BoundaryField) -> float:
    """max over boundary nodes of |(A - A^(b)) x n|; only the tangential part is a boundary condition."""
    _require_same(A.grid, Ab.grid)
    worst = 0.0
    for axis, side in A.grid.faces():
        d = cross_normal(A.data[_face_slice(axis, side)] - Ab.faces[(axis, side)], face_normal(axis, side))
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def full_mismatch(A: CoeffField, Ab: BoundaryField) -> float:
    _require_same(A.grid, Ab.grid)
    return max(float(np.max(np.abs(A.data[_face_slice(*fs)] - Ab.faces[fs]))) for fs in A.grid.faces())


# -- calculus ---------------------------------------------------------------

def apply_along(M: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(M, arr, axes=([1], [axis])), 0, axis)


def diff(grid: BoxGrid, arr: np.ndarray, axis: int) -> np.ndarray:
    """Derivative along grid axis ``axis`` of an array whose first three axes are the grid."""
    return apply_along(grid.D(axis), arr, axis)


def diff_transpose(grid: BoxGrid, arr: np.ndarray, axis: int) -> np.ndarray:
    return apply_along(grid.D(axis).T, arr, axis)


def curl_array(grid: BoxGrid, data: np.ndarray) -> np.ndarray:
    d = np.stack([diff(grid, data, q) for q in range(3)])
    return np.einsum("rqp,q...Zp->...Zr", EPS, d)


def curl_rowwise(f: CoeffField) -> CoeffField:
    """(curl f)_Zr = eps_rqp d_q f_Zp, applied to each Lie row."""
    return f.like(curl_array(f.grid, f.data))


def curl_adjoint_array(grid: BoxGrid, data: np.ndarray) -> np.ndarray:
    """Exact transpose of ``curl_array`` as a linear map on flat arrays."""
    out = np.zeros_like(data)
    for q in range(3):
        out += diff_transpose(grid, np.einsum("rp,...Zr->...Zp", EPS[:, q, :], data), q)
    return out


def curl_adjoint(g: CoeffField) -> CoeffField:
    return g.like(curl_adjoint_array(g.grid, g.data))


def volume_integral(grid: BoxGrid, s: np.ndarray) -> float:
    """Quadrature of a scalar node field with the operator's norm weights."""
    s = np.asarray(s, float)
    if s.shape != grid.n:
        raise GridMismatch(f"scalar field shape {s.shape} != {grid.n}")
    # np.sum over a contiguous array is pairwise and order-fixed
    return float(np.sum(np.ascontiguousarray(grid.weights() * s)))


def pairing(f: CoeffField, g: CoeffField) -> float:
    """Discrete L2 pairing <<f, g>>_h = sum_i w_i f_i : g_i."""
    _require_same(f.grid, g.grid)
    return volume_integral(f.grid, np.einsum("...ij,...ij->...", f.data, g.data))


# -- pure gauge fields -------------------------------------------------------

def su2_exp(v: np.ndarray, basis: Su2Basis | None = None) -> np.ndarray:
    """exp(v_J E_J) for real vectors v (..., 3); uses (v.E)^2 = -|v|^2 I."""
    E = (Su2Basis.standard() if basis is None else basis).E
    v = np.asarray(v, float)
    r = np.linalg.norm(v, axis=-1)
    sinc = np.where(r > 1e-300, np.sin(r) / np.where(r > 0, r, 1.0), 1.0)
    X = np.einsum("...J,Jab->...ab", v, E)
    return np.cos(r)[..., None, None] * np.eye(2) + sinc[..., None, None] * X


def gauge_from_factors(grid: BoxGrid, factors: list[tuple[int, int, float]]) -> np.ndarray:
    """g(x) = prod_k exp(amp_k * x_{axis_k} * E_{J_k}); axes and J are 1-based."""
    x = grid.coords()
    g = np.broadcast_to(np.eye(2, dtype=complex), grid.n + (2, 2)).copy()
    for axis, J, amp in factors:
        v = np.zeros(grid.n + (3,))
        v[..., J - 1] = amp * x[..., axis - 1]
        g = g @ su2_exp(v)
    return g


def pure_gauge_field(grid: BoxGrid, g: np.ndarray, side: str = "auto", tol: float = 1e-10) -> CoeffField:
    """Coefficients of a Maurer-Cartan form of the SU(2)-valued node map ``g``.

    ``side="left"`` gives g^{-1} d g, ``"right"`` gives (d g) g^{-1}; both
    use the grid's derivative stencils.  ``"auto"`` picks the form whose
    curvature vanishes under the flatness residual's literal eps_JKL for the
    measured sign of the standard basis (right-invariant for s = -1).
    """
    g = np.asarray(g, complex)
    if g.shape != grid.n + (2, 2):
        raise GridMismatch(f"gauge map shape {g.shape} != {grid.n + (2, 2)}")
    gh = np.conj(np.swapaxes(g, -1, -2))
    if np.max(np.abs(gh @ g - np.eye(2))) > tol or np.max(np.abs(np.linalg.det(g) - 1)) > tol:
        raise NotUnitary("gauge map is not SU(2)-valued within tolerance")
    if side == "auto":
        side = "left" if derive_structure_constants().sign > 0 else "right"
    E = Su2Basis.standard().E
    A = np.empty(grid.n + (3, 3))
    for p in range(3):
        dg = diff(grid, g, p)
        X = gh @ dg if side == "left" else dg @ gh
        A[..., :, p] = -0.5 * np.real(np.einsum("Jab,...ba->...J", E, X))
    return CoeffField(grid, A)


# -- snapshots ----------------------------------------------------------------

def write_snapshot(path, f: CoeffField) -> None:
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<3q", *g.n))
        fh.write(struct.pack("<3d", *g.origin))
        fh.write(struct.pack("<3d", *g.extent))
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a CSDF1 snapshot")
        n = struct.unpack("<3q", fh.read(24))
        origin = struct.unpack("<3d", fh.read(24))
        extent = struct.unpack("<3d", fh.read(24))
    return {"magic": MAGIC.decode(), "n": list(n), "origin": list(origin), "extent": list(extent)}


def read_snapshot(path, scheme: str = "sbp42") -> CoeffField:
    hdr = read_header(path)
    grid = BoxGrid(hdr["origin"], hdr["extent"], hdr["n"], scheme)
    raw = Path(path).read_bytes()[5 + 72:]
    expected = grid.n_nodes * 9 * 8
    if len(raw) != expected:
        raise ValueError(f"{path}: payload has {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f8").reshape(grid.n + (3, 3)).astype(float)
    return CoeffField(grid, data)


def export_csv(f: CoeffField, out) -> None:
    """Rows (x1, x2, x3, Z, p, value) with 1-based Z and p, in storage order."""
    w = csv.writer(out)
    w.writerow(["x1", "x2", "x3", "Z", "p", "value"])
    x = f.grid.coords()
    for idx in np.ndindex(*f.grid.n):
        x1, x2, x3 = x[idx]
        for Z in range(3):
            for p in range(3):
                w.writerow([repr(float(x1)), repr(float(x2)), repr(float(x3)), Z + 1, p + 1,
                            repr(float(f.data[idx + (Z, p)]))])

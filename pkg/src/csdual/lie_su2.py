"""su(2) matrix algebra and the tensor conventions shared by every other module.

The basis is E_J = i*sigma_J.  Structure constants are computed from the
matrices, not typed in; field-level formulas use the literal Levi-Civita
symbol ``EPS`` and the measured sign ``StructureData.sign`` records how the
two are related for this basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .report import RunReport


class ConventionError(ValueError):
    """Raised when a basis does not produce |c_JKL| = 2|eps_JKL|."""


def _levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for (i, j, k), s in (((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1),
                         ((0, 2, 1), -1), ((2, 1, 0), -1), ((1, 0, 2), -1)):
        eps[i, j, k] = s
    eps.flags.writeable = False
    return eps


EPS = _levi_civita()

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


@dataclass(frozen=True)
class Su2Basis:
    """Three 2x2 complex matrices, stacked as ``E[J]``."""

    E: np.ndarray

    @classmethod
    def standard(cls) -> "Su2Basis":
        return cls(1j * PAULI)

    def conjugated(self, U: np.ndarray) -> "Su2Basis":
        """Basis U E_J U^dagger; an automorphism, so every identity survives."""
        return Su2Basis(np.einsum("ab,Jbc,dc->Jad", U, self.E, U.conj()))

    def scaled(self, s: float) -> "Su2Basis":
        return Su2Basis(s * self.E)


@dataclass(frozen=True)
class StructureData:
    basis: Su2Basis
    c: np.ndarray = field(repr=False)
    sign: int

    @property
    def eps_tilde(self) -> np.ndarray:
        """0.5 <[E_C, E_Z], E_D>, i.e. c/2."""
        return 0.5 * self.c


def commutator(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return X @ Y - Y @ X


def is_skew_hermitian(X: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(X + X.conj().swapaxes(-1, -2))) <= tol)


def inner(X: np.ndarray, Y: np.ndarray, check: bool = False) -> float:
    """-1/2 Re Tr(XY); the orthonormalizing inner product on su(2)."""
    if check and not (is_skew_hermitian(X) and is_skew_hermitian(Y)):
        raise ValueError("inner() expects skew-hermitian arguments")
    return float(-0.5 * np.real(np.trace(X @ Y)))


def _structure_tensor(basis: Su2Basis) -> np.ndarray:
    E = basis.E
    br = np.einsum("Jab,Kbc->JKac", E, E) - np.einsum("Kab,Jbc->JKac", E, E)
    # <[E_J,E_K], E_L> = -1/2 Re Tr([E_J,E_K] E_L)
    return -0.5 * np.real(np.einsum("JKab,Lba->JKL", br, E))


def derive_structure_constants(basis: Su2Basis | None = None) -> StructureData:
    basis = Su2Basis.standard() if basis is None else basis
    c = _structure_tensor(basis)
    dev = np.max(np.abs(np.abs(c) - 2.0 * np.abs(EPS)))
    if dev > 1e-10:
        raise ConventionError(f"|c_JKL| deviates from 2|eps_JKL| by {dev:.3e}")
    sign = 1 if c[0, 1, 2] > 0 else -1
    return StructureData(basis=basis, c=c, sign=sign)


def random_skew_hermitian(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Random traceless skew-hermitian 2x2 matrices (elements of su(2))."""
    shape = (3,) if size is None else (size, 3)
    v = rng.standard_normal(shape)
    return np.einsum("...J,Jab->...ab", v, 1j * PAULI)


def random_unitary(rng: np.random.Generator, n: int = 2) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def verify_identities(basis: Su2Basis | None = None, n_random: int = 100,
                      seed: int = 0, tol: float = 1e-12) -> RunReport:
    """Check the su(2) algebra identities for ``basis`` and record deviations.

    A broken basis is reported, never raised.
    """
    basis = Su2Basis.standard() if basis is None else basis
    E = basis.E
    I2 = np.eye(2)
    rng = np.random.default_rng(seed)
    rep = RunReport("algebra-verify")

    rep.check("skew_hermitian_traceless",
              max(np.max(np.abs(E + E.conj().swapaxes(-1, -2))),
                  np.max(np.abs(np.trace(E, axis1=1, axis2=2)))), tol)
    rep.check("squares_minus_identity",
              max(np.max(np.abs(E[J] @ E[J] + I2)) for J in range(3)), tol)

    # E_1E_2 = -E_3 and cyclic; [E_1,E_2] = -2E_3 and cyclic
    cyc = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
    rep.check("products", max(np.max(np.abs(E[a] @ E[b] + E[c])) for a, b, c in cyc), tol)
    rep.check("commutation", max(np.max(np.abs(commutator(E[a], E[b]) + 2 * E[c]))
                                 for a, b, c in cyc), tol)

    gram = np.array([[-np.real(np.trace(E[J] @ E[K])) for K in range(3)] for J in range(3)])
    rep.check("orthonormality", np.max(np.abs(gram - 2 * np.eye(3))), tol)

    c = _structure_tensor(basis)
    rep.check("structure_constant_magnitude", np.max(np.abs(np.abs(c) - 2 * np.abs(EPS))), tol)
    rep.check("structure_constant_antisymmetry", np.max(np.abs(c + c.transpose(1, 0, 2))), tol)

    X = rng.standard_normal((n_random, 3, 3, 3)) + 1j * rng.standard_normal((n_random, 3, 3, 3))
    Xa, Ya, Za = X[:, 0], X[:, 1], X[:, 2]
    t1 = np.trace(Xa @ commutator(Ya, Za), axis1=1, axis2=2)
    t2 = np.trace(Za @ commutator(Xa, Ya), axis1=1, axis2=2)
    t3 = np.trace(Ya @ commutator(Za, Xa), axis1=1, axis2=2)
    scale = 1.0 + np.max(np.abs(t1))
    rep.check("trace_cyclic", max(np.max(np.abs(t1 - t2)), np.max(np.abs(t1 - t3))) / scale, tol)

    u, v, w = (random_skew_hermitian(rng, n_random) for _ in range(3))
    lhs = -0.5 * np.real(np.trace(commutator(u, v) @ w, axis1=1, axis2=2))
    rhs = -0.5 * np.real(np.trace(v @ commutator(u, w), axis1=1, axis2=2))
    rep.check("ad_invariance", np.max(np.abs(lhs + rhs)) / (1.0 + np.max(np.abs(lhs))), tol)

    # -Tr(E_J [E_K, E_L]) against 4 eps_JKL: the measured sign is reported, not judged
    triple = np.array([[[-np.real(np.trace(E[J] @ commutator(E[K], E[L])))
                         for L in range(3)] for K in range(3)] for J in range(3)])
    measured = int(np.sign(triple[0, 1, 2])) if triple[0, 1, 2] != 0 else 0
    rep.extra["triple_trace_sign"] = {
        "claimed": "+4 eps_JKL",
        "measured_value_123": float(triple[0, 1, 2]),
        "measured_sign": measured,
        "discrepancy": measured != 1,
    }
    rep.extra["c_123"] = float(c[0, 1, 2])
    rep.extra["bracket_pairing_E3_E1E2"] = float(-0.5 * np.real(np.trace(E[2] @ commutator(E[0], E[1]))))
    rep.extra["sign"] = 1 if c[0, 1, 2] > 0 else -1
    return rep


# -- pointwise tensor algebra on real 3x3 coefficient matrices -------------

def quad_T(A: np.ndarray) -> np.ndarray:
    """T_Zp(A) = eps_pqr eps_ZBC A_Bq A_Cr over the trailing (3, 3) axes.

    Equals twice the cofactor matrix: row Z is 2 * (A_{Z+1} x A_{Z+2}).
    """
    A1, A2, A3 = A[..., 0, :], A[..., 1, :], A[..., 2, :]
    return 2.0 * np.stack([np.cross(A2, A3), np.cross(A3, A1), np.cross(A1, A2)], axis=-2)


def coupling_matrix(lam: np.ndarray) -> np.ndarray:
    """9x9 matrix M with M[(D,i),(C,r)] = lam_Zp eps_pir eps_ZDC.

    ``a . M a == lam : T(A)`` for the flattened a = A.reshape(9); M is symmetric.
    """
    M = np.einsum("...Zp,pir,ZDC->...DiCr", lam, EPS, EPS)
    return M.reshape(lam.shape[:-2] + (9, 9))

"""Choi-matrix calculus for Hermiticity-preserving maps on n x n matrices.

A map ``phi`` is stored as ``C = sum_ij e_ij (x) phi(e_ij)``. Reshaped to
``T[i, a, j, b]`` this reads ``T[i, a, j, b] = phi(e_ij)[a, b]``; every
operation below is an index manipulation of ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .matcore import (
    DEFAULT_TOL,
    Tolerance,
    conj_J,
    is_hermitian,
    is_psd,
    matrix_from_json,
    matrix_to_json,
    matrix_unit,
    partial_transpose,
    swap_operator,
)

__all__ = [
    "QuantumMap",
    "StateFunctional",
    "NotCompletelyPositiveError",
    "map_from_action",
    "apply",
    "ad_v",
    "adjoint",
    "t_conjugate",
    "compose",
    "kraus",
    "from_kraus",
    "id_tensor",
    "functional_of_map",
    "map_of_functional",
    "pi_contract",
    "identity_map",
    "transpose_map",
    "trace_map",
    "reduction_map",
    "reduction_witness",
    "choi_map",
    "breuer_hall_map",
    "max_entangled",
]

_HERM_EPS = 1e-12


def _frozen(X: np.ndarray) -> np.ndarray:
    X = np.array(X, dtype=complex)
    X.setflags(write=False)
    return X


def _check_hermitian_square(X: np.ndarray, n: int, what: str) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.shape != (n * n, n * n):
        raise ValueError(f"{what} must be {n * n}x{n * n}, got {X.shape}")
    if not is_hermitian(X, _HERM_EPS):
        raise ValueError(f"{what} is not Hermitian; only Hermiticity-preserving maps are representable")
    return (X + X.conj().T) / 2


@dataclass(frozen=True, eq=False)
class QuantumMap:
    """A Hermiticity-preserving linear map on M_n, held by its Choi matrix."""

    n: int
    choi: np.ndarray

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        C = _check_hermitian_square(self.choi, self.n, "Choi matrix")
        object.__setattr__(self, "choi", _frozen(C))

    @property
    def tensor(self) -> np.ndarray:
        n = self.n
        return self.choi.reshape(n, n, n, n)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return apply(self, x)

    def __add__(self, other: "QuantumMap") -> "QuantumMap":
        _same_n(self, other)
        return QuantumMap(self.n, self.choi + other.choi)

    def __rmul__(self, c: float) -> "QuantumMap":
        return QuantumMap(self.n, float(c) * self.choi)

    def allclose(self, other: "QuantumMap", atol: float = 1e-10) -> bool:
        return self.n == other.n and np.allclose(self.choi, other.choi, atol=atol, rtol=0)

    def to_dict(self) -> dict:
        return {"n": self.n, "choi": matrix_to_json(self.choi)}

    @classmethod
    def from_dict(cls, obj) -> "QuantumMap":
        return cls(int(obj["n"]), matrix_from_json(obj["choi"]))


@dataclass(frozen=True, eq=False)
class StateFunctional:
    """Linear functional ``rho(x) = Tr(density @ x)`` on M_n (x) M_n."""

    n: int
    density: np.ndarray
    is_state: bool = False

    def __post_init__(self):
        D = _check_hermitian_square(self.density, self.n, "density")
        if self.is_state:
            tr = np.trace(D).real
            if abs(tr - 1.0) > 1e-9:
                raise ValueError(f"a state needs trace 1, got {tr:.12g}")
            if not is_psd(D).is_in:
                raise ValueError("a state needs a positive semidefinite density")
        object.__setattr__(self, "density", _frozen(D))

    def __call__(self, x: np.ndarray) -> complex:
        return complex(np.einsum("ij,ji->", self.density, np.asarray(x)))

    def to_dict(self) -> dict:
        return {"n": self.n, "density": matrix_to_json(self.density), "is_state": bool(self.is_state)}

    @classmethod
    def from_dict(cls, obj) -> "StateFunctional":
        return cls(int(obj["n"]), matrix_from_json(obj["density"]), bool(obj.get("is_state", False)))


class NotCompletelyPositiveError(ValueError):
    """Raised by :func:`kraus` when the Choi matrix has a negative eigenvalue."""

    def __init__(self, margin: float, witness: np.ndarray):
        super().__init__(f"Choi matrix is not PSD (smallest eigenvalue {margin:.3g})")
        self.margin = margin
        self.witness = witness


def _same_n(a, b):
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")


def map_from_action(
    n: int,
    action: Callable[[np.ndarray], np.ndarray],
    check_linearity: bool = True,
) -> QuantumMap:
    """Materialise ``action`` by evaluating it on all matrix units.

    Linearity is the caller's obligation; with ``check_linearity`` a few
    random combinations are spot checked and a ValueError is raised when
    they disagree at 1e-8.
    """
    C = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            out = np.asarray(action(matrix_unit(n, i, j)))
            if out.shape != (n, n):
                raise ValueError(f"action returned shape {out.shape}, expected {(n, n)}")
            C[i * n:(i + 1) * n, j * n:(j + 1) * n] = out
    if check_linearity:
        rng = np.random.default_rng(0x5EED)
        for _ in range(3):
            a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            c = complex(rng.standard_normal(), rng.standard_normal())
            lhs = np.asarray(action(a + c * b))
            rhs = np.asarray(action(a)) + c * np.asarray(action(b))
            scale = max(1.0, float(np.linalg.norm(lhs)), float(np.linalg.norm(rhs)))
            if np.linalg.norm(lhs - rhs) > 1e-8 * scale:
                raise ValueError("action is not linear")
    return QuantumMap(n, C)


def apply(phi: QuantumMap, x: np.ndarray) -> np.ndarray:
    """phi(x) = sum_ij x_ij phi(e_ij), i.e. Tr_1[(x^T (x) I) C]."""
    x = np.asarray(x)
    if x.shape != (phi.n, phi.n):
        raise ValueError(f"expected a {phi.n}x{phi.n} argument, got {x.shape}")
    return np.einsum("ij,iajb->ab", x, phi.tensor)


def ad_v(V: np.ndarray) -> QuantumMap:
    """The map x -> V* x V. Its Choi matrix is w w* with w = vec(conj(V))."""
    V = np.asarray(V, dtype=complex)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError("V must be square")
    w = V.conj().reshape(-1)
    return QuantumMap(V.shape[0], np.outer(w, w.conj()))


def from_kraus(ops: Sequence[np.ndarray]) -> QuantumMap:
    """x -> sum_k V_k* x V_k."""
    ops = [np.asarray(V, dtype=complex) for V in ops]
    if not ops:
        raise ValueError("need at least one Kraus operator")
    W = np.stack([V.conj().reshape(-1) for V in ops], axis=1)
    return QuantumMap(ops[0].shape[0], W @ W.conj().T)


def adjoint(phi: QuantumMap) -> QuantumMap:
    """Hilbert-Schmidt adjoint: Tr(phi(a) b) = Tr(a phi*(b)). Choi is J C J."""
    return QuantumMap(phi.n, conj_J(phi.choi, phi.n))


def t_conjugate(phi: QuantumMap) -> QuantumMap:
    """t o phi o t; its Choi matrix is the full transpose of phi's."""
    return QuantumMap(phi.n, phi.choi.T)


def compose(alpha: QuantumMap, beta: QuantumMap) -> QuantumMap:
    """alpha o beta."""
    _same_n(alpha, beta)
    n = alpha.n
    T = np.einsum("ikjl,kalb->iajb", beta.tensor, alpha.tensor)
    return QuantumMap(n, T.reshape(n * n, n * n))


def id_tensor(alpha: QuantumMap, X: np.ndarray) -> np.ndarray:
    """(id (x) alpha)(X): apply alpha to every n x n block of X."""
    n = alpha.n
    X = np.asarray(X)
    if X.shape != (n * n, n * n):
        raise ValueError(f"expected a {n * n}x{n * n} matrix, got {X.shape}")
    Y = np.einsum("ikjl,kalb->iajb", X.reshape(n, n, n, n), alpha.tensor)
    return Y.reshape(n * n, n * n)


def kraus(phi: QuantumMap, tol: Tolerance = DEFAULT_TOL) -> list[np.ndarray]:
    """Kraus operators V_k with phi(x) = sum_k V_k* x V_k.

    Eigenvalues below 1e-10 * lambda_max are dropped. Raises
    :class:`NotCompletelyPositiveError` carrying the negative eigenvector
    when the Choi matrix is not PSD.
    """
    verdict = is_psd(phi.choi, tol)
    if verdict.is_out:
        raise NotCompletelyPositiveError(verdict.margin, verdict.certificate)
    n = phi.n
    w, v = np.linalg.eigh(phi.choi)
    lam_max = max(float(w[-1]), 0.0)
    ops = [
        np.sqrt(lam) * v[:, k].conj().reshape(n, n)
        for k, lam in enumerate(w)
        if lam > 1e-10 * lam_max and lam > 0
    ]
    if not ops:
        return [np.zeros((n, n), dtype=complex)]
    err = np.linalg.norm(from_kraus(ops).choi - phi.choi)
    if err > 1e-8 * max(1.0, float(np.linalg.norm(phi.choi))):
        raise np.linalg.LinAlgError(f"Kraus reconstruction error {err:.2e}")
    return ops


def functional_of_map(phi: QuantumMap) -> StateFunctional:
    """The functional a (x) b -> Tr(phi(a) b^T); its density is C^T."""
    return StateFunctional(phi.n, phi.choi.T)


def map_of_functional(rho: StateFunctional) -> QuantumMap:
    return QuantumMap(rho.n, rho.density.T)


def pi_contract(X: np.ndarray, n: int) -> np.ndarray:
    """Linear extension of a (x) b -> b^T a, i.e. sum_ij X_ij^T e_ij."""
    X = np.asarray(X)
    if X.shape != (n * n, n * n):
        raise ValueError(f"expected a {n * n}x{n * n} matrix, got {X.shape}")
    return np.einsum("iiqp->pq", X.reshape(n, n, n, n))


def max_entangled(n: int) -> np.ndarray:
    """Normalised sum_i e_i (x) e_i."""
    v = np.zeros(n * n, dtype=complex)
    v[:: n + 1] = 1.0
    return v / np.sqrt(n)


def identity_map(n: int) -> QuantumMap:
    return QuantumMap(n, n * np.outer(max_entangled(n), max_entangled(n)))


def transpose_map(n: int) -> QuantumMap:
    return QuantumMap(n, swap_operator(n))


def trace_map(n: int) -> QuantumMap:
    """x -> Tr(x) I / n."""
    return QuantumMap(n, np.eye(n * n, dtype=complex) / n)


def reduction_map(n: int) -> QuantumMap:
    """x -> Tr(x) I - x."""
    return QuantumMap(n, np.eye(n * n) - identity_map(n).choi)


def reduction_witness(n: int) -> QuantumMap:
    """(Tr(x) I - x) / n; Choi matrix I/n - |Omega><Omega|."""
    return QuantumMap(n, reduction_map(n).choi / n)


def choi_map(a: float = 2.0, b: float = 0.0, c: float = 1.0) -> QuantumMap:
    """Generalised Choi map on M_3; (2, 0, 1) is positive and not decomposable."""
    weights = np.array([[a, b, c], [c, a, b], [b, c, a]])

    def action(x):
        d = np.diag(x)
        return np.diag(weights @ d) - x

    return map_from_action(3, action, check_linearity=False)


def breuer_hall_map(n: int) -> QuantumMap:
    """x -> Tr(x) I - x - U x^T U* with U antisymmetric unitary (even n >= 4; zero at n = 2)."""
    if n % 2:
        raise ValueError("the Breuer-Hall map needs even n")
    U = np.zeros((n, n), dtype=complex)
    for k in range(0, n, 2):
        U[k, k + 1] = 1.0
        U[k + 1, k] = -1.0

    def action(x):
        return np.trace(x) * np.eye(n) - x - U @ x.T @ U.conj().T

    return map_from_action(n, action, check_linearity=False)

"""Dense complex-matrix kernel.

Matrices on H (x) H are indexed so that row ``i*n + a`` pairs the first
tensor factor index ``i`` with the second factor index ``a``; ``np.kron``
follows the same convention, so ``kron(e_ij, X)`` places ``X`` at block
row ``i``, block column ``j``.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

__all__ = [
    "Tolerance",
    "VerdictState",
    "Verdict",
    "DecResult",
    "tensor",
    "partial_transpose",
    "conj_J",
    "swap_operator",
    "matrix_unit",
    "is_hermitian",
    "is_psd",
    "is_block_positive",
    "product_expectation",
    "decompose_dec",
    "hs_pair",
    "matrix_to_json",
    "matrix_from_json",
    "as_rng",
]


@dataclass(frozen=True)
class Tolerance:
    """Absolute and relative cutoffs used by the spectral tests."""

    abs_eps: float = 1e-9
    rel_eps: float = 1e-9

    def __post_init__(self):
        for name in ("abs_eps", "rel_eps"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value!r}")

    @classmethod
    def from_env(cls) -> "Tolerance":
        """Default tolerance, with ``abs_eps`` overridden by ``CONEKIT_TOL`` if set."""
        raw = os.environ.get("CONEKIT_TOL")
        if raw is None or raw.strip() == "":
            return cls()
        return cls(abs_eps=float(raw))


DEFAULT_TOL = Tolerance()


class VerdictState(str, enum.Enum):
    IN = "in"
    OUT = "out"
    UNKNOWN = "unknown"


@dataclass(frozen=True, eq=False)
class Verdict:
    """Tri-state answer of a membership oracle.

    ``certificate`` is a witness (vector or matrix) and is mandatory for
    ``OUT``. ``margin`` is the scalar the decision was based on, e.g. the
    smallest eigenvalue. ``extra`` carries oracle-specific side data such
    as the witness map of a sampled test.
    """

    state: VerdictState
    margin: float
    certificate: np.ndarray | None = None
    note: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.state is VerdictState.OUT and self.certificate is None:
            raise ValueError("an Out verdict needs a certificate")

    @property
    def is_in(self) -> bool:
        return self.state is VerdictState.IN

    @property
    def is_out(self) -> bool:
        return self.state is VerdictState.OUT

    @property
    def decided(self) -> bool:
        return self.state is not VerdictState.UNKNOWN

    def to_dict(self) -> dict:
        out = {"state": self.state.value, "margin": float(self.margin)}
        if self.certificate is not None:
            cert = np.asarray(self.certificate)
            if cert.ndim == 1:
                cert = cert.reshape(-1, 1)
            out["witness"] = matrix_to_json(cert)
        if self.note:
            out["note"] = self.note
        return out

    def __repr__(self):
        return f"Verdict({self.state.value}, margin={self.margin:.3g})"


def as_rng(seed) -> np.random.Generator:
    """Turn a seed, a seed sequence or an existing generator into a generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _square_dim(X: np.ndarray, n: int) -> None:
    if X.ndim != 2 or X.shape != (n * n, n * n):
        raise ValueError(f"expected a {n * n}x{n * n} matrix, got shape {X.shape}")


def _fro_scale(X: np.ndarray) -> float:
    return max(1.0, float(np.linalg.norm(X)))


def tensor(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product ``A (x) B``."""
    return np.kron(np.asarray(A), np.asarray(B))


def matrix_unit(n: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return e


def swap_operator(n: int) -> np.ndarray:
    """The flip ``x (x) y -> y (x) x`` on C^n (x) C^n."""
    S = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            S[j * n + i, i * n + j] = 1.0
    return S


def partial_transpose(X: np.ndarray, n: int) -> np.ndarray:
    """Transpose every n x n block of X in place, i.e. apply id (x) t."""
    X = np.asarray(X)
    _square_dim(X, n)
    return X.reshape(n, n, n, n).transpose(0, 3, 2, 1).reshape(n * n, n * n)


def conj_J(X: np.ndarray, n: int) -> np.ndarray:
    """Conjugate X by the antilinear flip ``J(z e_i (x) e_j) = conj(z) e_j (x) e_i``.

    Entrywise ``(JXJ)[(a,b),(c,d)] = conj(X[(b,a),(d,c)])``, which is
    ``SWAP @ conj(X) @ SWAP``.
    """
    X = np.asarray(X)
    _square_dim(X, n)
    return X.reshape(n, n, n, n).transpose(1, 0, 3, 2).conj().reshape(n * n, n * n)


def hs_pair(A: np.ndarray, B: np.ndarray) -> complex:
    """Trace pairing Tr(AB)."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise ValueError(f"hs_pair needs equal square shapes, got {A.shape} and {B.shape}")
    return complex(np.einsum("ij,ji->", A, B))


def is_hermitian(X: np.ndarray, rel_eps: float = 1e-12) -> bool:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        return False
    return float(np.max(np.abs(X - X.conj().T), initial=0.0)) <= rel_eps * _fro_scale(X)


def _herm_part(X: np.ndarray) -> np.ndarray:
    return (X + X.conj().T) / 2


def is_psd(X: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> Verdict:
    """Spectral PSD test.

    In when the smallest eigenvalue is at least ``-abs_eps * max(1, ||X||_F)``;
    otherwise Out with the corresponding eigenvector. Never Unknown.
    """
    X = np.asarray(X, dtype=complex)
    if not is_hermitian(X, tol.rel_eps):
        raise ValueError("is_psd needs a Hermitian matrix")
    H = _herm_part(X)
    w, v = np.linalg.eigh(H)
    lam, vec = float(w[0]), v[:, 0]
    scale = _fro_scale(H)
    residual = np.linalg.norm(H @ vec - lam * vec)
    if residual > 1e-10 * scale:
        raise np.linalg.LinAlgError(f"eigenvector residual {residual:.2e} too large")
    if lam >= -tol.abs_eps * scale:
        return Verdict(VerdictState.IN, lam)
    return Verdict(VerdictState.OUT, lam, certificate=vec)


def product_expectation(X: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> float:
    """<xi (x) eta | X | xi (x) eta> for unit vectors (batched over leading axes)."""
    n = xi.shape[-1]
    T = np.asarray(X).reshape(n, n, n, n)
    val = np.einsum("...i,...a,iajb,...j,...b->...", xi.conj(), eta.conj(), T, xi, eta)
    return np.real(val)


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _seesaw(T: np.ndarray, xi: np.ndarray, eta: np.ndarray, max_iter: int = 500, step_tol: float = 1e-12):
    """Alternating exact minimisation of <xi (x) eta|X|xi (x) eta> over unit vectors.

    Each half step replaces one factor by the bottom eigenvector of the
    compressed operator, so the objective never increases; a restart stops
    once its decrease falls below ``step_tol``. Batched over the leading
    axis of ``xi`` and ``eta``.
    """
    n = T.shape[0]
    # M_eta[a, b] = sum_ij conj(xi_i) xi_j T[i,a,j,b], likewise for M_xi
    to_eta = T.transpose(0, 2, 1, 3).reshape(n * n, n * n)
    to_xi = T.transpose(1, 3, 0, 2).reshape(n * n, n * n)
    xi, eta = xi.copy(), eta.copy()
    active = np.arange(xi.shape[0])
    prev = np.full(xi.shape[0], np.inf)
    for _ in range(max_iter):
        x = xi[active]
        P = (x.conj()[:, :, None] * x[:, None, :]).reshape(-1, n * n)
        M = (P @ to_eta).reshape(-1, n, n)
        _, vecs = np.linalg.eigh((M + M.conj().transpose(0, 2, 1)) / 2)
        e = vecs[:, :, 0]
        Q = (e.conj()[:, :, None] * e[:, None, :]).reshape(-1, n * n)
        M = (Q @ to_xi).reshape(-1, n, n)
        vals, vecs = np.linalg.eigh((M + M.conj().transpose(0, 2, 1)) / 2)
        xi[active], eta[active] = vecs[:, :, 0], e
        moving = prev[active] - vals[:, 0] >= step_tol
        prev[active] = vals[:, 0]
        active = active[moving]
        if active.size == 0:
            break
    return xi, eta


def _random_unit(rng: np.random.Generator, shape) -> np.ndarray:
    z = rng.standard_normal((*shape, 2)) @ np.array([1.0, 1j])
    return _normalize(z)


def _product_minimum(X: np.ndarray, n: int, restarts: int, rng: np.random.Generator):
    T = X.reshape(n, n, n, n)
    xi = _random_unit(rng, (restarts, n))
    eta = _random_unit(rng, (restarts, n))
    xi, eta = _seesaw(T, xi, eta)
    vals = product_expectation(X, xi, eta)
    k = int(np.argmin(vals))
    return float(vals[k]), xi[k], eta[k]


@dataclass(frozen=True, eq=False)
class DecResult:
    """Outcome of the decomposability search ``X ~ A + (id (x) t)(B)``."""

    A: np.ndarray
    B: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _proj_psd(X: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(_herm_part(X))
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.conj().T


def _hermitian_coords(M: np.ndarray, upper, strict) -> np.ndarray:
    """Real coordinates of (a stack of) Hermitian matrices."""
    return np.concatenate([M[..., upper[0], upper[1]].real, M[..., strict[0], strict[1]].imag], axis=-1)


def _pt_stack(M: np.ndarray, n: int) -> np.ndarray:
    """Partial transpose of every matrix in a stack."""
    k = M.shape[0]
    return M.reshape(k, n, n, n, n).transpose(0, 1, 4, 3, 2).reshape(k, n * n, n * n)


def _polish_dec(Xn, A, B, n, rel, max_iter=60, target=1e-13):
    """Gauss-Newton on X = P P* + (Q Q*)^Gamma from factors of A and B.

    Steps are minimum-norm least-squares solutions of the linearised
    equation, with backtracking. Fast when the ranks of A and B are
    right; slow (but harmless) otherwise.
    """
    d = n * n

    def factor(M):
        w, v = np.linalg.eigh(M)
        keep = w > rel * max(w[-1], 1e-300)
        return v[:, keep] * np.sqrt(w[keep])

    def resid(P, Q):
        return Xn - P @ P.conj().T - partial_transpose(Q @ Q.conj().T, n)

    def directions(F):
        # d(F F*) along the real and imaginary unit perturbations of each entry of F
        r = F.shape[1]
        M = np.einsum("ka,lb->klab", np.eye(d), F.conj().T).reshape(d * r, d, d)
        re = M + np.swapaxes(M, -1, -2).conj()
        im = 1j * M - 1j * np.swapaxes(M, -1, -2).conj()
        return np.concatenate([re, im])

    upper, strict = np.triu_indices(d), np.triu_indices(d, 1)
    P, Q = factor(A), factor(B)
    R = resid(P, Q)
    res = float(np.linalg.norm(R))
    for _ in range(max_iter):
        if res < target:
            break
        DP = directions(P)
        DQ = _pt_stack(directions(Q), n)
        J = np.concatenate([_hermitian_coords(DP, upper, strict), _hermitian_coords(DQ, upper, strict)]).T
        try:
            step = np.linalg.lstsq(J, _hermitian_coords(R, upper, strict), rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        kp, kq = 2 * P.size, 2 * Q.size
        dP = (step[: kp // 2] + 1j * step[kp // 2: kp]).reshape(P.shape)
        dQ = (step[kp: kp + kq // 2] + 1j * step[kp + kq // 2:]).reshape(Q.shape)
        lam = 1.0
        while lam > 1e-4:
            P2, Q2 = P + lam * dP, Q + lam * dQ
            R2 = resid(P2, Q2)
            if np.isfinite(np.linalg.norm(R2)) and np.linalg.norm(R2) < res:
                break
            lam /= 2
        else:
            break
        P, Q, R, res = P2, Q2, R2, float(np.linalg.norm(R2))
    return P @ P.conj().T, Q @ Q.conj().T, res


def decompose_dec(X: np.ndarray, n: int, max_iter: int = 10000, target: float = 1e-7) -> DecResult:
    """Search PSD ``A``, ``B`` with ``X = A + B^Gamma``.

    Minimises ``||X - A - B^Gamma||_F`` over the product of PSD cones by
    projected gradient steps with Nesterov momentum and
    gradient-based restarts. The residual is measured on ``X / ||X||_F``.
    A small final residual is evidence of decomposability; a large one
    proves nothing.
    """
    X = np.asarray(X, dtype=complex)
    _square_dim(X, n)
    X = _herm_part(X)
    scale = float(np.linalg.norm(X))
    zero = np.zeros_like(X)
    if scale == 0.0:
        return DecResult(zero, zero, 0.0, 0, True)
    Xn = X / scale
    if np.linalg.eigvalsh(Xn)[0] >= 0:
        return DecResult(X, zero, 0.0, 0, True)
    Xg = partial_transpose(Xn, n)
    if np.linalg.eigvalsh(Xg)[0] >= 0:
        return DecResult(zero, partial_transpose(X, n), 0.0, 0, True)

    # the joint gradient is 2-Lipschitz, hence the step 1/2
    A = B = Ay = By = zero
    t = 1.0
    residual = np.inf
    window_start = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        R = Xn - Ay - partial_transpose(By, n)
        A_new = _proj_psd(Ay + 0.5 * R)
        B_new = _proj_psd(By + 0.5 * partial_transpose(R, n))
        if np.vdot(Ay - A_new, A_new - A).real + np.vdot(By - B_new, B_new - B).real > 0:
            t = 1.0
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        mom = (t - 1) / t_new
        Ay, By = A_new + mom * (A_new - A), B_new + mom * (B_new - B)
        A, B, t = A_new, B_new, t_new
        residual = float(np.linalg.norm(Xn - A - partial_transpose(B, n)))
        if residual < target:
            break
        # stagnation guard: boundary cases still shrink like 1/k, a positive distance does not
        if it % 500 == 0:
            if residual > 0.99 * window_start:
                break
            window_start = residual
    if target <= residual < 1e-3:
        # first-order methods crawl near the boundary; finish on low-rank factors
        for rel in (1e-2, 1e-6):
            A2, B2, r2 = _polish_dec(Xn, A, B, n, rel)
            if r2 < residual:
                A, B, residual = A2, B2, r2
            if residual < target:
                break
    return DecResult(A * scale, B * scale, residual, it, residual < target)


def is_block_positive(
    X: np.ndarray,
    n: int,
    restarts: int | None = None,
    tol: Tolerance = DEFAULT_TOL,
    seed=None,
    certify_decomposable: bool = True,
) -> Verdict:
    """Semidecide ``<xi (x) eta|X|xi (x) eta> >= 0`` for all product vectors.

    Out comes with a violating product vector and is always certified.
    In is certified when X or X^Gamma is PSD, or (optionally) when a
    decomposition X = A + B^Gamma is found; otherwise In is only declared
    when ``restarts >= 50 n^2`` multi-start minima all exceed ``+1e-7``.
    Everything else is Unknown.
    """
    X = np.asarray(X, dtype=complex)
    _square_dim(X, n)
    if not is_hermitian(X, tol.rel_eps):
        raise ValueError("is_block_positive needs a Hermitian matrix")
    X = _herm_part(X)
    if restarts is None:
        restarts = 50 * n * n
    psd = is_psd(X, tol)
    if psd.is_in:
        return Verdict(VerdictState.IN, psd.margin, note="psd")
    ppt = is_psd(partial_transpose(X, n), tol)
    if ppt.is_in:
        return Verdict(VerdictState.IN, ppt.margin, note="partial transpose psd")

    rng = as_rng(seed)
    best, xi, eta = _product_minimum(X, n, max(restarts, 1), rng)
    vec = np.kron(xi, eta)
    if best < -tol.abs_eps:
        return Verdict(VerdictState.OUT, best, certificate=vec, extra={"xi": xi, "eta": eta})
    if restarts >= 50 * n * n and best > 1e-7:
        return Verdict(VerdictState.IN, best, note="multistart")
    if certify_decomposable:
        dec = decompose_dec(X, n)
        if dec.converged:
            return Verdict(VerdictState.IN, best, note="decomposable", extra={"residual": dec.residual})
    return Verdict(VerdictState.UNKNOWN, best, certificate=vec)


def matrix_to_json(X: np.ndarray) -> dict:
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    rows, cols = X.shape
    data = [[float(z.real), float(z.imag)] for z in X.reshape(-1)]
    return {"rows": int(rows), "cols": int(cols), "data": data}


def matrix_from_json(obj: Mapping) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    if rows <= 0 or cols <= 0:
        raise ValueError("rows and cols must be positive")
    data = obj["data"]
    if len(data) != rows * cols:
        raise ValueError(f"expected {rows * cols} entries, got {len(data)}")
    flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    return flat.reshape(rows, cols)

"""State-level criteria: PPT, separability, block positivity and the
equivalence checks for functionals on M_n (x) M_n."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .cones import (
    Cone,
    ConeId,
    dual_cone,
    membership,
    pairing_infimum,
    sample_cone,
    sample_PBK,
)
from .maps import (
    QuantumMap,
    StateFunctional,
    adjoint,
    id_tensor,
    map_of_functional,
    identity_map,
    transpose_map,
)
from .matcore import (
    DEFAULT_TOL,
    Tolerance,
    Verdict,
    VerdictState,
    _hermitian_coords,
    _seesaw,
    _random_unit,
    as_rng,
    is_block_positive,
    is_psd,
    matrix_to_json,
    partial_transpose,
)

__all__ = [
    "SeparableDecomposition",
    "Theorem10Report",
    "Theorem11Report",
    "werner",
    "is_ppt_state",
    "is_separable",
    "separable_decomposition",
    "in_cone_C",
    "theorem10_check",
    "theorem11_check",
    "gen_random",
    "GEN_KINDS",
]

CONDITIONS_10 = ("i", "ii", "iii", "iv", "v")
CONDITIONS_11 = ("i", "ii", "iii")


@dataclass(frozen=True, eq=False)
class SeparableDecomposition:
    """``sum_k weights[k] * kron(*factors[k])`` with rank-one PSD factors."""

    weights: np.ndarray
    factors: tuple

    def density(self) -> np.ndarray:
        return sum(w * np.kron(a, b) for w, (a, b) in zip(self.weights, self.factors))

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "factors": [[matrix_to_json(a), matrix_to_json(b)] for a, b in self.factors],
        }


def werner(p: float) -> StateFunctional:
    """p |psi-><psi-| + (1 - p) I/4 on C^2 (x) C^2."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    psi = np.array([0.0, 1.0, -1.0, 0.0]) / np.sqrt(2)
    h = p * np.outer(psi, psi) + (1 - p) * np.eye(4) / 4
    return StateFunctional(2, h.astype(complex), is_state=True)


def _require_state(rho: StateFunctional, tol: Tolerance):
    if rho.is_state:
        return
    tr = np.trace(rho.density).real
    if abs(tr - 1.0) > 1e-9 or not is_psd(rho.density, tol).is_in:
        raise ValueError("input is not a state (needs PSD density with trace 1)")


def is_ppt_state(rho: StateFunctional, tol: Tolerance = DEFAULT_TOL) -> Verdict:
    """In iff the partial transpose of the density is PSD."""
    _require_state(rho, tol)
    return is_psd(partial_transpose(rho.density, rho.n), tol)


def _as_real(P: np.ndarray) -> np.ndarray:
    return np.concatenate([P.real.ravel(), P.imag.ravel()])


def _polish_products(h, n, X, Y, max_iter=60, target=1e-12):
    """Gauss-Newton on ``h = sum_k (x_k (x) y_k)(x_k (x) y_k)*`` over unnormalised factors.

    Minimum-norm steps with backtracking; returns the refined factors and
    the Frobenius residual.
    """
    d = n * n
    upper, strict = np.triu_indices(d), np.triu_indices(d, 1)
    E = np.eye(n)

    def build(X, Y):
        V = np.einsum("ka,kb->kab", X, Y).reshape(len(X), d)
        return V, h - V.T @ V.conj()

    V, R = build(X, Y)
    res = float(np.linalg.norm(R))
    for _ in range(max_iter):
        if res < target:
            break
        k = len(X)
        dv = np.concatenate([np.einsum("ja,kb->kjab", E, Y).reshape(k, n, d),
                             np.einsum("ka,jb->kjab", X, E).reshape(k, n, d)], axis=1)
        dv = np.concatenate([dv, 1j * dv], axis=1)
        M = np.einsum("kpa,kb->kpab", dv, V.conj())
        M = M + np.swapaxes(M, -1, -2).conj()
        J = _hermitian_coords(M.reshape(-1, d, d), upper, strict).T
        try:
            step = np.linalg.lstsq(J, _hermitian_coords(R, upper, strict), rcond=None)[0].reshape(k, 4 * n)
        except np.linalg.LinAlgError:
            break
        z = step[:, : 2 * n] + 1j * step[:, 2 * n:]
        lam = 1.0
        while lam > 1e-4:
            X2, Y2 = X + lam * z[:, :n], Y + lam * z[:, n:]
            V2, R2 = build(X2, Y2)
            if np.isfinite(np.linalg.norm(R2)) and np.linalg.norm(R2) < res:
                break
            lam /= 2
        else:
            break
        X, Y, V, R, res = X2, Y2, V2, R2, float(np.linalg.norm(R2))
    return X, Y, res


def _try_polish(h, n, xis, etas, w, target):
    """Refine the heaviest columns into an exact decomposition, trying a few term counts."""
    order = np.argsort(w)[::-1]
    X = np.array(xis) * np.sqrt(w)[:, None]
    Y = np.array(etas)
    rank = int(np.linalg.matrix_rank(h, tol=1e-9 * max(1.0, float(np.linalg.norm(h)))))
    for k in sorted({rank, rank + 1, rank + 2, len(w)}):
        if k > len(w):
            continue
        idx = order[:k]
        Xp, Yp, res = _polish_products(h, n, X[idx], Y[idx])
        if res < target:
            nx = np.linalg.norm(Xp, axis=1)
            ny = np.linalg.norm(Yp, axis=1)
            ok = (nx > 0) & (ny > 0)
            xs, ys = Xp[ok] / nx[ok, None], Yp[ok] / ny[ok, None]
            weights = (nx[ok] * ny[ok]) ** 2
            factors = tuple((np.outer(x, x.conj()), np.outer(y, y.conj())) for x, y in zip(xs, ys))
            dec = SeparableDecomposition(weights, factors)
            if np.linalg.norm(dec.density() - h) < target:
                return dec
    return None


def separable_decomposition(
    h: np.ndarray,
    n: int,
    max_iter: int = 300,
    target: float = 1e-8,
    seed=None,
    polish_every: int = 20,
) -> SeparableDecomposition | None:
    """Column generation for ``h ~ sum_k w_k (xi_k xi_k*) (x) (eta_k eta_k*)``.

    Starts from the computational product basis, then repeatedly adds the
    product states best aligned with the residual and refits nonnegative
    weights. Every ``polish_every`` rounds the heaviest columns are
    refined by Gauss-Newton on the product vectors, which settles
    low-rank states that the linear fit only approaches. Returns None when
    the Frobenius residual stays above ``target`` after ``max_iter`` rounds.
    """
    rng = as_rng(seed)
    h = np.asarray(h, dtype=complex)
    eye = np.eye(n, dtype=complex)
    xis = [eye[i] for i in range(n) for _ in range(n)]
    etas = [eye[j] for _ in range(n) for j in range(n)]
    b = _as_real(h)

    def column(x, e):
        return _as_real(np.kron(np.outer(x, x.conj()), np.outer(e, e.conj())))

    cols = [column(x, e) for x, e in zip(xis, etas)]
    for rnd in range(max_iter + 1):
        A = np.array(cols).T
        w, _ = nnls(A, b, maxiter=50 * A.shape[1])
        fit = A @ w
        R = h - fit[: h.size].reshape(h.shape) - 1j * fit[h.size:].reshape(h.shape)
        keep = w > 0
        xis = [x for x, k in zip(xis, keep) if k]
        etas = [e for e, k in zip(etas, keep) if k]
        cols = [c for c, k in zip(cols, keep) if k]
        w = w[keep]
        if np.linalg.norm(R) < target:
            factors = tuple((np.outer(x, x.conj()), np.outer(e, e.conj())) for x, e in zip(xis, etas))
            return SeparableDecomposition(w, factors)
        if polish_every and len(w) and (rnd % polish_every == polish_every - 1 or rnd == max_iter):
            dec = _try_polish(h, n, xis, etas, w, target)
            if dec is not None:
                return dec
        if rnd == max_iter:
            break
        Rh = (R + R.conj().T) / 2
        # maximise <xi (x) eta | R | xi (x) eta>
        x0, e0 = _random_unit(rng, (16, n)), _random_unit(rng, (16, n))
        xs, es = _seesaw(-Rh.reshape(n, n, n, n), x0, e0, max_iter=30, step_tol=1e-9)
        for x, e in zip(xs, es):
            xis.append(x)
            etas.append(e)
            cols.append(column(x, e))
    return None


def _positive_witnesses(n: int, count: int, rng) -> np.ndarray:
    base = [transpose_map(n).choi]
    return np.concatenate([np.array(base), sample_cone(Cone.POS, n, count, rng)])


def is_separable(
    rho: StateFunctional,
    tol: Tolerance = DEFAULT_TOL,
    seed=None,
    witness_trials: int = 200,
    search_budget: int | None = None,
) -> tuple[Verdict, SeparableDecomposition | None]:
    """Separability verdict, with a product decomposition when one is found.

    For n = 2 the PPT test decides exactly; a decomposition is attached
    only if the (by default zero-round) column search finds one. For
    larger n, Out needs a positive map alpha with (id (x) alpha)(h) not
    PSD, and In needs an explicit decomposition; otherwise Unknown.
    """
    _require_state(rho, tol)
    n, h = rho.n, rho.density
    rng = as_rng(seed)
    if n * n <= 6:
        v = is_ppt_state(rho, tol)
        dec = None
        if v.is_in:
            dec = separable_decomposition(h, n, max_iter=search_budget or 0, seed=rng)
        return v, dec

    ppt = is_psd(partial_transpose(h, n), tol)
    if ppt.is_out:
        return Verdict(VerdictState.OUT, ppt.margin, certificate=ppt.certificate, note="not PPT",
                       extra={"alpha": transpose_map(n).choi}), None
    for A in _positive_witnesses(n, witness_trials, rng):
        v = is_psd(id_tensor(QuantumMap(n, A), h), tol)
        if v.is_out:
            return Verdict(VerdictState.OUT, v.margin, certificate=v.certificate,
                           note="positive map witness", extra={"alpha": A}), None
    dec = separable_decomposition(h, n, max_iter=300 if search_budget is None else search_budget, seed=rng)
    if dec is not None:
        resid = float(np.linalg.norm(dec.density() - h))
        return Verdict(VerdictState.IN, resid, note="explicit decomposition"), dec
    return Verdict(VerdictState.UNKNOWN, ppt.margin, note="PPT, no witness and no decomposition found"), None


def in_cone_C(x: np.ndarray, n: int, tol: Tolerance = DEFAULT_TOL, restarts=None, seed=None) -> Verdict:
    """Nonnegativity of x on all product states (block positivity)."""
    return is_block_positive(x, n, restarts=restarts, tol=tol, seed=seed)


# ------------------------------------------------------------------ reports


@dataclass(frozen=True, eq=False)
class _Report:
    conditions: dict
    theorem: str = ""
    cone: str | None = None

    @property
    def consistent(self) -> bool:
        states = {v.state for v in self.conditions.values()}
        return not (VerdictState.IN in states and VerdictState.OUT in states)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "cone": self.cone,
            "conditions": {k: v.to_dict() for k, v in self.conditions.items()},
            "consistent": self.consistent,
        }


@dataclass(frozen=True, eq=False)
class Theorem10Report(_Report):
    theorem: str = "T10"


@dataclass(frozen=True, eq=False)
class Theorem11Report(_Report):
    theorem: str = "T11"
    cone: str | None = Cone.PPT.value


def _threshold(h, tol):
    return -tol.abs_eps * max(1.0, float(np.linalg.norm(h)))


def _psd_preserved(h: np.ndarray, n: int, cone: Cone, tol: Tolerance) -> bool:
    """True when (id (x) alpha)(h) >= 0 is guaranteed for every alpha in cone."""
    needs = []
    if cone in (Cone.CP, Cone.PPT, Cone.SP, Cone.DEC):
        needs.append(h)
    if cone in (Cone.COCP, Cone.DEC):
        needs.append(partial_transpose(h, n))
    if cone is Cone.POS:
        return False
    return all(is_psd(M, tol).is_in for M in needs)


def _targeted_alphas(n: int, cone: Cone) -> list[np.ndarray]:
    out = []
    if cone in (Cone.CP, Cone.DEC, Cone.POS):
        out.append(identity_map(n).choi)
    if cone in (Cone.COCP, Cone.DEC, Cone.POS):
        out.append(transpose_map(n).choi)
    return out


def _bottom(M):
    w, v = np.linalg.eigh((M + M.conj().T) / 2)
    return float(w[0]), v[:, 0]


def theorem10_check(
    rho: StateFunctional,
    cone: ConeId,
    tol: Tolerance = DEFAULT_TOL,
    trials: int = 200,
    seed=None,
) -> Theorem10Report:
    """Evaluate the five equivalent conditions, each by its own route.

    (i) the map with Choi h^T lies in the dual cone; (ii) Tr(h C_alpha) >= 0;
    (iii) (id (x) alpha)(h) >= 0; (iv) rho((id (x) alpha)(y)) >= 0 for y >= 0;
    (v) rho >= 0 on {x : (id (x) alpha)(x) >= 0 for alpha in the dual cone}.
    Conditions (ii)-(v) quantify over alpha in ``cone`` and are tested on
    sampled plus targeted alphas; In is only reported where the relevant
    infimum is available in closed form.
    """
    cone = Cone(cone)
    ss = np.random.SeedSequence(None if seed is None else seed)
    seeds = ss.spawn(5)
    n, h = rho.n, rho.density
    thr = _threshold(h, tol)
    phi = map_of_functional(rho)
    cond = {}

    cond["i"] = membership(phi, dual_cone(cone), tol=tol, seed=seeds[0])

    cond["ii"] = pairing_infimum(QuantumMap(n, h), cone, trials=trials, seed=seeds[1], tol=tol)

    alphas = list(_targeted_alphas(n, cone)) + list(sample_cone(cone, n, trials, seeds[2]))
    certified = _psd_preserved(h, n, cone, tol)
    worst, hit = np.inf, None
    for A in alphas:
        lam, vec = _bottom(id_tensor(QuantumMap(n, A), h))
        if lam < worst:
            worst, hit = lam, (A, vec)
        if lam < thr:
            break
    if worst < thr:
        cond["iii"] = Verdict(VerdictState.OUT, worst, certificate=hit[1], extra={"alpha": hit[0]})
    elif certified:
        cond["iii"] = Verdict(VerdictState.IN, worst, note="PSD preservation certificate")
    else:
        cond["iii"] = Verdict(VerdictState.UNKNOWN, worst, note=f"{len(alphas)} alphas tried")

    # rho((id (x) alpha)(y)) = Tr((id (x) alpha*)(h) y); the inf over y is an eigenvalue
    alphas = list(_targeted_alphas(n, cone)) + list(sample_cone(cone, n, trials, seeds[3]))
    worst, hit = np.inf, None
    for A in alphas:
        alpha = QuantumMap(n, A)
        lam, vec = _bottom(id_tensor(adjoint(alpha), h))
        if lam < worst:
            worst, hit = lam, (A, vec)
        if lam < thr:
            break
    if worst < thr:
        y = np.outer(hit[1], hit[1].conj())
        x = id_tensor(QuantumMap(n, hit[0]), y)
        cond["iv"] = Verdict(VerdictState.OUT, rho(x).real, certificate=y, extra={"alpha": hit[0], "x": x})
    elif certified:
        cond["iv"] = Verdict(VerdictState.IN, worst, note="PSD preservation certificate")
    else:
        cond["iv"] = Verdict(VerdictState.UNKNOWN, worst, note=f"{len(alphas)} alphas tried")

    dual = dual_cone(cone)
    xs = list(sample_PBK(cone=dual, n=n, count=max(trials // 4, 1), seed=seeds[4]))
    if dual in (Cone.CP, Cone.PPT, Cone.SP):
        # PSD matrices lie in the cone when every alpha there is CP
        _, v = _bottom(h)
        xs.append(np.outer(v, v.conj()))
    if dual in (Cone.COCP, Cone.PPT, Cone.SP):
        _, v = _bottom(partial_transpose(h, n))
        xs.append(partial_transpose(np.outer(v, v.conj()), n))
    vals = [rho(x).real for x in xs]
    k = int(np.argmin(vals))
    if vals[k] < thr:
        cond["v"] = Verdict(VerdictState.OUT, vals[k], certificate=xs[k])
    elif dual is Cone.CP:
        cond["v"] = Verdict(VerdictState.IN, vals[k], note="cone is the PSD cone; exact")
    elif dual is Cone.COCP:
        cond["v"] = Verdict(VerdictState.IN, vals[k], note="cone is the partial-transpose PSD cone; exact")
    else:
        cond["v"] = Verdict(VerdictState.UNKNOWN, vals[k], note=f"{len(xs)} elements tried")
    return Theorem10Report(conditions=cond, cone=cone.value)


def theorem11_check(
    rho: StateFunctional,
    tol: Tolerance = DEFAULT_TOL,
    trials: int = 200,
    seed=None,
) -> Theorem11Report:
    """(i) PPT state, (ii) positivity on E = {x >= 0} u {x^Gamma >= 0},
    (iii) positivity on {x : (id (x) alpha)(x) >= 0 for all alpha in the PPT cone}.

    A positive multiple of a state counts as a state in (i).
    """
    n, h = rho.n, rho.density
    thr = _threshold(h, tol)
    ss = np.random.SeedSequence(None if seed is None else seed)
    s2, s3 = ss.spawn(2)
    cond = {}

    psd = is_psd(h, tol)
    tr = float(np.trace(h).real)
    if psd.is_out:
        cond["i"] = Verdict(VerdictState.OUT, psd.margin, certificate=psd.certificate, note="not positive")
    elif tr <= 0:
        cond["i"] = Verdict(VerdictState.IN, 0.0, note="zero functional")
    else:
        cond["i"] = is_ppt_state(StateFunctional(n, h / tr), tol)

    # (ii): both arms of the union, random PSD y plus the spectral minimisers
    rng = as_rng(s2)
    G = rng.standard_normal((trials, n * n, n * n, 2)) @ np.array([1.0, 1j])
    ys = G @ G.conj().transpose(0, 2, 1)
    ys /= np.einsum("kii->k", ys).real[:, None, None]
    lam0, v0 = _bottom(h)
    lam1, v1 = _bottom(partial_transpose(h, n))
    arm1 = list(ys) + [np.outer(v0, v0.conj())]
    arm2 = [partial_transpose(y, n) for y in ys] + [partial_transpose(np.outer(v1, v1.conj()), n)]
    vals = [(rho(x).real, x) for x in arm1 + arm2]
    val, x = min(vals, key=lambda t: t[0])
    if val < thr:
        cond["ii"] = Verdict(VerdictState.OUT, val, certificate=x)
    else:
        # the spectral minimisers attain the infimum of each arm
        cond["ii"] = Verdict(VerdictState.IN, min(lam0, lam1), note="exact on both arms")

    xs = list(sample_PBK(Cone.PPT, n, max(trials // 4, 1), seed=s3))
    # identity and transpose are decomposable, so these elements are in the cone too
    xs.append(np.outer(v0, v0.conj()))
    xs.append(partial_transpose(np.outer(v1, v1.conj()), n))
    vals = [rho(x).real for x in xs]
    k = int(np.argmin(vals))
    if vals[k] < thr:
        cond["iii"] = Verdict(VerdictState.OUT, vals[k], certificate=xs[k])
    else:
        cond["iii"] = Verdict(VerdictState.UNKNOWN, vals[k], note=f"no violation in {len(xs)} elements")
    return Theorem11Report(conditions=cond)


# ---------------------------------------------------------------- generators

GEN_KINDS = ("state", "ppt_state", "cp_map", "pos_map", "sp_map", "werner")


def _ginibre(rng, shape):
    return rng.standard_normal((*shape, 2)) @ np.array([1.0, 1j])


def gen_random(kind: str, n: int = 2, seed=None, p: float | None = None):
    """Seeded random objects.

    * ``state``: Ginibre ``G G* / Tr``, ``G`` square complex Gaussian.
    * ``ppt_state``: ``(1 - s) sigma + s I/n^2``, ``sigma`` a Ginibre state and
      ``s ~ U(0, 1)``, redrawn until the partial transpose is PSD.
    * ``cp_map``: random Kraus family, count uniform in ``1..n^2``.
    * ``pos_map``: Dirichlet mixture of ``Ad V o R o Ad W`` (R the reduction
      map), ``t o Ad V``, ``Ad V`` and 1% of ``x -> Tr(x) I/n``.
    * ``sp_map``: ``x -> sum_k omega_k(x) a_k`` (pure states omega_k, Wishart a_k).
    * ``werner``: needs n = 2 and ``p``.
    """
    kind = kind.replace("-", "_")
    if kind not in GEN_KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {GEN_KINDS}")
    if n < 1:
        raise ValueError("n must be positive")
    rng = as_rng(seed)
    d = n * n
    if kind == "werner":
        if n != 2:
            raise ValueError("the Werner family is defined for n = 2 only")
        if p is None:
            raise ValueError("werner needs p")
        return werner(p)
    if kind == "state":
        G = _ginibre(rng, (d, d))
        h = G @ G.conj().T
        return StateFunctional(n, h / np.trace(h).real, is_state=True)
    if kind == "ppt_state":
        while True:
            G = _ginibre(rng, (d, d))
            h = G @ G.conj().T
            h /= np.trace(h).real
            s = rng.uniform()
            h = (1 - s) * h + s * np.eye(d) / d
            if np.linalg.eigvalsh(partial_transpose(h, n))[0] >= 0:
                return StateFunctional(n, (h + h.conj().T) / 2, is_state=True)
    if kind == "cp_map":
        return QuantumMap(n, sample_cone(Cone.CP, n, 1, rng)[0])
    if kind == "sp_map":
        return QuantumMap(n, sample_cone(Cone.SP, n, 1, rng)[0])
    # pos_map
    from .maps import ad_v, compose, reduction_map, trace_map

    V, W, U = (_ginibre(rng, (n, n)) for _ in range(3))
    parts = [
        compose(ad_v(V), compose(reduction_map(n), ad_v(W))).choi,
        partial_transpose(ad_v(U).choi, n),
        ad_v(_ginibre(rng, (n, n))).choi,
    ]
    parts = [P / np.trace(P).real for P in parts]
    w = rng.dirichlet(np.ones(3))
    C = 0.99 * sum(wk * P for wk, P in zip(w, parts)) + 0.01 * trace_map(n).choi / n
    return QuantumMap(n, C)

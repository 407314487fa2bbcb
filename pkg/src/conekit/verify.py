"""Named, seeded property suites.

Every trial draws from its own generator seeded with
``[seed, crc32(suite_id), n, trial]``, so a trial's outcome depends only on
those four integers: reruns, reordering and concurrent execution all give
the same failures list, and :func:`run_trial` replays a single recorded
failure.
"""

from __future__ import annotations

import json
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .cones import Cone, dual_cone, k_sharp_membership, membership, sample_cone
from .maps import (
    NotCompletelyPositiveError,
    QuantumMap,
    StateFunctional,
    ad_v,
    adjoint,
    apply,
    compose,
    from_kraus,
    id_tensor,
    kraus,
    map_from_action,
    map_of_functional,
    matrix_unit,
    pi_contract,
    t_conjugate,
    transpose_map,
)
from .matcore import conj_J, is_block_positive, is_psd, matrix_to_json, partial_transpose, product_expectation
from .states import is_ppt_state, theorem10_check, theorem11_check, werner

__all__ = ["SuiteReport", "SUITES", "DEFAULT_TRIALS", "default_trials", "run_suite", "run_trial", "trial_seed"]


@dataclass(eq=False)
class SuiteReport:
    suite_id: str
    n: int
    trials: int
    seed: int
    assertion_style: str
    failures: list = field(default_factory=list)
    records: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def failures_json(self) -> str:
        return json.dumps(self.failures, sort_keys=True)

    def to_dict(self) -> dict:
        return {
            "suite_id": self.suite_id,
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "version": __version__,
            "assertion_style": self.assertion_style,
            "passed": self.passed,
            "failures": self.failures,
            "records": self.records,
            "elapsed": round(self.elapsed, 3),
        }


def trial_seed(suite_id: str, n: int, seed: int, trial: int) -> list[int]:
    return [int(seed), zlib.crc32(suite_id.encode()), int(n), int(trial)]


def _ginibre(rng, shape):
    return rng.standard_normal((*shape, 2)) @ np.array([1.0, 1j])


def _rand_herm(rng, d):
    G = _ginibre(rng, (d, d))
    return (G + G.conj().T) / 2


def _rand_map(rng, n) -> QuantumMap:
    return QuantumMap(n, _rand_herm(rng, n * n))


def _unit(rng, n):
    a = _ginibre(rng, (n, n))
    return a / np.linalg.norm(a)


def _scale(*mats) -> float:
    return max([1.0] + [float(np.linalg.norm(M)) for M in mats])


def _m(X):
    return matrix_to_json(np.asarray(X))


def _sub_seed(rng) -> int:
    return int(rng.integers(0, 2**63 - 1))


# Each trial returns (problems, records) where problems is a list of
# (description, inputs) pairs and records a dict of counters.


def _adjoint_by_pairing(phi: QuantumMap) -> np.ndarray:
    """Choi of phi* from Tr(phi(a) b) = Tr(a phi*(b)) evaluated on matrix units."""
    n = phi.n
    C = np.zeros((n * n, n * n), dtype=complex)
    for k in range(n):
        for l in range(n):
            for a in range(n):
                for b in range(n):
                    C[k * n + a, l * n + b] = apply(phi, matrix_unit(n, b, a))[l, k]
    return C


def _trial_L3(rng, n):
    problems = []
    phi = _rand_map(rng, n)
    C = phi.choi
    brute = _adjoint_by_pairing(phi)
    err = np.linalg.norm(conj_J(C, n) - brute)
    if err > 1e-9 * _scale(C):
        problems.append((f"JCJ differs from pairing adjoint by {err:.3e}", {"choi": _m(C)}))
    a, b = _unit(rng, n), _unit(rng, n)
    lhs = np.trace(apply(phi, a) @ b)
    rhs = np.trace(a @ apply(adjoint(phi), b))
    if abs(lhs - rhs) > 1e-9:
        problems.append((f"pairing identity off by {abs(lhs - rhs):.3e}", {"choi": _m(C), "a": _m(a), "b": _m(b)}))
    V = _ginibre(rng, (n, n))
    err = np.linalg.norm(conj_J(ad_v(V).choi, n) - ad_v(V.conj().T).choi)
    if err > 1e-9 * _scale(ad_v(V).choi):
        problems.append((f"J C_AdV J != C_AdV* ({err:.3e})", {"V": _m(V)}))
    return problems, {}


def _trial_L4a(rng, n):
    al, be = _rand_map(rng, n), _rand_map(rng, n)
    lhs = t_conjugate(compose(al, be)).choi
    rhs = compose(t_conjugate(al), t_conjugate(be)).choi
    err = np.linalg.norm(lhs - rhs)
    if err > 1e-9 * _scale(lhs):
        return [(f"(a o b)^t residual {err:.3e}", {"alpha": _m(al.choi), "beta": _m(be.choi)})], {}
    return [], {}


def _trial_L4b(rng, n):
    phi = _rand_map(rng, n)
    a, b = _unit(rng, n), _unit(rng, n)
    inner = adjoint(t_conjugate(phi))
    lhs = np.trace(pi_contract(id_tensor(inner, np.kron(a, b)), n))
    rhs = np.trace(apply(phi, a) @ b.T)
    if abs(lhs - rhs) > 1e-9:
        return [(f"factorisation off by {abs(lhs - rhs):.3e}",
                 {"choi": _m(phi.choi), "a": _m(a), "b": _m(b)})], {}
    return [], {}


def _trial_TT(rng, n):
    phi = _rand_map(rng, n)
    brute = map_from_action(n, lambda x: apply(phi, x.T).T).choi
    err = np.linalg.norm(t_conjugate(phi).choi - brute)
    if err > 1e-12 * _scale(phi.choi):
        return [(f"C_(phi^t) != C_phi^T ({err:.3e})", {"choi": _m(phi.choi)})], {}
    return [], {}


def _trial_CHOI(rng, n):
    problems = []
    k = int(rng.integers(1, n * n + 1))
    ops = list(_ginibre(rng, (k, n, n)))
    phi = from_kraus(ops)
    v = membership(phi, Cone.CP)
    if not v.is_in:
        problems.append(("Kraus-built map not CP", {"kraus": [_m(V) for V in ops]}))
    rec = from_kraus(kraus(phi)).choi
    if np.linalg.norm(rec - phi.choi) > 1e-8 * _scale(phi.choi):
        problems.append(("Kraus reconstruction failed", {"kraus": [_m(V) for V in ops]}))
    psi = _rand_map(rng, n)
    try:
        kraus(psi)
        extracted = True
    except NotCompletelyPositiveError:
        extracted = False
    if extracted != is_psd(psi.choi).is_in:
        problems.append(("kraus success disagrees with PSD test", {"choi": _m(psi.choi)}))
    t = transpose_map(n)
    vt = membership(t, Cone.CP)
    if not vt.is_out or abs(vt.margin + 1) > 1e-12:
        problems.append((f"transpose map: CP verdict {vt!r}", {}))
    if not membership(t, Cone.COCP).is_in:
        problems.append(("transpose map not copositive", {}))
    return problems, {}


_T1_CONES = (Cone.CP, Cone.PPT, Cone.POS)


def _trial_T1(rng, n, trial):
    K = _T1_CONES[trial % len(_T1_CONES)]
    D = dual_cone(K)
    phi = QuantumMap(n, sample_cone(D, n, 1, _sub_seed(rng))[0])
    base = membership(phi, D, seed=_sub_seed(rng))
    if not base.is_in:
        return [], {"uncertified_samples": 1}
    problems = []
    for name, psi in (("adjoint", adjoint(phi)), ("t-conjugate", t_conjugate(phi))):
        v = membership(psi, D, seed=_sub_seed(rng))
        if v.is_out:
            problems.append((f"{name} of a {D.value} member tests Out ({v.margin:.3e})", {"choi": _m(phi.choi)}))
    return problems, {"checked": 1}


_C9_CONES = (Cone.CP, Cone.COCP, Cone.PPT, Cone.DEC, Cone.SP, Cone.POS)


def _mixed_candidate(rng, n):
    kind = int(rng.integers(0, 4))
    if kind == 3:
        return _rand_map(rng, n)
    pool = (Cone.CP, Cone.COCP, Cone.POS)[kind]
    return QuantumMap(n, sample_cone(pool, n, 1, _sub_seed(rng))[0])


def _trial_C9(rng, n, trial):
    K = _C9_CONES[trial % len(_C9_CONES)]
    beta = _mixed_candidate(rng, n)
    sharp = k_sharp_membership(beta, K, trials=40, seed=_sub_seed(rng), use_registry=False)
    dual = membership(beta, dual_cone(K), seed=_sub_seed(rng))
    if sharp.is_out and dual.is_in or sharp.is_in and dual.is_out:
        return [(f"K# ({sharp.state.value}) vs K° ({dual.state.value}) for K={K.value}",
                 {"beta": _m(beta.choi)})], {}
    key = f"{K.value}:{sharp.state.value}/{dual.state.value}"
    return [], {key: 1}


def _random_functional(rng, n):
    kind = int(rng.integers(0, 4))
    d = n * n
    if kind == 0:
        G = _ginibre(rng, (d, d))
        h = G @ G.conj().T
        return StateFunctional(n, h / np.trace(h).real)
    if kind == 1:
        return StateFunctional(n, _rand_herm(rng, d) / d)
    if kind == 2 and n == 2:
        return werner(float(rng.uniform()))
    G = _ginibre(rng, (d, d))
    h = G @ G.conj().T
    h /= np.trace(h).real
    s = rng.uniform()
    return StateFunctional(n, (1 - s) * h + s * np.eye(d) / d)


_T10_CONES = (Cone.CP, Cone.PPT)


def _trial_T10(rng, n, trial):
    K = _T10_CONES[trial % len(_T10_CONES)]
    rho = _random_functional(rng, n)
    rep = theorem10_check(rho, K, trials=60, seed=_sub_seed(rng))
    problems = []
    if not rep.consistent:
        problems.append((f"T10 contradiction for K={K.value}: "
                         + ",".join(f"{k}={v.state.value}" for k, v in rep.conditions.items()),
                         {"density": _m(rho.density)}))
    if K is Cone.CP and rep.conditions["ii"].is_out != is_psd(rho.density).is_out:
        problems.append(("condition (ii) disagrees with the PSD test on h", {"density": _m(rho.density)}))
    return problems, {"decided:" + ",".join(v.state.value for v in rep.conditions.values()): 1}


def _trial_T11(rng, n, trial):
    rho = _random_functional(rng, n)
    rep = theorem11_check(rho, trials=60, seed=_sub_seed(rng))
    if not rep.consistent:
        return [("T11 contradiction: " + ",".join(f"{k}={v.state.value}" for k, v in rep.conditions.items()),
                 {"density": _m(rho.density)})], {}
    return [], {"i=" + rep.conditions["i"].state.value: 1}


def _trial_R9(rng, n):
    d = n * n
    H = _rand_herm(rng, d)
    x = H / np.linalg.norm(H) + rng.uniform(-0.2, 0.5) * np.eye(d)
    v = is_block_positive(x, n, seed=_sub_seed(rng))
    xi = _ginibre(rng, (10_000, n))
    eta = _ginibre(rng, (10_000, n))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    sampled = float(np.min(product_expectation(x, xi, eta)))
    problems = []
    if v.is_in and sampled < -1e-9:
        problems.append((f"block positivity In but a product state gives {sampled:.3e}", {"x": _m(x)}))
    if v.is_out:
        c = v.certificate
        # product vector check: reshaped coefficient matrix has rank one
        s = np.linalg.svd(c.reshape(n, n), compute_uv=False)
        value = float(np.real(c.conj() @ x @ c))
        if s[1] > 1e-8 * s[0] or abs(value - v.margin) > 1e-9 or value >= 0:
            problems.append(("Out certificate does not reproduce", {"x": _m(x)}))
    return problems, {v.state.value: 1, "sampled_negative": int(sampled < -1e-9)}


def _trial_RDEC(rng, n):
    d = n * n
    G = _ginibre(rng, (d, d))
    h = G @ G.conj().T
    h /= np.trace(h).real
    s = rng.uniform() ** 2
    rho = StateFunctional(n, (1 - s) * h + s * np.eye(d) / d, is_state=True)
    dec = membership(map_of_functional(rho), Cone.DEC, seed=_sub_seed(rng))
    ppt = is_ppt_state(rho)
    xs = sample_cone(Cone.PPT, n, 200, _sub_seed(rng))
    m = float(min(np.einsum("ij,kji->k", rho.density, xs).real))
    pos_on_cone = m >= -1e-9
    return [], {
        f"dec={dec.state.value},ppt={ppt.state.value}": 1,
        f"ppt={ppt.state.value},positive_on_sampled_cone={pos_on_cone}": 1,
    }


_SuiteFn = Callable


SUITES: dict[str, tuple[_SuiteFn, str, bool]] = {
    # id: (trial function, assertion style, takes trial index)
    "L3": (_trial_L3, "identity residual <= 1e-9 (scaled)", False),
    "L4a": (_trial_L4a, "identity residual <= 1e-9 (scaled)", False),
    "L4b": (_trial_L4b, "identity residual <= 1e-9 (scaled)", False),
    "T1": (_trial_T1, "non-contradiction: no decided Out under * or t", True),
    "C9": (_trial_C9, "non-contradiction between K# sampling and K° oracle", True),
    "CHOI": (_trial_CHOI, "exact: spectral verdicts and Kraus reconstruction <= 1e-8", False),
    "TT": (_trial_TT, "identity residual <= 1e-12 (scaled)", False),
    "T10": (_trial_T10, "non-contradiction across conditions (i)-(v)", True),
    "T11": (_trial_T11, "non-contradiction across conditions (i)-(iii)", True),
    "R9": (_trial_R9, "non-contradiction with sampled product states; certificates reproduce", False),
    "R-DEC": (_trial_RDEC, "recorded only (no assertion)", False),
}

DEFAULT_TRIALS = {
    "L3": 200, "L4a": 200, "L4b": 200, "T1": 60, "C9": 60, "CHOI": 100,
    "TT": 200, "T10": 50, "T11": 50, "R9": 100, "R-DEC": 50,
}
# product-vector minimisation over 10^4 samples grows fast with n
_HEAVY = {"R9"}


def default_trials(suite_id: str, n: int) -> int:
    trials = DEFAULT_TRIALS[suite_id]
    if suite_id in _HEAVY and n >= 3:
        trials //= 4
    return trials


def run_trial(suite_id: str, n: int, seed: int, trial: int):
    """Run one trial; returns (failures, records) for that trial alone."""
    if suite_id not in SUITES:
        raise KeyError(f"unknown suite {suite_id!r}")
    fn, _, indexed = SUITES[suite_id]
    ts = trial_seed(suite_id, n, seed, trial)
    rng = np.random.default_rng(ts)
    try:
        problems, records = fn(rng, n, trial) if indexed else fn(rng, n)
    except Exception as exc:  # a crash is a failure, recorded with its seed
        problems, records = [(f"error: {type(exc).__name__}: {exc}", {})], {}
    failures = [{"seed": ts, "trial": trial, "description": desc, "inputs": inputs}
                for desc, inputs in problems]
    return failures, records


def run_suite(suite_id: str, n: int = 2, trials: int | None = None, seed: int = 0,
              workers: int = 1) -> SuiteReport:
    if suite_id not in SUITES:
        raise KeyError(f"unknown suite {suite_id!r}")
    if n not in (2, 3, 4):
        raise ValueError("n must be 2, 3 or 4")
    trials = default_trials(suite_id, n) if trials is None else int(trials)
    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda t: run_trial(suite_id, n, seed, t), range(trials)))
    else:
        results = [run_trial(suite_id, n, seed, t) for t in range(trials)]
    failures, records = [], {}
    for f, r in results:
        failures.extend(f)
        for k, v in r.items():
            records[k] = records.get(k, 0) + v
    report = SuiteReport(suite_id, n, trials, seed, SUITES[suite_id][1], failures,
                         dict(sorted(records.items())))
    report.elapsed = time.perf_counter() - start
    return report

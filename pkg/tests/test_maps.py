import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conekit.maps import (
    NotCompletelyPositiveError,
    QuantumMap,
    StateFunctional,
    ad_v,
    adjoint,
    apply,
    breuer_hall_map,
    choi_map,
    compose,
    from_kraus,
    functional_of_map,
    id_tensor,
    identity_map,
    kraus,
    map_from_action,
    map_of_functional,
    max_entangled,
    pi_contract,
    reduction_map,
    t_conjugate,
    trace_map,
    transpose_map,
)
from conekit.matcore import is_psd, matrix_unit, swap_operator
from conekit.states import werner

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.sampled_from([2, 3])


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def herm(rng, d):
    G = cplx(rng, d, d)
    return (G + G.conj().T) / 2


def random_map(rng, n):
    return QuantumMap(n, herm(rng, n * n))


def same_up_to_phase(A, B, atol=1e-10):
    k = np.argmax(np.abs(B))
    phase = A.flat[k] / B.flat[k]
    return abs(abs(phase) - 1) < atol and np.allclose(A, phase * B, atol=atol)


# ------------------------------------------------------------ construction


@pytest.mark.parametrize("n", [2, 3])
def test_identity_choi(n):
    C = sum(np.kron(matrix_unit(n, i, j), matrix_unit(n, i, j)) for i in range(n) for j in range(n))
    assert np.array_equal(map_from_action(n, lambda x: x).choi, C)
    assert np.allclose(identity_map(n).choi, C, atol=1e-15)


@pytest.mark.parametrize("n", [2, 3])
def test_transpose_choi_is_swap(n):
    assert np.array_equal(map_from_action(n, lambda x: x.T).choi, swap_operator(n))
    assert np.array_equal(transpose_map(n).choi, swap_operator(n))


@pytest.mark.parametrize("n", [2, 3])
def test_trace_map_choi(n):
    C = map_from_action(n, lambda x: np.trace(x) * np.eye(n) / n).choi
    assert np.allclose(C, np.eye(n * n) / n, atol=1e-15)
    assert np.allclose(trace_map(n).choi, C)


def test_non_hermitian_choi_rejected():
    with pytest.raises(ValueError):
        QuantumMap(2, np.triu(np.ones((4, 4))))
    with pytest.raises(ValueError):
        map_from_action(2, lambda x: 1j * x)


def test_nonlinear_action_rejected():
    with pytest.raises(ValueError):
        map_from_action(2, lambda x: x @ x.conj().T)


def test_choi_is_read_only():
    phi = identity_map(2)
    with pytest.raises(ValueError):
        phi.choi[0, 0] = 5


@settings(max_examples=50)
@given(seeds, dims)
def test_action_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    phi = random_map(rng, n)
    back = map_from_action(n, lambda x: apply(phi, x))
    assert np.max(np.abs(back.choi - phi.choi)) <= 1e-12


# ------------------------------------------------------------ apply and AdV


@given(seeds, dims)
def test_apply_examples(seed, n):
    rng = np.random.default_rng(seed)
    x, V = cplx(rng, n, n), cplx(rng, n, n)
    assert np.allclose(apply(identity_map(n), x), x, atol=1e-12)
    assert np.allclose(apply(transpose_map(n), x), x.T, atol=1e-12)
    assert np.allclose(apply(ad_v(V), x), V.conj().T @ x @ V, atol=1e-10)


def test_ad_identity_is_identity():
    assert ad_v(np.eye(3)).allclose(identity_map(3))


def test_ad_v_closed_form_blocks():
    rng = np.random.default_rng(5)
    n = 2
    V = cplx(rng, n, n)
    C = ad_v(V).choi
    for k in range(n):
        for l in range(n):
            block = C[k * n:(k + 1) * n, l * n:(l + 1) * n]
            expected = np.array([[np.conj(V[k, i]) * V[l, j] for j in range(n)] for i in range(n)])
            assert np.allclose(block, expected, atol=1e-14)


@given(seeds, dims)
def test_ad_v_rank_one_psd(seed, n):
    rng = np.random.default_rng(seed)
    C = ad_v(cplx(rng, n, n)).choi
    assert np.linalg.matrix_rank(C, tol=1e-9 * np.linalg.norm(C)) == 1
    assert is_psd(C).is_in


# ------------------------------------------------------------ adjoint and t-conjugation


@pytest.mark.parametrize("n", [2, 3])
def test_adjoint_of_ad_v(n):
    V = cplx(np.random.default_rng(n), n, n)
    assert adjoint(ad_v(V)).allclose(ad_v(V.conj().T))
    assert adjoint(identity_map(n)).allclose(identity_map(n))


def test_adjoint_pairing_n3():
    rng = np.random.default_rng(33)
    for _ in range(100):
        phi = random_map(rng, 3)
        a, b = cplx(rng, 3, 3), cplx(rng, 3, 3)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        assert abs(np.trace(apply(phi, a) @ b) - np.trace(a @ apply(adjoint(phi), b))) <= 1e-9


@given(seeds, dims)
def test_adjoint_and_t_are_commuting_involutions(seed, n):
    rng = np.random.default_rng(seed)
    phi = random_map(rng, n)
    assert adjoint(adjoint(phi)).allclose(phi, atol=1e-14)
    assert t_conjugate(t_conjugate(phi)).allclose(phi, atol=0)
    assert adjoint(t_conjugate(phi)).allclose(t_conjugate(adjoint(phi)), atol=1e-14)


@given(seeds, dims)
def test_t_conjugate_by_action(seed, n):
    rng = np.random.default_rng(seed)
    phi = random_map(rng, n)
    by_action = map_from_action(n, lambda x: apply(phi, x.T).T)
    assert t_conjugate(phi).allclose(by_action, atol=1e-12)
    assert np.max(np.abs(t_conjugate(phi).choi - phi.choi.T)) == 0


def test_t_conjugate_fixed_points():
    for n in (2, 3):
        assert t_conjugate(identity_map(n)).allclose(identity_map(n), atol=0)
        assert t_conjugate(transpose_map(n)).allclose(transpose_map(n), atol=0)


# ------------------------------------------------------------ composition


@given(seeds, dims)
def test_compose_by_action(seed, n):
    rng = np.random.default_rng(seed)
    alpha, beta = random_map(rng, n), random_map(rng, n)
    by_action = map_from_action(n, lambda x: apply(alpha, apply(beta, x)))
    assert compose(alpha, beta).allclose(by_action, atol=1e-10)
    assert compose(identity_map(n), alpha).allclose(alpha, atol=1e-12)
    assert compose(alpha, identity_map(n)).allclose(alpha, atol=1e-12)


@given(seeds, dims)
def test_compose_associative(seed, n):
    rng = np.random.default_rng(seed)
    a, b, c = (random_map(rng, n) for _ in range(3))
    lhs = compose(compose(a, b), c).choi
    rhs = compose(a, compose(b, c)).choi
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.linalg.norm(lhs))


@given(seeds, dims)
def test_compose_ad_v(seed, n):
    rng = np.random.default_rng(seed)
    V, W = cplx(rng, n, n), cplx(rng, n, n)
    assert compose(ad_v(V), ad_v(W)).allclose(ad_v(W @ V), atol=1e-9)


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        compose(identity_map(2), identity_map(3))


@given(seeds, dims)
def test_id_tensor_blockwise(seed, n):
    rng = np.random.default_rng(seed)
    alpha = random_map(rng, n)
    X = cplx(rng, n * n, n * n)
    Y = id_tensor(alpha, X)
    for i in range(n):
        for j in range(n):
            blk = X[i * n:(i + 1) * n, j * n:(j + 1) * n]
            assert np.allclose(Y[i * n:(i + 1) * n, j * n:(j + 1) * n], apply(alpha, blk), atol=1e-12)


# ------------------------------------------------------------ Kraus


def test_kraus_of_ad_v():
    V = cplx(np.random.default_rng(7), 3, 3)
    ops = kraus(ad_v(V))
    assert len(ops) == 1 and same_up_to_phase(ops[0], V)


def test_kraus_of_identity():
    ops = kraus(identity_map(3))
    assert len(ops) == 1 and same_up_to_phase(ops[0], np.eye(3))


def test_kraus_of_trace_map():
    ops = kraus(trace_map(2))
    assert len(ops) == 4
    assert np.allclose([np.linalg.norm(V) for V in ops], 1 / np.sqrt(2), atol=1e-12)
    assert from_kraus(ops).allclose(trace_map(2), atol=1e-12)


@settings(max_examples=50)
@given(seeds, dims)
def test_kraus_reconstructs(seed, n):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n * n + 1))
    phi = from_kraus([cplx(rng, n, n) for _ in range(k)])
    ops = kraus(phi)
    assert len(ops) <= n * n
    assert np.linalg.norm(from_kraus(ops).choi - phi.choi) <= 1e-8 * max(1.0, np.linalg.norm(phi.choi))


@settings(max_examples=50)
@given(seeds, dims)
def test_kraus_succeeds_iff_psd(seed, n):
    rng = np.random.default_rng(seed)
    phi = random_map(rng, n)
    psd = is_psd(phi.choi).is_in
    try:
        kraus(phi)
        ok = True
    except NotCompletelyPositiveError as exc:
        ok = False
        w = exc.witness.reshape(-1)
        assert np.vdot(w, phi.choi @ w).real < 0
    assert ok == psd


def test_kraus_rejects_transpose():
    with pytest.raises(NotCompletelyPositiveError) as info:
        kraus(transpose_map(2))
    assert info.value.margin == pytest.approx(-1.0)


# ------------------------------------------------------------ functionals


def test_functional_of_identity():
    assert np.allclose(functional_of_map(identity_map(3)).density, identity_map(3).choi)


def test_functional_evaluation_n3():
    rng = np.random.default_rng(12)
    for _ in range(100):
        phi = random_map(rng, 3)
        a, b = cplx(rng, 3, 3), cplx(rng, 3, 3)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        rho = functional_of_map(phi)
        assert abs(rho(np.kron(a, b)) - np.trace(apply(phi, a) @ b.T)) <= 1e-9


@given(seeds, dims)
def test_functional_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    rho = StateFunctional(n, herm(rng, n * n))
    assert np.array_equal(functional_of_map(map_of_functional(rho)).density, rho.density)


def test_trace_preserving_density_trace():
    rng = np.random.default_rng(3)
    n = 3
    # a channel: Kraus operators with sum V V* = I
    G = cplx(rng, 2 * n, n)
    Qm, _ = np.linalg.qr(G)
    ops = [Qm[:n].conj().T, Qm[n:].conj().T]
    phi = from_kraus(ops)
    assert np.allclose(apply(phi, np.eye(n) / n).trace(), 1)
    x = cplx(rng, n, n)
    assert np.isclose(np.trace(apply(phi, x)), np.trace(x))
    assert np.isclose(np.trace(functional_of_map(phi).density).real, n)


def test_maximally_mixed_functional():
    phi = map_of_functional(StateFunctional(2, np.eye(4) / 4, is_state=True))
    assert np.allclose(phi.choi, np.eye(4) / 4)


def test_werner_round_trip():
    rho = werner(1.0)
    phi = map_of_functional(rho)
    assert np.allclose(phi.choi, rho.density.T)
    assert np.allclose(functional_of_map(phi).density, rho.density)


def test_state_validation():
    with pytest.raises(ValueError):
        StateFunctional(2, np.eye(4), is_state=True)  # trace 4
    with pytest.raises(ValueError):
        StateFunctional(2, np.diag([1.5, -0.5, 0, 0]), is_state=True)


# ------------------------------------------------------------ pi contraction


@given(seeds, dims)
def test_pi_on_products(seed, n):
    rng = np.random.default_rng(seed)
    a, b = cplx(rng, n, n), cplx(rng, n, n)
    assert np.allclose(pi_contract(np.kron(a, b), n), b.T @ a, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_pi_of_identity_by_brute_force(n):
    X = np.eye(n * n)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out += X[i * n:(i + 1) * n, j * n:(j + 1) * n].T @ matrix_unit(n, i, j).real
    assert np.array_equal(pi_contract(X, n), out)
    assert np.array_equal(out, np.eye(n))


@settings(max_examples=100)
@given(seeds, dims)
def test_trace_pi_positive_on_psd(seed, n):
    rng = np.random.default_rng(seed)
    G = cplx(rng, n * n, int(rng.integers(1, n * n + 1)))
    X = G @ G.conj().T
    value = np.trace(pi_contract(X, n))
    # the functional is n <Omega| X |Omega>
    w = max_entangled(n)
    assert abs(value - n * np.vdot(w, X @ w)) <= 1e-9 * np.linalg.norm(X)
    assert value.real >= -1e-12


@given(seeds, dims)
def test_trace_pi_factorisation(seed, n):
    rng = np.random.default_rng(seed)
    phi = random_map(rng, n)
    a, b = cplx(rng, n, n), cplx(rng, n, n)
    lifted = id_tensor(t_conjugate(adjoint(phi)), np.kron(a, b))
    scale = max(1.0, np.linalg.norm(phi.choi)) * np.linalg.norm(a) * np.linalg.norm(b)
    assert abs(np.trace(pi_contract(lifted, n)) - np.trace(apply(phi, a) @ b.T)) <= 1e-9 * scale


# ------------------------------------------------------------ named positive maps


def test_reduction_map_action():
    rng = np.random.default_rng(1)
    x = cplx(rng, 3, 3)
    assert np.allclose(apply(reduction_map(3), x), np.trace(x) * np.eye(3) - x)


def test_choi_map_action_and_positivity_on_pure_states():
    rng = np.random.default_rng(2)
    phi = choi_map()
    for _ in range(200):
        v = cplx(rng, 3)
        y = apply(phi, np.outer(v, v.conj()))
        assert np.linalg.eigvalsh(y)[0] >= -1e-10
    assert is_psd(phi.choi).is_out


def test_breuer_hall():
    assert np.allclose(breuer_hall_map(2).choi, 0)
    phi = breuer_hall_map(4)
    rng = np.random.default_rng(4)
    for _ in range(200):
        v = cplx(rng, 4)
        assert np.linalg.eigvalsh(apply(phi, np.outer(v, v.conj())))[0] >= -1e-10
    with pytest.raises(ValueError):
        breuer_hall_map(3)


# ------------------------------------------------------------ JSON


@given(seeds, dims)
def test_map_json_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    phi = random_map(rng, n)
    back = QuantumMap.from_dict(json.loads(json.dumps(phi.to_dict())))
    assert back.n == n and np.array_equal(back.choi, phi.choi)


def test_state_json_round_trip():
    rho = werner(0.3)
    back = StateFunctional.from_dict(json.loads(json.dumps(rho.to_dict())))
    assert back.is_state and np.array_equal(back.density, rho.density)

from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import ENERGIES, FULL, LADDER, RHO0_DIAG, RHOF_DIAG, random_density, random_unitary
from qlyap import (
    ControlHamiltonian,
    ValidationError,
    construct_P_negative_target,
    construct_P_pure,
    energy,
)
from qlyap import analysis as an
from qlyap.system import all_pairs, pair_hamiltonian

RHOF_PRIME = [0.1416, 0.2758, 0.1976, 0.3850]


def pair_controls(n, pairs):
    return [ControlHamiltonian.from_pair(n, j, k) for j, k in pairs]


def distinct_diag(rng, n):
    while True:
        d = rng.dirichlet(np.ones(n))
        if np.min(np.diff(np.sort(d))) > 1e-3:
            return d


def fd_second_derivative(rho, P, B, h=1e-4):
    """Central difference of tr(P e^{sB} rho e^{-sB}) at s = 0."""
    def E(s):
        U = expm(s * B)
        return np.trace(P @ U @ rho @ U.conj().T).real

    return (E(h) - 2 * E(0.0) + E(-h)) / h**2


def test_enumeration_four_level(rho0, rhof):
    pts = an.enumerate_critical_points(rhof, construct_P_negative_target(rhof))
    assert len(pts) == 24
    diags = [tuple(np.round(np.diag(p.rho_s).real, 12)) for p in pts]
    assert len(set(diags)) == 24
    assert tuple(RHOF_DIAG) in diags and tuple(RHO0_DIAG) in diags
    assert pts[0].verdict == an.MINIMUM and np.array_equal(pts[0].rho_s, rhof)
    P = construct_P_negative_target(rhof).matrix
    for p in pts:
        assert np.max(np.abs(p.rho_s @ P - P @ p.rho_s)) == 0


def test_enumeration_two_level():
    pts = an.enumerate_critical_points(np.diag([0.7, 0.3]), -np.diag([0.7, 0.3]))
    assert [tuple(np.diag(p.rho_s).real) for p in pts] == [(0.7, 0.3), (0.3, 0.7)]


def test_enumeration_rejects_degenerate():
    with pytest.raises(ValidationError):
        an.enumerate_critical_points(np.eye(3) / 3, -np.diag([0.1, 0.2, 0.3]))
    with pytest.raises(ValidationError):
        an.enumerate_critical_points(np.diag([0.5, 0.3, 0.2]), np.eye(3))
    with pytest.raises(ValidationError):
        an.enumerate_critical_points(random_density(np.random.default_rng(0), 3), np.eye(3))


def test_second_derivative_diag_examples(rhof):
    assert an.second_derivative_diag(np.diag(RHO0_DIAG), rhof, {}) == 0
    assert an.second_derivative_diag(np.diag(RHO0_DIAG), rhof, {(0, 1): 0.0}) == 0
    u = {p: 1.0 for p in FULL}
    d = RHOF_DIAG
    oracle = sum((d[k] - d[j]) ** 2 for j, k in FULL)
    assert an.second_derivative_diag(rhof, rhof, u) == pytest.approx(oracle, abs=1e-15)


def test_blocked_ladder_terms():
    f = RHOF_PRIME
    s = [f[2], f[1], f[0], f[3]]  # swap of levels 1 and 3
    # hand evaluation, one term per ladder pair
    terms = {(0, 1): (0.2758 - 0.1976) * (0.2758 - 0.1416), (1, 2): (0.1416 - 0.2758) * (0.1976 - 0.2758), (2, 3): (0.3850 - 0.1416) * (0.3850 - 0.1976)}
    for (j, k), v in terms.items():
        assert v > 0
        assert an.second_derivative_diag(s, f, {(j, k): 1.0}) == pytest.approx(v, abs=1e-15)
    assert an.second_derivative_diag(s, f, {p: 1.0 for p in LADDER}) >= 0
    w = an.find_destabilizing_control(np.diag(s), np.diag(f), pair_controls(4, LADDER), 0.0, ENERGIES)
    assert w is None


def test_blocked_point_appears_in_analysis():
    f = np.diag(RHOF_PRIME)
    pts = an.analyze_critical_points(f, -f, pair_controls(4, LADDER), ENERGIES)
    blocked = [p.permutation for p in pts if p.verdict == an.BLOCKED]
    assert (2, 1, 0, 3) in blocked
    for p in pts:
        if p.verdict == an.UNSTABLE:
            assert p.edd_value < 0


def test_M_is_permutation_for_diagonal_target(rhof):
    M = an.build_M(rhof, pair_controls(4, FULL))
    assert M.shape == (6, 6)
    assert np.array_equal(np.abs(M) ** 2 @ np.ones(6), np.ones(6))
    assert np.array_equal(np.ones(6) @ np.abs(M) ** 2, np.ones(6))
    rows = an.pair_index(4)
    for q, pair in enumerate(FULL):
        assert M[rows.index(pair), q] == 1


def test_M_entries_against_direct_evaluation(rng):
    rhof = random_density(rng, 3)
    w, V = np.linalg.eigh(rhof)
    lam = np.array([0.2, 1.1, 2.7])
    t = 0.8
    ctrls = pair_controls(3, all_pairs(3))
    M = an.build_M(rhof, ctrls, t, lam)
    Vt = np.diag(np.exp(-1j * lam * t)) @ V
    rows = an.pair_index(3)
    for r, (j, k) in enumerate(rows):
        for q, c in enumerate(ctrls):
            assert M[r, q] == pytest.approx(Vt[:, j].conj() @ c.matrix @ Vt[:, k], abs=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_M_full_rank_random_eigenbasis(rng, n):
    for _ in range(10):
        U = random_unitary(rng, n)
        rhof = U @ np.diag(distinct_diag(rng, n)) @ U.conj().T
        M = an.build_M(rhof, pair_controls(n, all_pairs(n)), rng.uniform(0, 5), rng.uniform(0, 3, n))
        assert np.linalg.matrix_rank(M) == n * (n - 1) // 2


def test_M_ladder_shape(rhof):
    M = an.build_M(rhof, pair_controls(4, LADDER))
    assert M.shape == (6, 3)
    assert np.linalg.matrix_rank(M) <= 3


def test_K_examples():
    d = np.array(RHOF_DIAG)
    assert np.all(np.diag(an.build_K(d, d)) >= 0)
    s = d.copy()
    s[[0, 3]] = s[[3, 0]]
    K = np.diag(an.build_K(s, d))
    assert K[an.pair_index(4).index((0, 3))] < 0
    a, b = 0.8, 0.2
    assert np.array_equal(an.build_K([b, a], [a, b]), np.array([[-((a - b) ** 2)]]))
    with pytest.raises(ValidationError):
        an.build_K([0.5, 0.5], [0.7, 0.3])


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_K_has_negative_entry_off_target(seed, n):
    rng = np.random.default_rng(seed)
    d = distinct_diag(rng, n)
    perm = rng.permutation(n)
    if np.array_equal(perm, np.arange(n)):
        perm = np.roll(perm, 1)
    K = np.diag(an.build_K(d[perm], d))
    assert np.min(K) < 0
    f = np.zeros(K.size)
    f[np.argmin(K)] = 1
    assert f @ (K * f) < 0


def test_two_level_witness():
    a, b = 0.7, 0.3
    w = an.find_destabilizing_control(np.diag([b, a]), np.diag([a, b]), pair_controls(2, [(0, 1)]))
    assert np.array_equal(w.u, [1.0])
    assert w.edd == pytest.approx(-((a - b) ** 2), abs=1e-15)


def test_pair_sum_matches_quadratic_form(rng):
    ctrls = pair_controls(4, FULL)
    worst = 0.0
    for _ in range(200):
        d = distinct_diag(rng, 4)
        s = d[rng.permutation(4)]
        u = rng.normal(size=6)
        sm = an.stability_matrices(np.diag(s), np.diag(d), ctrls)
        q = an.quadratic_form(sm, u)
        pair_sum = an.second_derivative_diag(s, d, dict(zip(FULL, u)))
        worst = max(worst, abs(q - pair_sum))
    assert worst <= 1e-10


def test_direct_evaluation_is_true_second_derivative(rng):
    # ordered-pair sum equals tr([B, rho_s][P, B]) and a finite difference of E
    n = 3
    pairs = all_pairs(n)
    ctrls = pair_controls(n, pairs)
    lam = np.array([0.0, 0.9, 2.3])
    for _ in range(20):
        U = random_unitary(rng, n)
        d = distinct_diag(rng, n)
        rhof = U @ np.diag(d) @ U.conj().T
        rho_s = U @ np.diag(d[rng.permutation(n)]) @ U.conj().T
        u = rng.normal(size=len(pairs))
        t = rng.uniform(0, 4)
        B = sum(uq * (-1j * c.matrix * np.exp(1j * np.subtract.outer(lam, lam) * t)) for uq, c in zip(u, ctrls))
        direct = an.second_derivative_direct(rho_s, rhof, ctrls, u, t, lam)
        assert direct == pytest.approx(an.second_derivative(rho_s, -rhof, B), abs=1e-12)
        assert direct == pytest.approx(fd_second_derivative(rho_s, -rhof, B), abs=1e-6)
        sm = an.stability_matrices(rho_s, rhof, ctrls, t, lam)
        assert direct == pytest.approx(2 * an.quadratic_form(sm, u), abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_full_coverage_destabilizes_every_saddle(rng, n):
    d = distinct_diag(rng, n)
    rhof = np.diag(d)
    ctrls = pair_controls(n, all_pairs(n))
    lam = np.sort(rng.uniform(0, 4, n))
    pts = an.analyze_critical_points(rhof, -rhof, ctrls, lam)
    assert sum(p.verdict == an.UNSTABLE for p in pts) == len(pts) - 1
    for p in pts[1:]:
        assert an.second_derivative_direct(p.rho_s, rhof, ctrls, p.witness, p.witness_time, lam) < -1e-12
        assert np.linalg.norm(p.witness) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 4), st.data())
def test_missing_pair_blocks_swap(seed, n, data):
    rng = np.random.default_rng(seed)
    pairs = all_pairs(n)
    missing = data.draw(st.sampled_from(pairs))
    covered = [p for p in pairs if p != missing]
    l0, r0 = missing
    # two smallest entries at the uncovered pair, larger ones elsewhere, increasing
    d = np.sort(distinct_diag(rng, n))
    f = np.empty(n)
    f[[l0, r0]] = d[:2]
    f[[i for i in range(n) if i not in missing]] = d[2:]
    s = f.copy()
    s[[l0, r0]] = s[[r0, l0]]
    for j, k in covered:
        assert an.second_derivative_diag(s, f, {(j, k): 1.0}) >= 0
    assert an.find_destabilizing_control(np.diag(s), np.diag(f), pair_controls(n, covered)) is None


def test_witness_direction_lowers_energy(rho0, rhof, full_system):
    P = construct_P_negative_target(rhof).matrix
    w = an.find_destabilizing_control(rho0, rhof, full_system.controls, 0.0, ENERGIES)
    B = np.tensordot(w.u, full_system.frame_operators(w.t), axes=1)
    U = expm(0.05 * B)
    assert energy(P, U @ rho0 @ U.conj().T) < energy(P, rho0)


def test_pure_observable_scales_second_derivative(rng):
    n = 3
    psi = np.zeros(n, dtype=complex)
    psi[0] = 1
    rhof = np.outer(psi, psi.conj())
    p_l, p_h = -0.4, 1.3
    Ppure = construct_P_pure(psi, p_l, p_h).matrix
    for k in range(1, n):
        rho_s = np.zeros((n, n), dtype=complex)
        rho_s[k, k] = 1
        for _ in range(10):
            H = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            B = -1j * (H + H.conj().T)
            pure = an.second_derivative(rho_s, Ppure, B)
            neg = an.second_derivative(rho_s, -rhof, B)
            assert pure == pytest.approx((p_h - p_l) * neg, abs=1e-12)


def test_unequal_complement_eigenvalues_break_scaling():
    # with distinct values on the complement the extra terms do not cancel
    psi = np.array([1, 0, 0], dtype=complex)
    rhof = np.outer(psi, psi.conj())
    P = construct_P_pure(psi, 0.0, [1.0, 3.0]).matrix
    rho_s = np.diag([0, 1, 0]).astype(complex)
    B = -1j * (pair_hamiltonian(3, 1, 2) + pair_hamiltonian(3, 0, 1))
    assert an.second_derivative(rho_s, P, B) != pytest.approx(an.second_derivative(rho_s, -rhof, B), abs=1e-6)


def test_adjoint_rank_examples(rhof):
    assert an.lemma3_rank(construct_P_negative_target(rhof)) == (12, True)
    assert an.lemma3_rank(np.eye(4)) == (0, False)
    rank, ok = an.lemma3_rank(np.diag([0.1, 0.1, 0.5, 0.3]))
    assert not ok and rank == 10


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_adjoint_rank_distinct_diagonal_regular(seed, n):
    d = distinct_diag(np.random.default_rng(seed), n)
    assert an.lemma3_rank(-np.diag(d)) == (n * n - n, True)


def test_adjoint_matrix_against_commutator(rng):
    from qlyap import su_basis

    b = su_basis(3)
    P = random_density(rng, 3)
    A = an.adjoint_matrix(P, b)
    for l, X in enumerate(b):
        C = X @ P - P @ X
        rebuilt = sum(A[m, l] * (-1j * Y) for m, Y in enumerate(b))
        assert np.max(np.abs(rebuilt - C)) <= 1e-12


def test_invariant_set_residual(rho0, rhof, full_system, ladder_system):
    P = construct_P_negative_target(rhof)
    samples = [full_system.frame_operators(t) for t in np.linspace(0, 20, 11)]
    assert an.invariant_set_residual(rho0, P, samples) == 0
    assert an.commutator_offdiag_norm(rho0, P) == 0
    rng = np.random.default_rng(3)
    assert an.invariant_set_residual(random_density(rng, 4), P, samples) > 1e-3


def test_ladder_all_diagonal_points_unstable(rhof):
    pts = an.analyze_critical_points(rhof, -rhof, pair_controls(4, LADDER), ENERGIES)
    assert sum(p.verdict == an.UNSTABLE for p in pts) == 23


def test_permutation_label():
    assert an.permutation_label((3, 2, 1, 0)) == "(4,3,2,1)"
    assert len({an.permutation_label(p) for p in permutations(range(4))}) == 24

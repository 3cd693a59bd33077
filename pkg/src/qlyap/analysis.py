"""Invariant-set and critical-point analysis.

For a target ``rhof = sum_j c_j |psi_j><psi_j|`` and a critical state
``rho_s`` diagonal in the same eigenbasis, the second time derivative of
the energy along a control direction ``u`` is the quadratic form

    f^dagger K f = u^dagger M^dagger K M u,

with ``f = M u`` collecting the couplings ``<psi'_j| sum_q u_q H_q |psi'_k>``
between eigenvectors (``j < k``, lexicographic) and ``K`` the diagonal
matrix of products ``((D_s)_kk - (D_s)_jj)((D_f)_kk - (D_f)_jj)``.  The
sum over ordered pairs, i.e. the exact second derivative
``tr([B, rho_s][B, rhof])`` with ``B = sum_q u_q A_q(t)``, is twice this
value; only the sign matters for stability.

A critical point other than the target is escapable when some real
control vector makes the form negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .control import ObservableLike, _matrix, energy
from .errors import ValidationError
from .qla import SuBasis, as_hermitian, commutator, interaction_frame, su_basis
from .system import ControlHamiltonian

SAMPLE_TIMES = (0.0, 0.1, 0.5, 1.0)
NEG_TOL = 1e-12
DIAG_TOL = 1e-12
SPECTRUM_TOL = 1e-9

MINIMUM = "minimum_target"
UNSTABLE = "unstable_with_witness"
BLOCKED = "blocked"


@dataclass
class CriticalPoint:
    rho_s: np.ndarray
    permutation: tuple[int, ...]  # (rho_s)_jj = (rhof)_{perm[j]}, 0-based
    verdict: Optional[str] = None
    witness: Optional[np.ndarray] = None
    edd_value: Optional[float] = None
    energy: Optional[float] = None
    witness_time: Optional[float] = None


@dataclass
class StabilityMatrices:
    M: np.ndarray
    K: np.ndarray
    D_s: np.ndarray
    D_f: np.ndarray


class Witness(NamedTuple):
    u: np.ndarray
    edd: float
    t: float


def _as_matrices(controls) -> np.ndarray:
    mats = [c.matrix if isinstance(c, ControlHamiltonian) else as_hermitian(c, "control") for c in controls]
    if not mats:
        raise ValidationError("no control Hamiltonians given")
    return np.array(mats, dtype=complex)


def _diag_values(D) -> np.ndarray:
    a = np.asarray(D)
    if a.ndim == 2:
        off = a - np.diag(np.diag(a))
        if np.max(np.abs(off), initial=0.0) > DIAG_TOL * max(1.0, np.max(np.abs(a))):
            raise ValidationError("expected a diagonal matrix")
        a = np.diag(a)
    return np.real_if_close(a).astype(float)


def pair_index(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))


def is_diagonal(M, tol: float = DIAG_TOL) -> bool:
    a = np.asarray(M)
    off = a - np.diag(np.diag(a))
    return bool(np.max(np.abs(off), initial=0.0) <= tol)


def eigenbasis(rhof) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvectors (columns) and eigenvalues of `rhof`.

    Diagonal targets keep the level basis and level order so that rows of
    M line up with level pairs.
    """
    R = as_hermitian(rhof, "rhof")
    if is_diagonal(R):
        return np.eye(R.shape[0], dtype=complex), np.diag(R).real.copy()
    w, V = np.linalg.eigh(R)
    return V, w


def _common_diagonal(rho_s, Psi) -> np.ndarray:
    Ds = Psi.conj().T @ np.asarray(rho_s, dtype=complex) @ Psi
    if not is_diagonal(Ds, 1e-9):
        raise ValidationError("rho_s is not diagonal in the eigenbasis of rhof")
    return np.diag(Ds).real.copy()


def enumerate_critical_points(rhof, P: ObservableLike) -> list[CriticalPoint]:
    """All diagonal states with the spectrum of `rhof` that commute with `P`.

    Both `rhof` and `P` must be diagonal with distinct entries; the points
    are the n! permutations of the diagonal of `rhof`.  The identity
    permutation (the target) comes first.
    """
    R = as_hermitian(rhof, "rhof")
    Pm = as_hermitian(_matrix(P), "observable")
    if not (is_diagonal(R) and is_diagonal(Pm)):
        raise ValidationError("critical-point enumeration needs diagonal rhof and P")
    d = np.diag(R).real
    if np.min(np.diff(np.sort(d))) <= SPECTRUM_TOL:
        raise ValidationError("rhof has repeated diagonal entries; eigenspace blocks are not supported")
    p = np.diag(Pm).real
    if np.min(np.diff(np.sort(p))) <= SPECTRUM_TOL:
        raise ValidationError("P has repeated diagonal entries")
    points = []
    for perm in permutations(range(d.size)):
        rho_s = np.diag(d[list(perm)]).astype(complex)
        cp = CriticalPoint(rho_s=rho_s, permutation=tuple(perm), energy=energy(Pm, rho_s))
        if perm == tuple(range(d.size)):
            cp.verdict = MINIMUM
        points.append(cp)
    return points


def second_derivative_diag(rho_s, rhof, u: dict) -> float:
    """sum over pairs (l, r) of u_lr^2 ((rho_s)_rr - (rho_s)_ll)((rho_f)_rr - (rho_f)_ll).

    `u` maps 0-based level pairs to control amplitudes; `rho_s` and
    `rhof` are diagonal matrices or their diagonals.
    """
    s = _diag_values(rho_s)
    f = _diag_values(rhof)
    if s.shape != f.shape:
        raise ValidationError("rho_s and rhof differ in dimension")
    total = 0.0
    for (l, r), ulr in u.items():
        total += float(ulr) ** 2 * (s[r] - s[l]) * (f[r] - f[l])
    return total


def _rotated_basis(Psi, h0_diag, t):
    if h0_diag is None or t == 0:
        return Psi
    lam = np.asarray(h0_diag, dtype=float)
    if lam.size != Psi.shape[0]:
        raise ValidationError("h0_diag length does not match the state dimension")
    return np.exp(-1j * lam * t)[:, None] * Psi


def build_M(rhof, controls, t: float = 0.0, h0_diag=None) -> np.ndarray:
    """Coupling matrix with entries <psi'_j| H_q |psi'_k>.

    Rows run over eigenvector pairs j < k, columns over `controls`;
    ``psi'_k = exp(-i H0 t) psi_k``.
    """
    Psi, _ = eigenbasis(rhof)
    Hs = _as_matrices(controls)
    if Hs.shape[1] != Psi.shape[0]:
        raise ValidationError("control and state dimensions differ")
    Pt = _rotated_basis(Psi, h0_diag, t)
    # (q, a, b) = <psi'_a| H_q |psi'_b>
    G = np.einsum("ia,qij,jb->qab", Pt.conj(), Hs, Pt)
    rows = pair_index(Psi.shape[0])
    return np.array([[G[q, j, k] for q in range(Hs.shape[0])] for j, k in rows])


def build_K(D_s, D_f) -> np.ndarray:
    """Diagonal matrix of ((D_s)_kk - (D_s)_jj)((D_f)_kk - (D_f)_jj), j < k."""
    s = _diag_values(D_s)
    f = _diag_values(D_f)
    if s.shape != f.shape:
        raise ValidationError("D_s and D_f differ in dimension")
    if np.max(np.abs(np.sort(s) - np.sort(f))) > SPECTRUM_TOL:
        raise ValidationError("D_s and D_f must carry the same spectrum")
    return np.diag([(s[k] - s[j]) * (f[k] - f[j]) for j, k in pair_index(s.size)])


def stability_matrices(rho_s, rhof, controls, t: float = 0.0, h0_diag=None) -> StabilityMatrices:
    Psi, c = eigenbasis(rhof)
    Ds = _common_diagonal(rho_s, Psi)
    return StabilityMatrices(
        M=build_M(rhof, controls, t, h0_diag),
        K=build_K(Ds, c),
        D_s=np.diag(Ds),
        D_f=np.diag(c),
    )


def quadratic_form(sm: StabilityMatrices, u) -> float:
    u = np.asarray(u, dtype=complex)
    f = sm.M @ u
    return float(np.real(np.vdot(f, np.diag(sm.K) * f)))


def second_derivative(rho_s, P: ObservableLike, B) -> float:
    """tr([B, rho_s][P, B]): second derivative of E at a critical state for the direction B."""
    B = np.asarray(B)
    val = np.trace(commutator(B, np.asarray(rho_s)) @ commutator(_matrix(P), B))
    return float(val.real)


def second_derivative_direct(rho_s, rhof, controls, u, t: float = 0.0, h0_diag=None) -> float:
    """Ordered-pair sum of |f_jk|^2 ((D_s)_kk - (D_s)_jj)((D_f)_kk - (D_f)_jj).

    ``f`` is obtained by rotating ``sum_q u_q H_q`` into the interaction
    frame and then into the eigenbasis of `rhof`, without going through
    M or K.  Equals twice :func:`quadratic_form`.
    """
    Psi, c = eigenbasis(rhof)
    Ds = _common_diagonal(rho_s, Psi)
    Hs = _as_matrices(controls)
    n = Psi.shape[0]
    lam = np.zeros(n) if h0_diag is None else np.asarray(h0_diag, dtype=float)
    B = sum(float(uq) * interaction_frame(lam, Hq, t) for uq, Hq in zip(np.asarray(u, dtype=float), Hs))
    F = Psi.conj().T @ (1j * B) @ Psi
    ds = Ds[None, :] - Ds[:, None]  # (D_s)_kk - (D_s)_jj at [j, k]
    df = c[None, :] - c[:, None]
    return float(np.sum(np.abs(F) ** 2 * ds * df))


def _canonical_sign(u):
    i = int(np.argmax(np.abs(u)))
    return u if u[i] >= 0 else -u


def _witness_at(sm: StabilityMatrices):
    """Real direction with negative quadratic form, or None.

    The complex eigenvector z of the most negative eigenvalue of
    M^dagger K M is tried first through its real and imaginary parts.
    These need not be negative on their own because the antisymmetric
    imaginary part of M^dagger K M couples them, so the exact real
    symmetric form Re(M^dagger K M) is diagonalized as a fallback.
    """
    H = sm.M.conj().T @ sm.K @ sm.M
    H = 0.5 * (H + H.conj().T)
    R = H.real
    w, Z = np.linalg.eigh(H)
    if w[0] < -NEG_TOL:
        z = Z[:, 0]
        best = None
        for part in (z.real, z.imag):
            nrm = np.linalg.norm(part)
            if nrm < 1e-12:
                continue
            v = part / nrm
            val = float(v @ R @ v)
            if val < -NEG_TOL and (best is None or val < best[1]):
                best = (v, val)
        if best is not None:
            return best
    wr, V = np.linalg.eigh(R)
    if wr[0] < -NEG_TOL:
        v = V[:, 0]
        return v, float(v @ R @ v)
    return None


def find_destabilizing_control(
    rho_s,
    rhof,
    controls,
    t: float = 0.0,
    h0_diag=None,
    sample_times: Sequence[float] = SAMPLE_TIMES,
) -> Optional[Witness]:
    """Unit real control vector that makes the second derivative negative at `rho_s`.

    The search runs at `t` first and then at `sample_times`; a candidate
    is accepted only if the independent ordered-pair evaluation
    (:func:`second_derivative_direct`) is also negative.  Returns None
    when the point is blocked at every sampled time.
    """
    tried = []
    for tt in (t, *sample_times):
        if any(abs(tt - s) < 1e-15 for s in tried):
            continue
        tried.append(tt)
        sm = stability_matrices(rho_s, rhof, controls, tt, h0_diag)
        found = _witness_at(sm)
        if found is None:
            continue
        u = _canonical_sign(found[0])
        edd = quadratic_form(sm, u)
        if edd < -NEG_TOL and second_derivative_direct(rho_s, rhof, controls, u, tt, h0_diag) < -NEG_TOL:
            return Witness(u, edd, float(tt))
    return None


def analyze_critical_points(
    rhof,
    P: ObservableLike,
    controls,
    h0_diag=None,
    t: float = 0.0,
    sample_times: Sequence[float] = SAMPLE_TIMES,
) -> list[CriticalPoint]:
    """Enumerate the critical points of a diagonal target and classify each."""
    points = enumerate_critical_points(rhof, P)
    for cp in points:
        if cp.verdict == MINIMUM:
            continue
        w = find_destabilizing_control(cp.rho_s, rhof, controls, t, h0_diag, sample_times)
        if w is None:
            cp.verdict = BLOCKED
        else:
            cp.verdict = UNSTABLE
            cp.witness = w.u
            cp.edd_value = w.edd
            cp.witness_time = w.t
    return points


def invariant_set_residual(rho, P: ObservableLike, A_samples) -> float:
    """max |tr([rho, P] A_j(t))| over the supplied frame operators.

    `A_samples` is an iterable of (m, n, n) stacks, one per sampled time.
    """
    C = commutator(np.asarray(rho), _matrix(P))
    worst = 0.0
    for A in A_samples:
        worst = max(worst, float(np.max(np.abs(np.einsum("ab,jba->j", C, np.asarray(A))))))
    return worst


def commutator_offdiag_norm(rho, P: ObservableLike) -> float:
    C = commutator(np.asarray(rho), _matrix(P))
    return float(np.max(np.abs(C - np.diag(np.diag(C))), initial=0.0))


def adjoint_matrix(P: ObservableLike, basis: SuBasis | None = None) -> np.ndarray:
    """Real matrix of X -> [X, P] in su(n) coordinates.

    Column l holds the coefficients of [X_l, P] on the anti-Hermitian
    basis {-i X_m}, i.e. ``tr(i [X_l, P] X_m)``.
    """
    Pm = as_hermitian(_matrix(P), "observable")
    basis = basis or su_basis(Pm.shape[0])
    X = basis.generators
    C = np.einsum("lab,bc->lac", X, Pm) - np.einsum("ab,lbc->lac", Pm, X)
    A = np.einsum("lab,mba->ml", 1j * C, X)
    return A.real


def lemma3_rank(P: ObservableLike, basis: SuBasis | None = None, tol: float = 1e-10) -> tuple[int, bool]:
    """Rank of the non-Cartan rows of the adjoint matrix of P.

    The invariant set reduces to states commuting with P when this rank
    equals n^2 - n.
    """
    Pm = as_hermitian(_matrix(P), "observable")
    basis = basis or su_basis(Pm.shape[0])
    A = adjoint_matrix(Pm, basis)[: basis.n_offdiag]
    scale = max(1.0, float(np.max(np.abs(Pm))))
    rank = int(np.linalg.matrix_rank(A, tol=tol * scale)) if A.size else 0
    return rank, rank == basis.n_offdiag


def permutation_label(perm: Sequence[int]) -> str:
    """1-based image list, e.g. ``(4,3,2,1)``."""
    return "(" + ",".join(str(p + 1) for p in perm) + ")"

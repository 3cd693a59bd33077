"""Observable construction, the energy function and the feedback law.

The energy is E(rho) = tr(P rho).  Along the interaction-picture flow
d rho/dt = [sum_j u_j A_j(t), rho] it changes at the rate
sum_j u_j tr([rho, P] A_j), so the feedback
u_j = -kappa_j tr([rho, P] A_j) makes E non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import InvariantError, ValidationError
from .qla import (
    SuBasis,
    as_density_matrix,
    as_hermitian,
    coherent_vector,
    commutator,
    su_basis,
)

IMAG_ABORT = 1e-9


@dataclass(frozen=True)
class Observable:
    """Hermitian operator P defining the energy function.

    `construction` is one of ``"negative_target"``, ``"coherent_scaled"``,
    ``"pure_spectrum"`` or ``"explicit"``; `params` records the values
    used to build it.
    """

    matrix: np.ndarray
    construction: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_hermitian(self.matrix, "observable"))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


ObservableLike = Union[Observable, np.ndarray]


def _matrix(P: ObservableLike) -> np.ndarray:
    return P.matrix if isinstance(P, Observable) else np.asarray(P, dtype=complex)


def construct_P_negative_target(rhof) -> Observable:
    R = as_density_matrix(rhof, "rhof")
    return Observable(-R, "negative_target")


def construct_P_coherent(rhof, lam: float, c0: float, basis: SuBasis | None = None) -> Observable:
    """P = c0 I + lam * sum_j f_j X_j, where f is the coherent vector of rhof.

    `lam` must be negative so the coherent vectors of P and rhof point in
    opposite directions.  ``lam = -1, c0 = -1/n`` gives P = -rhof.
    """
    if not lam < 0:
        raise ValidationError(f"lambda must be negative, got {lam}")
    R = as_density_matrix(rhof, "rhof")
    n = R.shape[0]
    basis = basis or su_basis(n)
    if basis.n != n:
        raise ValidationError(f"basis dimension {basis.n} does not match rhof dimension {n}")
    f = coherent_vector(R, basis)
    P = c0 * np.eye(n, dtype=complex) + lam * np.einsum("l,lab->ab", f, basis.generators)
    return Observable(P, "coherent_scaled", {"lambda": float(lam), "c0": float(c0)})


def complete_basis(psi) -> np.ndarray:
    """Orthonormal basis (columns) whose first column is `psi`.

    The remaining columns come from Gram-Schmidt on the standard basis.
    """
    v = np.asarray(psi, dtype=complex).reshape(-1)
    n = v.size
    cols = [v]
    for e in np.eye(n, dtype=complex):
        w = e.copy()
        for c in cols:
            w = w - c * np.vdot(c, w)
        # second pass keeps orthogonality at round-off level
        for c in cols:
            w = w - c * np.vdot(c, w)
        nw = np.linalg.norm(w)
        if nw > 1e-8:
            cols.append(w / nw)
        if len(cols) == n:
            break
    return np.array(cols).T


def construct_P_pure(psi_f, p_l: float, p_h: Union[float, Sequence[float]]) -> Observable:
    """P = p_l |psi_f><psi_f| + sum_h p_h |psi_h><psi_h| over a completed basis.

    `p_h` is either one value shared by all complementary directions or
    a sequence of n - 1 values, each strictly larger than `p_l`.
    """
    v = np.asarray(psi_f, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValidationError(f"target vector must have unit norm, got {np.linalg.norm(v):.15g}")
    n = v.size
    ph = np.full(n - 1, float(p_h)) if np.isscalar(p_h) else np.asarray(p_h, dtype=float).reshape(-1)
    if ph.size != n - 1:
        raise ValidationError(f"need {n - 1} values of p_h, got {ph.size}")
    if not np.all(p_l < ph):
        raise ValidationError(f"p_l must be smaller than every p_h (p_l = {p_l}, p_h = {ph.tolist()})")
    Q = complete_basis(v)
    spectrum = np.concatenate([[p_l], ph])
    P = (Q * spectrum) @ Q.conj().T
    P = 0.5 * (P + P.conj().T)
    params = {"p_l": float(p_l), "p_h": ph.tolist()}
    return Observable(P, "pure_spectrum", params)


def verify_minimum(P: ObservableLike, rhof, angle_tol: float = 1e-9) -> bool:
    """True if the coherent vector of P is a negative multiple of that of rhof."""
    Pm = as_hermitian(_matrix(P), "observable")
    R = as_density_matrix(rhof, "rhof")
    if Pm.shape != R.shape:
        return False
    basis = su_basis(R.shape[0])
    a = coherent_vector(Pm, basis)
    b = coherent_vector(R, basis)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if nb < 1e-14:
        # maximally mixed target: only P proportional to I keeps it a minimum
        return bool(na < 1e-14)
    if na < 1e-14:
        return False
    # chord between unit vectors ~ angle for small angles
    return bool(np.linalg.norm(a / na + b / nb) <= angle_tol)


def energy(P: ObservableLike, rho) -> float:
    """E(rho) = tr(P rho)."""
    Pm = _matrix(P)
    R = np.asarray(rho)
    if Pm.shape != R.shape:
        raise ValidationError(f"observable {Pm.shape} and state {R.shape} differ in shape")
    val = np.einsum("ab,ba->", Pm, R)
    if abs(val.imag) > IMAG_ABORT:
        raise InvariantError(f"energy has imaginary part {val.imag:.3e}")
    return float(val.real)


def _gradient_traces(rho, P: ObservableLike, A) -> np.ndarray:
    """tr([rho, P] A_j) for each j, real part checked."""
    C = commutator(np.asarray(rho), _matrix(P))
    A = np.asarray(A)
    if A.ndim == 2:
        A = A[None]
    tr = np.einsum("ab,jba->j", C, A)
    if tr.size and np.max(np.abs(tr.imag)) > IMAG_ABORT:
        raise InvariantError(
            f"tr([rho, P] A_j) has imaginary residue {np.max(np.abs(tr.imag)):.3e}; "
            "rho or P is not Hermitian or A_j is not anti-Hermitian"
        )
    return tr.real


def control_law(rho, P: ObservableLike, A, kappas) -> np.ndarray:
    """u_j = -kappa_j tr([rho, P] A_j(t)).

    Parameters
    ----------
    rho : (n, n) array
        Current (interaction-picture) state.
    P : Observable or (n, n) array
    A : (m, n, n) array
        Interaction-frame control operators at the current time.
    kappas : (m,) array or float
        Positive gains.
    """
    g = _gradient_traces(rho, P, A)
    k = np.broadcast_to(np.asarray(kappas, dtype=float), g.shape)
    if not np.all(k > 0):
        raise ValidationError("gains must be strictly positive")
    return -k * g


def energy_rate(rho, P: ObservableLike, u, A) -> float:
    """dE/dt = sum_j u_j tr([rho, P] A_j)."""
    g = _gradient_traces(rho, P, A)
    return float(np.dot(np.asarray(u, dtype=float), g))

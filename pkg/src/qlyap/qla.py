"""Complex linear algebra for finite-level quantum systems.

Matrices are plain ``numpy`` arrays.  The helpers here validate them
(Hermiticity, density-matrix conditions), build the orthonormal
generalized Gell-Mann basis of su(n), map Hermitian matrices to their
coherent (Bloch) vectors and rotate operators into the interaction frame
of a diagonal drift Hamiltonian.  Units are hbar = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ValidationError

TOL_HERM = 1e-12
TOL_TRACE = 1e-10
TOL_PSD = 1e-9
TOL_RECON = 1e-10


def as_square(M, name: str = "matrix") -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    return A


def hermiticity_residue(M) -> float:
    A = np.asarray(M)
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def as_hermitian(M, name: str = "matrix", tol: float = TOL_HERM) -> np.ndarray:
    """Return `M` as a complex array, raising if it is not Hermitian.

    The residue is measured relative to ``max(1, max|M|)`` so that large
    but Hermitian inputs are not rejected for rounding.
    """
    A = as_square(M, name)
    scale = max(1.0, float(np.max(np.abs(A))))
    res = hermiticity_residue(A)
    if res > tol * scale:
        raise ValidationError(f"{name} is not Hermitian (residue {res:.3e})")
    return A


def as_density_matrix(rho, name: str = "rho") -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, PSD within slack."""
    R = as_hermitian(rho, name)
    tr = np.trace(R)
    if abs(tr - 1.0) > TOL_TRACE:
        raise ValidationError(f"{name} must have unit trace, got {tr.real:.12g}")
    w_min = float(np.linalg.eigvalsh(0.5 * (R + R.conj().T))[0])
    if w_min < -TOL_PSD:
        raise ValidationError(f"{name} is not positive semidefinite (min eigenvalue {w_min:.3e})")
    return R


def pure_state(psi) -> np.ndarray:
    """Projector |psi><psi| for a unit vector `psi`."""
    v = np.asarray(psi, dtype=complex).reshape(-1)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-12:
        raise ValidationError(f"state vector must have unit norm, got {norm:.15g}")
    return np.outer(v, v.conj())


def commutator(A, B) -> np.ndarray:
    """Return ``AB - BA``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValidationError(f"commutator needs equal square shapes, got {A.shape} and {B.shape}")
    return A @ B - B @ A


@dataclass(frozen=True)
class SuBasis:
    """Orthonormal Hermitian generators X_l with tr(X_l X_j) = delta_lj.

    Order: for each pair j < k in lexicographic order the symmetric and
    then the antisymmetric generator (n^2 - n off-diagonal generators),
    followed by the n - 1 diagonal (Cartan) generators.
    """

    n: int
    generators: np.ndarray  # shape (n^2 - 1, n, n)

    def __len__(self) -> int:
        return self.generators.shape[0]

    def __iter__(self):
        return iter(self.generators)

    def __getitem__(self, idx):
        return self.generators[idx]

    @property
    def n_offdiag(self) -> int:
        return self.n * self.n - self.n

    def labels(self) -> list[str]:
        out = []
        for j, k in combinations(range(1, self.n + 1), 2):
            out += [f"S{j}{k}", f"A{j}{k}"]
        out += [f"D{d}" for d in range(1, self.n)]
        return out


def su_basis(n: int) -> SuBasis:
    """Generalized Gell-Mann basis of su(n), normalized to tr(X^2) = 1."""
    if int(n) != n or n < 2:
        raise ValidationError(f"su(n) basis needs integer n >= 2, got {n}")
    n = int(n)
    gens = []
    s = 1.0 / np.sqrt(2.0)
    for j, k in combinations(range(n), 2):
        sym = np.zeros((n, n), dtype=complex)
        sym[j, k] = sym[k, j] = s
        anti = np.zeros((n, n), dtype=complex)
        anti[j, k] = -1j * s
        anti[k, j] = 1j * s
        gens += [sym, anti]
    for d in range(1, n):
        diag = np.zeros(n)
        diag[:d] = 1.0
        diag[d] = -d
        gens.append(np.diag(diag / np.sqrt(d * (d + 1))).astype(complex))
    return SuBasis(n=n, generators=np.array(gens))


def coherent_vector(M, basis: SuBasis) -> np.ndarray:
    """Real components x_l = tr(M X_l) of a Hermitian matrix."""
    A = as_hermitian(M, "coherent_vector input")
    if A.shape[0] != basis.n:
        raise ValidationError(f"dimension {A.shape[0]} does not match basis dimension {basis.n}")
    # tr(M X) = sum_ab M_ab X_ba
    x = np.einsum("ab,lba->l", A, basis.generators)
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(x.imag), initial=0.0) > 1e-12 * scale * basis.n:
        raise ValidationError("coherent vector has a non-negligible imaginary part")
    return x.real.copy()


def from_coherent_vector(x, basis: SuBasis, trace: float = 1.0) -> np.ndarray:
    """Inverse of :func:`coherent_vector`: ``trace/n * I + sum_l x_l X_l``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(basis),):
        raise ValidationError(f"coherent vector must have length {len(basis)}, got {x.shape}")
    return trace / basis.n * np.eye(basis.n, dtype=complex) + np.einsum("l,lab->ab", x, basis.generators)


def transition_phases(h0_diag, t: float) -> np.ndarray:
    """Matrix of e^{i (lambda_j - lambda_k) t}."""
    lam = np.asarray(h0_diag, dtype=float)
    return np.exp(1j * np.subtract.outer(lam, lam) * t)


def interaction_frame(h0_diag, H, t: float) -> np.ndarray:
    """Control operator in the interaction picture, e^{iH0 t} H e^{-iH0 t} / i.

    `H0` is diagonal with entries `h0_diag`, so the rotation is an
    elementwise phase.  The result is anti-Hermitian.
    """
    lam = np.asarray(h0_diag, dtype=float).reshape(-1)
    Hm = as_square(H, "control Hamiltonian")
    if lam.shape[0] != Hm.shape[0]:
        raise ValidationError(f"H0 has {lam.shape[0]} levels but H is {Hm.shape[0]}x{Hm.shape[0]}")
    return -1j * Hm * transition_phases(lam, t)


def unitary_from_generator(B, dt: float) -> np.ndarray:
    """exp(dt * B) for anti-Hermitian `B`, via the spectrum of the Hermitian iB."""
    Hm = 1j * np.asarray(B)
    Hm = 0.5 * (Hm + Hm.conj().T)
    w, V = np.linalg.eigh(Hm)
    return (V * np.exp(-1j * dt * w)) @ V.conj().T

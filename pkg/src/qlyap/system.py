"""Controlled-system model and static convergence checks.

Level indices are 0-based in the Python API and 1-based in reports
(``ConditionReport.to_dict``) and configuration files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .qla import as_density_matrix, as_hermitian, transition_phases

Pair = tuple[int, int]

REGULARITY_TOL = 1e-9
EQUIVALENCE_TOL = 1e-9


def pair_hamiltonian(n: int, j: int, k: int) -> np.ndarray:
    """h_jk = |j><k| + |k><j| (0-based levels)."""
    if not (0 <= j < n and 0 <= k < n) or j == k:
        raise ValidationError(f"invalid level pair ({j}, {k}) for n = {n}")
    h = np.zeros((n, n), dtype=complex)
    h[j, k] = h[k, j] = 1.0
    return h


def classify_control(H) -> Optional[Pair]:
    """Return (j, k), j < k, if `H` is exactly h_jk, else None."""
    Hm = as_hermitian(H, "control Hamiltonian")
    nz = np.argwhere(Hm != 0)
    if len(nz) != 2:
        return None
    (a, b), (c, d) = nz
    if a == b or (a, b) != (d, c):
        return None
    if Hm[a, b] != 1 or Hm[b, a] != 1:
        return None
    return (int(min(a, b)), int(max(a, b)))


@dataclass(frozen=True)
class ControlHamiltonian:
    matrix: np.ndarray
    pair: Optional[Pair] = None

    def __post_init__(self):
        m = as_hermitian(self.matrix, "control Hamiltonian")
        object.__setattr__(self, "matrix", m)
        if self.pair is not None:
            j, k = self.pair
            if not j < k:
                raise ValidationError(f"control pair must satisfy j < k, got {self.pair}")
            if not np.array_equal(m, pair_hamiltonian(m.shape[0], j, k)):
                raise ValidationError(f"matrix is not h_{{{j + 1}{k + 1}}}")
            object.__setattr__(self, "pair", (int(j), int(k)))

    @classmethod
    def from_pair(cls, n: int, j: int, k: int) -> "ControlHamiltonian":
        j, k = min(j, k), max(j, k)
        return cls(pair_hamiltonian(n, j, k), (j, k))

    @classmethod
    def from_matrix(cls, H) -> "ControlHamiltonian":
        """Wrap an explicit matrix, tagging it with its pair when it has the h_jk form."""
        return cls(np.asarray(H, dtype=complex), classify_control(H))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class QuantumSystem:
    """H(t) = diag(h0_diag) + sum_j u_j(t) H_j with feedback gains kappa_j."""

    h0_diag: np.ndarray
    controls: tuple[ControlHamiltonian, ...]
    gains: np.ndarray

    def __post_init__(self):
        h0 = np.asarray(self.h0_diag, dtype=float).reshape(-1)
        if h0.size < 2 or not np.all(np.isfinite(h0)):
            raise ValidationError("h0_diag needs at least two finite energies")
        controls = tuple(
            c if isinstance(c, ControlHamiltonian) else ControlHamiltonian.from_matrix(c)
            for c in self.controls
        )
        if not controls:
            raise ValidationError("at least one control Hamiltonian is required")
        for i, c in enumerate(controls):
            if c.n != h0.size:
                raise ValidationError(f"control {i + 1} is {c.n}x{c.n}, expected {h0.size}x{h0.size}")
        gains = np.asarray(self.gains, dtype=float).reshape(-1)
        if gains.size == 1 and len(controls) > 1:
            gains = np.full(len(controls), gains[0])
        if gains.size != len(controls):
            raise ValidationError(f"{gains.size} gains given for {len(controls)} controls")
        if not np.all(gains > 0):
            raise ValidationError("all gains must be strictly positive")
        object.__setattr__(self, "h0_diag", h0)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "_stack", np.array([c.matrix for c in controls]))

    @classmethod
    def from_pairs(cls, h0_diag, pairs: Sequence[Pair], gains) -> "QuantumSystem":
        n = len(h0_diag)
        return cls(h0_diag, tuple(ControlHamiltonian.from_pair(n, j, k) for j, k in pairs), gains)

    @property
    def n(self) -> int:
        return self.h0_diag.size

    @property
    def m(self) -> int:
        return len(self.controls)

    @property
    def control_matrices(self) -> np.ndarray:
        return self._stack.copy()

    def frame_operators(self, t: float) -> np.ndarray:
        """Interaction-picture operators A_j(t), stacked along axis 0.

        Same values as :func:`qlyap.qla.interaction_frame` per control,
        computed in one broadcast.
        """
        return -1j * self._stack * transition_phases(self.h0_diag, t)[None]


def transition_table(h0_diag) -> dict[Pair, float]:
    """Delta_jk = lambda_j - lambda_k for every j > k (0-based keys)."""
    lam = np.asarray(h0_diag, dtype=float)
    return {(j, k): float(lam[j] - lam[k]) for k, j in combinations(range(lam.size), 2)}


def check_strong_regularity(h0_diag, tol: float = REGULARITY_TOL):
    """Check that all transition frequencies are pairwise distinct.

    Frequencies are compared in absolute value so the verdict does not
    depend on how the levels are labelled.

    Returns
    -------
    (bool, list)
        The verdict and the clashing transitions as
        ``((j, k), (p, q))`` tuples with 1-based levels, j > k, p > q.
    """
    lam = np.asarray(h0_diag, dtype=float).reshape(-1)
    if lam.size < 2:
        raise ValidationError("strong regularity needs at least two levels")
    if not tol > 0:
        raise ValidationError("tolerance must be positive")
    items = sorted(transition_table(lam).items(), key=lambda kv: (kv[0][1], kv[0][0]))
    clashes = []
    for (a, da), (b, db) in combinations(items, 2):
        if abs(abs(da) - abs(db)) <= tol:
            clashes.append(((a[0] + 1, a[1] + 1), (b[0] + 1, b[1] + 1)))
    return not clashes, clashes


def all_pairs(n: int) -> list[Pair]:
    return list(combinations(range(n), 2))


class Theorem2Result(NamedTuple):
    satisfied: bool
    structure_ok: bool
    missing_pairs: list[Pair]  # 0-based, j < k


def check_theorem2(system: QuantumSystem) -> Theorem2Result:
    """Every transition pair must be driven by its own h_jk control.

    A control that is not of h_jk form is still usable in simulation but
    voids the guarantee, so ``satisfied`` is then False even if every
    pair happens to be covered by the remaining controls.
    """
    covered = {c.pair for c in system.controls if c.pair is not None}
    structure_ok = all(c.pair is not None for c in system.controls)
    missing = [p for p in all_pairs(system.n) if p not in covered]
    return Theorem2Result(structure_ok and not missing, structure_ok, missing)


def check_unitary_equivalence(rho0, rhof, tol: float = EQUIVALENCE_TOL) -> bool:
    """Hermitian matrices are unitarily equivalent iff their spectra agree."""
    a = as_density_matrix(rho0, "rho0")
    b = as_density_matrix(rhof, "rhof")
    if a.shape != b.shape:
        return False
    wa = np.linalg.eigvalsh(a)
    wb = np.linalg.eigvalsh(b)
    return bool(np.max(np.abs(wa - wb)) <= tol)


@dataclass
class ConditionReport:
    strongly_regular: bool
    structure_ok: bool
    unitarily_equivalent: bool
    theorem2_satisfied: bool
    missing_pairs: list[Pair] = field(default_factory=list)  # 0-based
    degenerate_transitions: list = field(default_factory=list)  # 1-based, as reported

    @property
    def all_ok(self) -> bool:
        return self.strongly_regular and self.structure_ok and self.unitarily_equivalent and self.theorem2_satisfied

    def to_dict(self) -> dict:
        return {
            "strongly_regular": self.strongly_regular,
            "structure_ok": self.structure_ok,
            "unitarily_equivalent": self.unitarily_equivalent,
            "theorem2_satisfied": self.theorem2_satisfied,
            "missing_pairs": [[j + 1, k + 1] for j, k in self.missing_pairs],
            "degenerate_transitions": [[list(a), list(b)] for a, b in self.degenerate_transitions],
        }


def check_conditions(
    system: QuantumSystem,
    rho0,
    rhof,
    regularity_tol: float = REGULARITY_TOL,
    equivalence_tol: float = EQUIVALENCE_TOL,
) -> ConditionReport:
    regular, clashes = check_strong_regularity(system.h0_diag, regularity_tol)
    t2 = check_theorem2(system)
    return ConditionReport(
        strongly_regular=regular,
        structure_ok=t2.structure_ok,
        unitarily_equivalent=check_unitary_equivalence(rho0, rhof, equivalence_tol),
        theorem2_satisfied=t2.satisfied,
        missing_pairs=t2.missing_pairs,
        degenerate_transitions=clashes,
    )

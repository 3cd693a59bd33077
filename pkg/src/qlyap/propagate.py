"""Closed-loop time integration in the interaction picture.

Each step is an exponential midpoint update ``rho -> G rho G^dagger`` with
``G = exp(dt * sum_j u_j A_j(t + dt/2))``.  The feedback ``u`` is
evaluated on a half-step predictor state, which makes the scheme second
order while keeping the evolution exactly isospectral.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .control import ObservableLike, _matrix, control_law, energy
from .errors import IntegrationError, ValidationError
from .qla import as_density_matrix, hermiticity_residue, unitary_from_generator
from .system import QuantumSystem

log = logging.getLogger(__name__)

KICK_MODES = ("none", "constant_pulse", "destabilizing_direction")


@dataclass(frozen=True)
class KickPolicy:
    """Open-loop override applied for ``0 <= t < duration``.

    The feedback law vanishes on every state that commutes with P, so a
    run started at such a state (e.g. a diagonal state with diagonal P)
    never moves without an initial push.
    """

    mode: str = "constant_pulse"
    amplitude: float = 0.01
    duration: float = 1.0

    def __post_init__(self):
        if self.mode not in KICK_MODES:
            raise ValidationError(f"unknown kick mode {self.mode!r}; expected one of {KICK_MODES}")
        if self.mode != "none" and not (self.amplitude > 0 and self.duration > 0):
            raise ValidationError("kick amplitude and duration must be positive")

    @property
    def window(self) -> float:
        return 0.0 if self.mode == "none" else float(self.duration)


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 0.01
    t_final: float = 150.0
    kick: KickPolicy = field(default_factory=KickPolicy)
    record_stride: int = 1

    def __post_init__(self):
        if not (0 < self.dt <= self.t_final):
            raise ValidationError(f"need 0 < dt <= t_final, got dt={self.dt}, t_final={self.t_final}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValidationError(f"record_stride must be a positive integer, got {self.record_stride}")


@dataclass
class Trajectory:
    times: np.ndarray
    populations: np.ndarray  # (samples, n)
    energies: np.ndarray
    controls: np.ndarray  # (samples, m)
    final_state: np.ndarray
    kick_end: float = 0.0
    # per-sample invariant residues of rho(t)
    trace_error: np.ndarray = None
    hermiticity_error: np.ndarray = None
    spectrum_drift: np.ndarray = None

    @property
    def n(self) -> int:
        return self.populations.shape[1]

    @property
    def m(self) -> int:
        return self.controls.shape[1]

    def settle_time(self, j: int, threshold: float = 0.01) -> float:
        """Earliest recorded time after which |u_j| stays below `threshold`."""
        above = np.nonzero(np.abs(self.controls[:, j]) >= threshold)[0]
        if above.size == 0:
            return float(self.times[0])
        last = above[-1]
        if last + 1 >= self.times.size:
            return float("inf")
        return float(self.times[last + 1])

    def feedback_mask(self) -> np.ndarray:
        """Samples recorded at or after the end of the kick window."""
        return self.times >= self.kick_end - 1e-12


class Distance(NamedTuple):
    hilbert_schmidt: float
    population_inf: float


def distance_to_target(rho, rhof) -> Distance:
    """Hilbert-Schmidt distance and the infinity norm of the population difference."""
    a = np.asarray(rho, dtype=complex)
    b = np.asarray(rhof, dtype=complex)
    if a.shape != b.shape:
        raise ValidationError(f"shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    hs = float(np.sqrt(max(np.einsum("ab,ab->", d, d.conj()).real, 0.0)))
    pop = float(np.max(np.abs(np.diag(d).real)))
    return Distance(hs, pop)


def _evolve(rho, B, dt):
    G = unitary_from_generator(B, dt)
    out = G @ rho @ G.conj().T
    return 0.5 * (out + out.conj().T)


def feedback(rho, system: QuantumSystem, P: ObservableLike, t: float) -> np.ndarray:
    return control_law(rho, P, system.frame_operators(t), system.gains)


def step(rho, system: QuantumSystem, P: ObservableLike, t: float, dt: float, u=None):
    """Advance one exponential-midpoint step.

    If `u` is given it is applied as an open-loop control; otherwise the
    feedback law is evaluated on the predictor state at ``t + dt/2``.

    Returns
    -------
    (rho_next, u)
        The new state and the control applied during the step.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    rho = np.asarray(rho, dtype=complex)
    t_mid = t + 0.5 * dt
    if u is None:
        u0 = feedback(rho, system, P, t)
        A0 = system.frame_operators(t)
        rho_half = _evolve(rho, np.tensordot(u0, A0, axes=1), 0.5 * dt)
        u = feedback(rho_half, system, P, t_mid)
    else:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != system.m:
            raise ValidationError(f"control vector has {u.size} entries for {system.m} controls")
    A = system.frame_operators(t_mid)
    return _evolve(rho, np.tensordot(u, A, axes=1), dt), u


def _kick_control(kick: KickPolicy, m: int, witness) -> np.ndarray:
    if kick.mode == "constant_pulse":
        return np.full(m, kick.amplitude)
    w = np.asarray(witness, dtype=float).reshape(-1)
    return kick.amplitude * w / np.linalg.norm(w)


def simulate(
    system: QuantumSystem,
    rho0,
    P: ObservableLike,
    cfg: SimulationConfig = SimulationConfig(),
    witness=None,
) -> Trajectory:
    """Integrate the closed loop from `rho0` up to ``cfg.t_final``.

    While ``t + dt/2`` lies inside the kick window the controls are set by
    ``cfg.kick``; afterwards the pure feedback law is applied.  For the
    ``destabilizing_direction`` kick a `witness` control vector (one entry
    per control) must be supplied, typically from
    :func:`qlyap.analysis.find_destabilizing_control`.
    """
    rho = as_density_matrix(rho0, "rho0").copy()
    Pm = _matrix(P)
    if Pm.shape != rho.shape or rho.shape[0] != system.n:
        raise ValidationError("system, initial state and observable dimensions differ")
    kick = cfg.kick
    if kick.mode == "destabilizing_direction":
        if witness is None:
            raise ValidationError("destabilizing_direction kick needs a witness control")
        w = np.asarray(witness, dtype=float).reshape(-1)
        if w.size != system.m or not np.linalg.norm(w) > 0:
            raise ValidationError(f"witness must be a non-zero vector of {system.m} controls")
    u_kick = None if kick.mode == "none" else _kick_control(kick, system.m, witness)

    spec0 = np.linalg.eigvalsh(rho)
    n_steps = int(np.ceil(cfg.t_final / cfg.dt - 1e-9))
    n_samples = n_steps // cfg.record_stride + 2
    times = np.empty(n_samples)
    pops = np.empty((n_samples, system.n))
    energies = np.empty(n_samples)
    controls = np.empty((n_samples, system.m))
    tr_err = np.empty(n_samples)
    herm_err = np.empty(n_samples)
    spec_drift = np.empty(n_samples)

    def record(i, t, r, u):
        times[i] = t
        pops[i] = np.diag(r).real
        energies[i] = energy(Pm, r)
        controls[i] = u
        tr_err[i] = abs(np.trace(r) - 1.0)
        herm_err[i] = hermiticity_residue(r)
        spec_drift[i] = np.max(np.abs(np.linalg.eigvalsh(r) - spec0))

    in_kick = u_kick is not None and 0.5 * cfg.dt < kick.window
    record(0, 0.0, rho, u_kick if in_kick else feedback(rho, system, Pm, 0.0))
    i = 1
    t = 0.0
    for k in range(1, n_steps + 1):
        dt = min(cfg.dt, cfg.t_final - t)
        override = u_kick if (u_kick is not None and t + 0.5 * dt < kick.window) else None
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                rho, u = step(rho, system, Pm, t, dt, override)
        except np.linalg.LinAlgError:
            # eigh of a non-finite generator
            raise IntegrationError(k, t + dt, "control") from None
        t = cfg.dt * k if k < n_steps else cfg.t_final
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
            raise IntegrationError(k, t)
        if k % cfg.record_stride == 0 or k == n_steps:
            record(i, t, rho, u)
            i += 1
    log.debug("simulated %d steps, %d samples", n_steps, i)
    return Trajectory(
        times=times[:i],
        populations=pops[:i],
        energies=energies[:i],
        controls=controls[:i],
        final_state=rho,
        kick_end=kick.window,
        trace_error=tr_err[:i],
        hermiticity_error=herm_err[:i],
        spectrum_drift=spec_drift[:i],
    )

"""Convergent energy-function feedback control of closed quantum systems."""

from .analysis import (
    CriticalPoint,
    analyze_critical_points,
    build_K,
    build_M,
    enumerate_critical_points,
    find_destabilizing_control,
    lemma3_rank,
    second_derivative_diag,
)
from .control import (
    Observable,
    construct_P_coherent,
    construct_P_negative_target,
    construct_P_pure,
    control_law,
    energy,
    energy_rate,
    verify_minimum,
)
from .errors import IntegrationError, InvariantError, ValidationError
from .propagate import KickPolicy, SimulationConfig, Trajectory, distance_to_target, simulate, step
from .qla import SuBasis, coherent_vector, commutator, interaction_frame, su_basis
from .system import (
    ConditionReport,
    ControlHamiltonian,
    QuantumSystem,
    check_conditions,
    check_strong_regularity,
    check_theorem2,
    check_unitary_equivalence,
    classify_control,
)

__version__ = "0.1.0"

import numpy as np
import pytest

from qlyap import QuantumSystem, SimulationConfig, construct_P_negative_target, simulate

ENERGIES = [0.4948, 1.4529, 2.3691, 3.2434]
RHO0_DIAG = [0.3850, 0.2758, 0.1976, 0.1416]
RHOF_DIAG = [0.1416, 0.1976, 0.2758, 0.3850]
LADDER = [(0, 1), (1, 2), (2, 3)]
FULL = LADDER + [(0, 2), (1, 3), (0, 3)]
DELTA_21 = 0.9581


def random_density(rng, n, rank=None):
    rank = n if rank is None else rank
    G = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, n):
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (G + G.conj().T)


def random_unitary(rng, n):
    Q, R = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture(scope="session")
def rho0():
    return np.diag(RHO0_DIAG).astype(complex)


@pytest.fixture(scope="session")
def rhof():
    return np.diag(RHOF_DIAG).astype(complex)


@pytest.fixture(scope="session")
def full_system():
    return QuantumSystem.from_pairs(ENERGIES, FULL, 20.0)


@pytest.fixture(scope="session")
def ladder_system():
    return QuantumSystem.from_pairs(ENERGIES, LADDER, 20.0)


@pytest.fixture(scope="session")
def full_run(full_system, rho0, rhof):
    import time

    P = construct_P_negative_target(rhof)
    t0 = time.perf_counter()
    traj = simulate(full_system, rho0, P, SimulationConfig(dt=0.01, t_final=150.0))
    return traj, time.perf_counter() - t0

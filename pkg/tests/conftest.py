import pytest

from fedcost.datagen import gen_synthetic
from fedcost.system import AveragedCosts, sample_profile


@pytest.fixture(scope="session")
def small_dataset():
    return gen_synthetic(1.0, 1.0, 6, 40, 10, seed=2)


@pytest.fixture(scope="session")
def desk_dataset():
    """Synthetic(1,1), N=20: the shared desk-scale training dataset."""
    return gen_synthetic(1.0, 1.0, 20, 100, 50, seed=42)


@pytest.fixture(scope="session")
def desk_profile():
    return sample_profile(
        20, t_p_mean=0.5, t_p_std=0.15, e_p_mean=0.01, t_m_mean=0.2, e_m_mean=0.02,
        jitter=0.1, seed=1,
    )


@pytest.fixture(scope="session")
def sim_costs():
    """Simulation-like population costs (N=100 fleet)."""
    return AveragedCosts(n_clients=100, t_p=0.5, t_m=0.2, e_p=0.01, e_m=0.02, gamma=0.5)


def random_costs(rng, n=None, gamma=None):
    """Random positive parameter bundle for property sweeps."""
    return AveragedCosts(
        n_clients=int(rng.integers(20, 201)) if n is None else n,
        t_p=float(10 ** rng.uniform(-3, 0)),
        t_m=float(10 ** rng.uniform(-3, 0)),
        e_p=float(10 ** rng.uniform(-4, -1)),
        e_m=float(10 ** rng.uniform(-4, -1)),
        gamma=float(rng.uniform(0, 1)) if gamma is None else gamma,
    )

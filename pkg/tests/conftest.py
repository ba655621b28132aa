import numpy as np
import pytest

from actsense import EnergyTensor, ObservationSet


@pytest.fixture
def tiny_tensor():
    """2 homes x (aggregate + 2 appliances) x 3 months, fully observed."""
    rng = np.random.default_rng(42)
    breakdown = rng.uniform(1.0, 5.0, size=(2, 2, 3))
    readings = np.concatenate([breakdown.sum(axis=1, keepdims=True), breakdown],
                              axis=1)
    return EnergyTensor(readings=readings,
                        mask=np.ones_like(readings, dtype=bool),
                        appliance_names=("aggregate", "fridge", "hvac"),
                        aggregate_index=0)


def full_omega(tensor):
    M, N, T = tensor.readings.shape
    return ObservationSet.from_triples(
        (i, j, k) for i in range(M) for j in range(N) for k in range(T))


@pytest.fixture
def tiny_omega(tiny_tensor):
    return full_omega(tiny_tensor)

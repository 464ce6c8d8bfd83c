import numpy as np
import pytest

from pollink import CoincidenceCounts, PoincareRotation, TwoQubitState
from pollink.polarization import coincidence_probability
from pollink.source import BOUNDS_MODE_PAIRS


def random_density_matrix(rng: np.random.Generator) -> TwoQubitState:
    """Random full-rank two-qubit state (Ginibre ensemble)."""
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = g @ g.conj().T
    return TwoQubitState(m / np.trace(m).real)


def random_rotation(rng: np.random.Generator) -> PoincareRotation:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return PoincareRotation.from_axis_angle(axis, rng.uniform(0.0, np.pi))


def exact_counts(rho: TwoQubitState, n: float = 1e6) -> CoincidenceCounts:
    """Counts proportional to the exact mode probabilities (no sampling)."""
    return CoincidenceCounts(
        {p: n * coincidence_probability(rho, *p) for p in BOUNDS_MODE_PAIRS}, 1.0
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from clab.state import AggregateProfile, TailProfile, aggregate_from_tail


def random_tail(rng: np.random.Generator, max_support: int = 12,
                max_mass: float | None = None) -> TailProfile:
    """Random valid tail profile: sorted uniforms under the leading 1."""
    support = int(rng.integers(1, max_support + 1))
    vals = np.sort(rng.random(support))[::-1]
    if max_mass is not None and vals.sum() > max_mass:
        vals *= max_mass / vals.sum() * rng.random()
    return TailProfile((1.0,) + tuple(vals))


def random_aggregate(rng: np.random.Generator, max_support: int = 12,
                     max_mass: float | None = None) -> AggregateProfile:
    return aggregate_from_tail(random_tail(rng, max_support, max_mass))


def ordered_tail_pair(rng: np.random.Generator, max_support: int = 10):
    """Two valid tails with the first dominating the second coordinatewise."""
    a = np.array(random_tail(rng, max_support).s)
    b = np.array(random_tail(rng, max_support).s)
    n = max(a.shape[0], b.shape[0])
    a = np.pad(a, (0, n - a.shape[0]))
    b = np.pad(b, (0, n - b.shape[0]))
    return TailProfile(tuple(np.maximum(a, b))), TailProfile(tuple(np.minimum(a, b)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240809)

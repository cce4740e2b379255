import numpy as np
import pytest

from config.settings import FIXTURES_DIR
from src.models.chain import FiniteMarkovChain
from src.models.metric_space import Distribution
from src.repositories.chain_json import ChainRepository
from src.services.metric import build_euclidean_space, discrete_metric_space


def random_distribution(rng: np.random.Generator, space, sparsity: float = 0.3) -> Distribution:
    """Random law on `space`, with some points dropped from the support."""
    weights = rng.random(space.size)
    weights[rng.random(space.size) < sparsity] = 0.0
    if weights.sum() == 0:
        weights[rng.integers(space.size)] = 1.0
    return Distribution(space, weights / weights.sum())


def random_space(rng: np.random.Generator, size: int, dimension: int = 2):
    return build_euclidean_space(rng.random((size, dimension)))


@pytest.fixture
def repository():
    return ChainRepository(FIXTURES_DIR)


@pytest.fixture
def three_point_pair(repository):
    return repository.load_pair("three_point_pair.json")


@pytest.fixture
def flip_chain(repository):
    return repository.load_chain("two_state_flip.json")


@pytest.fixture
def lazy_coin():
    """Two-state chain on the discrete metric that keeps its state with probability 3/4."""
    return FiniteMarkovChain(discrete_metric_space(2), [[0.75, 0.25], [0.25, 0.75]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)

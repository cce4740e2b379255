import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.metric_space import Coupling, Distribution, FiniteMetricSpace, check_metric_axioms
from src.services.metric import build_euclidean_space, closed_neighborhood, discrete_metric_space
from src.utils.errors import MetricAxiomError


@pytest.mark.parametrize(
    "dist, fragment",
    [
        ([[1.0, 1.0], [1.0, 0.0]], "not zero"),
        ([[0.0, -1.0], [-1.0, 0.0]], "negative"),
        ([[0.0, 1.0], [2.0, 0.0]], "!="),
        ([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]], "Triangle"),
        ([[0.0, np.inf], [np.inf, 0.0]], "non-finite"),
    ],
)
def test_metric_axioms_rejected(dist, fragment):
    with pytest.raises(MetricAxiomError, match=fragment):
        check_metric_axioms(np.array(dist))


def test_pseudometric_allowed():
    space = FiniteMetricSpace.from_matrix([[0.0, 0.0], [0.0, 0.0]])
    assert space.distance(0, 1) == 0.0


def test_euclidean_distances():
    space = build_euclidean_space([[0.0], [3.0], [4.0]], labels=["a", "b", "c"])
    assert space.size == 3
    assert space.dimension == 1
    assert space.distance(0, 2) == 4.0
    assert space.pair_distances([0], [1, 2]).tolist() == [[3.0, 4.0]]
    assert space.paired_distances([0, 1], [1, 2]).tolist() == [3.0, 1.0]
    assert space.max_distance() == 4.0


def test_euclidean_rejects_ragged_coordinates():
    with pytest.raises(ValueError, match="shape"):
        build_euclidean_space([[0.0, 1.0], [2.0]])


def test_discrete_metric():
    space = discrete_metric_space(4)
    assert space.labels == ("0", "1", "2", "3")
    assert space.dist.sum() == 12.0


def test_space_roundtrips_through_dict():
    space = FiniteMetricSpace.from_matrix([[0, 2], [2, 0]], labels=["x", "y"])
    again = FiniteMetricSpace.from_dict(space.to_dict())
    assert again.labels == ("x", "y")
    assert np.array_equal(again.dist, space.dist)


def test_closed_neighborhood():
    space = build_euclidean_space([[0.0], [1.0], [3.0]])
    assert closed_neighborhood(space, [], 10.0) == set()
    assert closed_neighborhood(space, [0], 1.0) == {0, 1}
    assert closed_neighborhood(space, [0], 0.999) == {0}
    assert closed_neighborhood(space, [0, 2], 0.0) == {0, 2}
    with pytest.raises(ValueError):
        closed_neighborhood(space, [5], 1.0)


def test_distribution_validation():
    space = discrete_metric_space(3)
    with pytest.raises(ValueError, match="sum"):
        Distribution(space, [0.5, 0.4, 0.0])
    with pytest.raises(ValueError, match="negative"):
        Distribution(space, [1.5, -0.5, 0.0])
    with pytest.raises(ValueError, match="weights for a space"):
        Distribution(space, [1.0])

    tiny = Distribution(space, [0.5, 0.5 + 1e-12, -1e-12])
    assert tiny.weights.min() == 0.0
    assert tiny.support.tolist() == [0, 1]
    assert Distribution.point_mass(space, 2).mass([2]) == 1.0
    assert Distribution.uniform(space).mass([0, 1]) == pytest.approx(2 / 3)


def test_coupling_marginals_checked():
    space = discrete_metric_space(2)
    p = Distribution(space, [0.5, 0.5])
    q = Distribution(space, [0.25, 0.75])
    with pytest.raises(ValueError, match="Column sums"):
        Coupling([[0.5, 0.0], [0.0, 0.5]], p, q)

    independent = Coupling.independent(p, q)
    assert independent.mass_beyond(0.5) == pytest.approx(0.5)
    assert Coupling.identity(p).mass_beyond(0.0) == 0.0


@st.composite
def symmetric_matrices(draw):
    size = draw(st.integers(3, 7))
    upper = draw(st.lists(st.integers(1, 10), min_size=size * (size - 1) // 2, max_size=size * (size - 1) // 2))
    dist = np.zeros((size, size))
    dist[np.triu_indices(size, 1)] = upper
    return dist + dist.T


@given(symmetric_matrices())
@settings(max_examples=200, deadline=None)
def test_triangle_check_matches_exhaustive_search(dist):
    size = dist.shape[0]
    broken = any(
        dist[i, j] > dist[i, k] + dist[k, j] for i in range(size) for j in range(size) for k in range(size)
    )
    if broken:
        with pytest.raises(MetricAxiomError, match="Triangle"):
            check_metric_axioms(dist)
    else:
        check_metric_axioms(dist)


@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=8),
    st.data(),
)
@settings(max_examples=100, deadline=None)
def test_closed_neighborhood_is_monotone(coords, data):
    space = build_euclidean_space([[c] for c in coords])
    indices = st.integers(0, space.size - 1)
    small = data.draw(st.sets(indices))
    large = small | data.draw(st.sets(indices))
    eps = data.draw(st.floats(0, 5))
    wider = eps + data.draw(st.floats(0, 5))

    base = closed_neighborhood(space, small, eps)
    assert small <= closed_neighborhood(space, small, 0.0)
    assert base <= closed_neighborhood(space, small, wider)
    assert base <= closed_neighborhood(space, large, eps)

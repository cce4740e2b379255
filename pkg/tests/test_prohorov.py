import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.metric_space import Distribution
from src.services.metric import build_euclidean_space, discrete_metric_space
from src.services.prohorov import (
    SCALE,
    _interval_flow,
    _network_flow,
    kyfan_value,
    prohorov_bruteforce,
    prohorov_distance,
    transportation_deficiency,
    tv_distance,
)
from src.utils.errors import InstanceTooLargeError
from tests.conftest import random_distribution, random_space

LAMBDAS = [0.0, 0.3, 1.0, 2.0, 10.0]


def test_three_point_fixture(three_point_pair):
    p, q = three_point_pair
    result = prohorov_distance(p, q, p.space, 1.0)
    assert result.value == pytest.approx(0.5, abs=1e-12)
    assert result.critical_threshold == 0.0
    assert prohorov_bruteforce(p, q, p.space, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert tv_distance(p, q) == pytest.approx(0.5)


def test_deficiency_steps(three_point_pair):
    p, q = three_point_pair
    assert transportation_deficiency(p, q, p.space, 0.0) == pytest.approx(0.5)
    assert transportation_deficiency(p, q, p.space, 1.0) == pytest.approx(0.5)
    assert transportation_deficiency(p, q, p.space, 2.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        transportation_deficiency(p, q, p.space, -1.0)


def test_identical_distributions_are_at_zero(rng):
    space = random_space(rng, 6)
    p = random_distribution(rng, space)
    for lam in LAMBDAS:
        assert prohorov_distance(p, p, space, lam).value == pytest.approx(0.0, abs=1e-12)


def test_matches_bruteforce_on_random_instances(rng):
    for _ in range(200):
        size = int(rng.integers(2, 13))
        space = random_space(rng, size, dimension=int(rng.integers(1, 4)))
        p = random_distribution(rng, space)
        q = random_distribution(rng, space)
        for lam in LAMBDAS:
            fast = prohorov_distance(p, q, space, lam).value
            slow = prohorov_bruteforce(p, q, space, lam)
            assert fast == pytest.approx(slow, abs=1e-9), (size, lam)


def test_lambda_zero_is_total_variation(rng):
    for _ in range(100):
        space = random_space(rng, int(rng.integers(2, 30)))
        p = random_distribution(rng, space)
        q = random_distribution(rng, space)
        assert abs(prohorov_distance(p, q, space, 0.0).value - tv_distance(p, q)) <= 1e-12


def test_lambda_zero_counts_coincident_points_as_distinct():
    space = build_euclidean_space([[0.0], [0.0], [1.0]])
    p = Distribution.point_mass(space, 0)
    q = Distribution.point_mass(space, 1)
    result = prohorov_distance(p, q, space, 0.0)
    assert result.value == tv_distance(p, q) == 1.0
    assert prohorov_bruteforce(p, q, space, 0.0) == 1.0
    assert result.witness_coupling.joint[0, 1] == pytest.approx(1.0)
    # Any spatial slack lets the coincident points absorb each other
    assert prohorov_distance(p, q, space, 1.0).value == pytest.approx(0.0, abs=1e-12)


def test_bruteforce_picks_the_level_where_spatial_slack_binds():
    space = build_euclidean_space([[0.2402], [0.5987], [0.9865]])
    p = Distribution(space, [0.4707, 0.3049, 0.2244])
    q = Distribution.point_mass(space, 0)
    expected = (0.9865 - 0.2402) / 10
    result = prohorov_distance(p, q, space, 10.0)
    assert result.value == pytest.approx(expected, abs=1e-12)
    assert result.critical_threshold == pytest.approx(10.0 * result.value, abs=1e-12)
    assert prohorov_bruteforce(p, q, space, 10.0) == pytest.approx(expected, abs=1e-12)


def test_point_mass_target_against_closed_form(rng):
    # With q a point mass at x, rho is min_k max(t_k / lambda, p(d(., x) > t_k))
    for _ in range(200):
        space = build_euclidean_space(rng.random((3, 1)))
        p = random_distribution(rng, space, sparsity=0.0)
        q = Distribution.point_mass(space, 0)
        far = space.dist[0]
        expected = min(
            1.0, min(max(t / 10.0, float(p.weights[far > t].sum())) for t in np.append(far, 0.0))
        )
        assert prohorov_bruteforce(p, q, space, 10.0) == pytest.approx(expected, abs=1e-12)
        assert prohorov_distance(p, q, space, 10.0).value == pytest.approx(expected, abs=1e-9)


def test_critical_threshold_is_a_level_below_lambda_value(rng):
    for _ in range(50):
        space = random_space(rng, 6)
        p = random_distribution(rng, space)
        q = random_distribution(rng, space)
        for lam in LAMBDAS[1:]:
            result = prohorov_distance(p, q, space, lam)
            assert result.critical_threshold <= lam * result.value + 1e-12
            assert np.any(np.isclose(space.dist, result.critical_threshold)) or result.critical_threshold == 0.0
            assert result.witness_coupling.mass_beyond(result.critical_threshold) <= result.value + 1e-9


@pytest.mark.parametrize("lam", LAMBDAS)
def test_symmetry_and_triangle_inequality(rng, lam):
    for _ in range(100):
        space = random_space(rng, int(rng.integers(2, 10)))
        p, q, r = (random_distribution(rng, space) for _ in range(3))
        pq = prohorov_distance(p, q, space, lam).value
        qp = prohorov_distance(q, p, space, lam).value
        qr = prohorov_distance(q, r, space, lam).value
        pr = prohorov_distance(p, r, space, lam).value
        assert pq == pytest.approx(qp, abs=1e-9)
        assert pr <= pq + qr + 1e-9


def test_witness_attains_value(rng):
    for _ in range(30):
        space = random_space(rng, 8)
        p = random_distribution(rng, space)
        q = random_distribution(rng, space)
        for lam in LAMBDAS:
            result = prohorov_distance(p, q, space, lam)
            witness = result.witness_coupling
            assert np.allclose(witness.joint.sum(axis=1), p.weights, atol=1e-10)
            assert np.allclose(witness.joint.sum(axis=0), q.weights, atol=1e-10)
            assert kyfan_value(witness, space, lam) == pytest.approx(result.value, abs=1e-9)


def test_discrete_metric_reduces_to_tv():
    space = discrete_metric_space(3)
    p = Distribution(space, [0.6, 0.4, 0.0])
    q = Distribution(space, [0.1, 0.4, 0.5])
    # Every distinct pair sits at distance 1, so rho_lambda = min(TV, 1/lambda)
    assert prohorov_distance(p, q, space, 1.0).value == pytest.approx(0.5)
    assert prohorov_distance(p, q, space, 4.0).value == pytest.approx(0.25)


def test_collinear_greedy_agrees_with_network_flow(rng):
    for _ in range(50):
        sources = np.sort(rng.random(int(rng.integers(2, 12))))
        sinks = np.sort(rng.random(int(rng.integers(2, 12))))
        supply = [int(v) for v in rng.integers(1, SCALE // 16, sources.size)]
        demand = [int(v) for v in rng.integers(1, SCALE // 16, sinks.size)]
        threshold = float(rng.uniform(0.05, 0.5))
        admissible = np.abs(sources[:, None] - sinks[None, :]) <= threshold

        reach = admissible.any(axis=1)
        lo = np.where(reach, np.argmax(admissible, axis=1), sinks.size)
        hi = np.where(reach, sinks.size - 1 - np.argmax(admissible[:, ::-1], axis=1), -1)
        order_a, order_b = np.arange(sources.size), np.arange(sinks.size)

        greedy, routed = _interval_flow(supply, demand, order_a, order_b, lo, hi)
        exact, _ = _network_flow(supply, demand, admissible)
        assert greedy == exact
        assert np.all(routed[~admissible] == 0)


def test_large_line_instance_runs():
    size = 512
    space = build_euclidean_space((np.arange(size) / size).reshape(-1, 1))
    p = Distribution(space, np.full(size, 1 / size))
    weights = np.zeros(size)
    weights[: size // 2] = 2 / size
    q = Distribution(space, weights)
    # Half the mass must travel 1/2 to the left; at lambda = 1 the answer is 1/4
    assert prohorov_distance(p, q, space, 1.0).value == pytest.approx(0.25, abs=4 / size)


def test_argument_checks(three_point_pair):
    p, q = three_point_pair
    with pytest.raises(ValueError):
        prohorov_distance(p, q, p.space, -1.0)
    other = discrete_metric_space(3)
    with pytest.raises(ValueError, match="different spaces"):
        tv_distance(p, Distribution.uniform(other))

    big = discrete_metric_space(21)
    uniform = Distribution.uniform(big)
    with pytest.raises(InstanceTooLargeError):
        prohorov_bruteforce(uniform, uniform, big, 1.0)


@st.composite
def instances(draw):
    size = draw(st.integers(2, 7))
    coords = draw(st.lists(st.floats(0, 4), min_size=size, max_size=size))
    raw_p = draw(st.lists(st.integers(0, 10), min_size=size, max_size=size).filter(any))
    raw_q = draw(st.lists(st.integers(0, 10), min_size=size, max_size=size).filter(any))
    space = build_euclidean_space([[c] for c in coords])
    p = Distribution(space, np.array(raw_p) / sum(raw_p))
    q = Distribution(space, np.array(raw_q) / sum(raw_q))
    return space, p, q


@given(instances(), st.sampled_from(LAMBDAS[1:]))
@settings(max_examples=150, deadline=None)
def test_bounded_by_tv_and_monotone_in_lambda(instance, lam):
    space, p, q = instance
    value = prohorov_distance(p, q, space, lam).value
    assert 0.0 <= value <= tv_distance(p, q) + 1e-12
    assert prohorov_distance(p, q, space, 2 * lam).value <= value + 1e-12
    assert value == pytest.approx(prohorov_bruteforce(p, q, space, lam), abs=1e-9)

import math

import numpy as np
import pytest
from scipy.special import gammaln

from src.models.ball_walk import BallWalkConfig, ConvexBody, PerturbedSamplerConfig
from src.services.ball_walk import (
    ball_volume,
    ball_walk_step,
    ballwalk_budgets,
    corner_stay_probability,
    coupled_proposals,
    coupling_mismatch_rate,
    direction_mean,
    error_budget_trials,
    finite_precision_summary,
    finite_precision_walk,
    lipschitz_bound,
    perturbed_coupled_trial,
    radial_cdf_check,
    reflect,
    reflection_coupled_step,
    round_to_bits,
    run_ball_walk,
    sample_ball_uniform,
    sample_ball_uniform_batch,
    shell_fraction,
    stay_probability,
    summarize_error_budget,
    void_probability,
)


def test_ball_volumes():
    assert ball_volume(0, 1.0) == 1.0
    assert ball_volume(1, 2.0) == pytest.approx(4.0)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 1.0) == pytest.approx(4 * math.pi / 3)


@pytest.mark.parametrize("n", [2, 3, 5, 10, 40])
def test_volume_recurrence(n):
    r = 0.7
    ratio = r * math.sqrt(math.pi) * math.exp(gammaln(n / 2 + 0.5) - gammaln(n / 2 + 1))
    assert ball_volume(n, r) == pytest.approx(ball_volume(n - 1, r) * ratio, rel=1e-10)
    assert lipschitz_bound(n, r) == pytest.approx(ball_volume(n - 1, r) / ball_volume(n, r), rel=1e-10)


def test_lipschitz_bound_in_the_plane():
    assert lipschitz_bound(2, 1.0) == pytest.approx(2 / math.pi)


def test_void_and_shell():
    assert 0 < void_probability(10) < 0.01
    assert shell_fraction(3, 1.0, 0.0) == 0.0
    assert shell_fraction(3, 1.0, 0.1) == pytest.approx(1.1**3 - 1)
    with pytest.raises(ValueError):
        shell_fraction(3, 1.0, -0.1)


def test_budgets_formula():
    n, r, D, eps = 10, 1 / math.sqrt(10), 2.0, 0.1
    budgets = ballwalk_budgets(n, r, D, eps)
    log_ratio = math.log(2 * math.sqrt(10))
    assert budgets["tau1_estimate"] == pytest.approx(4000 * log_ratio, rel=1e-12)
    assert budgets["tau1_estimate"] == pytest.approx(7377.8, abs=0.1)
    assert budgets["delta_estimate"] == pytest.approx(0.01 / (400 * log_ratio), rel=1e-12)
    assert budgets["delta_estimate"] == pytest.approx(1.3554e-5, rel=1e-3)
    assert budgets["lambda_C"] == pytest.approx(0.5, abs=1e-15)
    assert budgets["regime"] == "convergent"
    assert "constants" in budgets["note"]


def test_budgets_need_diameter_above_radius():
    with pytest.raises(ValueError):
        ballwalk_budgets(3, 1.0, 0.5, 0.1)


def test_sampler_stays_in_ball(rng):
    points = sample_ball_uniform_batch(4, 0.3, rng, 5000)
    assert points.shape == (5000, 4)
    assert np.linalg.norm(points, axis=1).max() <= 0.3 + 1e-12
    assert np.linalg.norm(sample_ball_uniform(4, 0.3, rng)) <= 0.3 + 1e-12
    with pytest.raises(ValueError):
        sample_ball_uniform(0, 1.0, rng)


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 3, 5])
def test_radial_law(n):
    for row in radial_cdf_check(n, 1.0, 200_000, seed=n):
        assert abs(row["empirical"] - row["expected"]) <= 3 * row["sigma"]


def test_radial_check_is_worker_independent():
    first = radial_cdf_check(3, 1.0, 25_000, seed=5, workers=1)
    second = radial_cdf_check(3, 1.0, 25_000, seed=5, workers=3)
    assert first == second


def test_directions_are_centred():
    mean = direction_mean(3, 20_000, seed=1)
    assert mean.shape == (3,)
    assert np.linalg.norm(mean) < 0.03


def test_reflection_swaps_lens_complements(rng):
    x, x2, r = np.zeros(3), np.array([0.4, 0.1, 0.0]), 0.5
    w = sample_ball_uniform_batch(3, r, rng, 20_000)
    y, y2, mismatch = coupled_proposals(x, x2, r, w)
    outside = y[mismatch]
    mirrored = y2[mismatch]
    assert np.all(np.linalg.norm(mirrored - x2, axis=1) <= r + 1e-12)
    assert np.all(np.linalg.norm(mirrored - x, axis=1) > r - 1e-12)
    assert np.allclose(reflect(mirrored, x, x2), outside)
    assert np.array_equal(y[~mismatch], y2[~mismatch])


def test_coupled_proposals_identical_points(rng):
    x = np.ones(2)
    w = sample_ball_uniform_batch(2, 0.1, rng, 10)
    y, y2, mismatch = coupled_proposals(x, x.copy(), 0.1, w)
    assert np.array_equal(y, y2)
    assert not mismatch.any()


@pytest.mark.slow
def test_mismatch_rate_bound():
    r = 0.5
    result = coupling_mismatch_rate(3, r, 0.01 * r, 200_000, seed=11)
    assert result["mismatch_rate"] <= result["bound"] + 3 * result["sigma"]


def test_ball_walk_steps_stay_inside(rng):
    cfg = BallWalkConfig(ConvexBody.from_string("box:0,1", 3), 0.4)
    path = run_ball_walk(cfg, [0.5, 0.5, 0.5], 500, rng)
    assert path.shape == (501, 3)
    assert cfg.body.contains(path).all()
    y = ball_walk_step(cfg, path[-1], rng)
    assert cfg.body.contains(y)
    y, y2 = reflection_coupled_step(cfg, [0.2, 0.2, 0.2], [0.25, 0.2, 0.2], rng)
    assert cfg.body.contains(y) and cfg.body.contains(y2)


def test_center_of_ball_never_rejects(rng):
    cfg = BallWalkConfig(ConvexBody.from_string("ball:1", 4), 0.9)
    assert stay_probability(cfg, np.zeros(4), 20_000, seed=3) == 0.0


def test_laziness_grows_towards_boundary():
    cfg = BallWalkConfig(ConvexBody.from_string("ball:1", 3), 0.3)
    radii = [0.0, 0.75, 0.9, 1.0]
    rates = [stay_probability(cfg, [t, 0.0, 0.0], 40_000, seed=1) for t in radii]
    assert rates[0] == 0.0
    assert all(b >= a for a, b in zip(rates, rates[1:]))


def test_corner_stay_probability():
    result = corner_stay_probability(3, 1.0, 2, 40_000, seed=9)
    assert result["expected"] == 0.75
    assert abs(result["stay_rate"] - 0.75) <= 4 * result["sigma"]


def test_body_parsing():
    ball = ConvexBody.from_string("ball:2", 3)
    assert ball.diameter == 4.0
    assert ball.note is None
    box = ConvexBody.from_string("box:0,1", 2)
    assert box.diameter == pytest.approx(math.sqrt(2))
    assert "corners" in box.note
    assert box.distance_to([2.0, 0.5]) == pytest.approx(1.0)
    for text in ("ball", "box:1", "cube:1", "ball:x"):
        with pytest.raises(ValueError):
            ConvexBody.from_string(text, 2)


def test_config_validation():
    body = ConvexBody.ball(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        BallWalkConfig(body, 0.0)
    with pytest.raises(ValueError):
        BallWalkConfig(body, 0.1, precision_bits=2)
    with pytest.raises(ValueError):
        BallWalkConfig(body, 0.1).check_point([3.0, 0.0])
    with pytest.raises(ValueError):
        PerturbedSamplerConfig(1e-3, 1e-3, mode="jitter")


def test_zero_error_trial_is_exact(rng):
    cfg = BallWalkConfig(ConvexBody.from_string("ball:1", 5), 0.4)
    exact = PerturbedSamplerConfig(0.0, 0.0)
    for _ in range(200):
        assert perturbed_coupled_trial(cfg, exact, np.zeros(5), rng).is_zero


def test_error_budget_tracks_injected_error():
    cfg = BallWalkConfig(ConvexBody.from_string("ball:1", 3), 0.5)
    noisy = PerturbedSamplerConfig(1e-4, 1e-4)
    samples = error_budget_trials(cfg, noisy, np.zeros(3), 500, seed=2)
    summary = summarize_error_budget(samples, cfg, noisy)
    assert summary["trials"] == 500
    assert summary["delta"] == pytest.approx(3e-4)
    assert 0 < summary["phi_error_max"] <= math.sqrt(3) * 1e-4 + 1e-15
    assert summary["shell_volume_ratio"] == pytest.approx(shell_fraction(3, 1.0, 0.5e-4))
    parallel = error_budget_trials(cfg, noisy, np.zeros(3), 500, seed=2, workers=4)
    assert [s.to_dict() for s in parallel] == [s.to_dict() for s in samples]


def test_quantization_mode_runs():
    cfg = BallWalkConfig(ConvexBody.from_string("box:-1,1", 2), 0.5)
    grid = PerturbedSamplerConfig(1e-3, 1e-3, mode="quantization")
    samples = error_budget_trials(cfg, grid, np.zeros(2), 100, seed=4)
    assert all(s.phi_error <= math.sqrt(2) * 5e-4 + 1e-12 for s in samples)
    assert "shell_volume_ratio" not in summarize_error_budget(samples, cfg, grid)


def test_round_to_bits():
    values = np.array([1.0, 1 / 3, -2.75])
    assert np.array_equal(round_to_bits(values, 53), values)
    assert round_to_bits(np.array([1 / 3]), 4)[0] == pytest.approx(1 / 3, abs=2**-5)


def test_finite_precision_walk(rng):
    body = ConvexBody.from_string("ball:1", 3)
    exact = finite_precision_walk(BallWalkConfig(body, 0.3, precision_bits=53), np.zeros(3), 100, rng)
    assert exact.final_distance == 0.0
    assert exact.steps == 100

    coarse = BallWalkConfig(body, 0.3, precision_bits=12)
    summary = finite_precision_summary(coarse, np.zeros(3), 50, trials=20, seed=3)
    assert summary["median_step_rounding"] <= 2.0**-12
    assert len(finite_precision_walk(coarse, np.zeros(3), 5, rng).to_records()) == 6


def test_partner_proposal_is_uniform_in_its_ball(rng):
    # First coordinate of a uniform point in B(0, r) in R^3 has CDF 1/2 + 3s/4 - s^3/4, s = t/r
    x, x2, r, draws = np.zeros(3), np.array([0.3, 0.0, 0.0]), 0.5, 200_000
    _, y2, _ = coupled_proposals(x, x2, r, sample_ball_uniform_batch(3, r, rng, draws))
    edges = np.linspace(-1.0, 1.0, 21)
    expected = np.diff(0.5 + 0.75 * edges - 0.25 * edges**3)
    counts, _ = np.histogram((y2[:, 0] - x2[0]) / r, bins=edges)
    sigma = np.sqrt(draws * expected * (1 - expected))
    assert np.all(np.abs(counts - draws * expected) <= 4 * sigma)


def test_rounding_doubles_when_a_bit_is_dropped():
    body = ConvexBody.from_string("ball:1", 3)
    fine = finite_precision_summary(BallWalkConfig(body, 0.1, precision_bits=21), np.zeros(3), 200, trials=20, seed=8)
    coarse = finite_precision_summary(BallWalkConfig(body, 0.1, precision_bits=20), np.zeros(3), 200, trials=20, seed=8)
    assert 1.8 <= coarse["median_step_rounding"] / fine["median_step_rounding"] <= 2.2


def test_near_double_precision_shadow_stays_close(rng):
    cfg = BallWalkConfig(ConvexBody.from_string("ball:1", 3), 0.3, precision_bits=52)
    walk = finite_precision_walk(cfg, np.zeros(3), 1000, rng)
    assert walk.steps == 1000
    assert walk.distances.max() <= 1e-10


def test_direction_error_stays_within_its_scale():
    # |S - S_hat| <= 2 r |phi - phi_hat| / |phi| and |phi| >= sqrt(n) / 2, so 4 r delta / n always holds
    cfg = BallWalkConfig(ConvexBody.from_string("ball:1", 3), 0.5)
    noisy = PerturbedSamplerConfig(1e-3, 1e-3)
    summary = summarize_error_budget(error_budget_trials(cfg, noisy, np.zeros(3), 2000, seed=6), cfg, noisy)
    assert summary["s_error_max"] <= 4 * summary["s_error_scale"] + 1e-15
    assert summary["u_near_zero_rate"] <= summary["delta"] + 3 * math.sqrt(summary["delta"] / 2000)


def test_rejection_mismatch_is_of_order_delta():
    cfg = BallWalkConfig(ConvexBody.from_string("ball:1", 3), 0.5)
    noisy = PerturbedSamplerConfig(1e-3, 1e-3)
    samples = error_budget_trials(cfg, noisy, [0.8, 0.0, 0.0], 20_000, seed=12)
    summary = summarize_error_budget(samples, cfg, noisy)
    delta = summary["delta"]
    assert delta == pytest.approx(3e-3)
    assert summary["rejection_mismatch_rate"] <= delta + 3 * math.sqrt(delta / 20_000)

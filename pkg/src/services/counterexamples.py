"""
Builders for the three counterexample chain pairs and checks of their
quantitative claims.

Each family pairs an ideal chain with a perturbed one whose rows are close in
the Prohorov metric, yet whose stationary laws are far apart. Together they
show that none of the three perturbation budgets of the approximation
theorem can be relaxed.
"""

import logging

import numpy as np
from scipy import sparse

from config.constants import (
    CONVERGENT_IDEAL_ANCHOR,
    CONVERGENT_MIN_N,
    CONVERGENT_PERTURBED_ANCHOR,
    DIVERGENT_MAX_N,
    DIVERGENT_MIN_N,
    FAMILIES,
    FAMILY_C,
    FAMILY_EPSILON,
    FAMILY_EPSILON_NOTES,
    FAMILY_LAMBDA,
    NEUTRAL_MIN_N,
)
from src.models.chain import ChainPair, FiniteMarkovChain
from src.models.metric_space import Distribution, FiniteMetricSpace
from src.models.results import CounterexampleReport
from src.services.markov import (
    kernel_lipschitz_constant,
    kernel_perturbation,
    stationary_distribution,
    stationary_gap,
    t_step_distribution,
    variation_threshold_time,
)
from src.services.prohorov import prohorov_distance
from src.services.regime import delta_budget
from src.utils.logging import get_logger


def validate_params(family: str, n: int) -> None:
    """Check the size constraints of one family."""
    if family not in FAMILIES:
        raise ValueError(f"Unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    if int(n) != n:
        raise ValueError(f"n must be an integer, got {n!r}")
    if family == "convergent" and (n < CONVERGENT_MIN_N or n % 2):
        raise ValueError(f"convergent family needs an even n >= {CONVERGENT_MIN_N}, got {n}")
    if family == "neutral" and (n < NEUTRAL_MIN_N or n % 10):
        raise ValueError(f"neutral family needs n >= {NEUTRAL_MIN_N} divisible by 10, got {n}")
    if family == "divergent" and not DIVERGENT_MIN_N <= n <= DIVERGENT_MAX_N:
        raise ValueError(
            f"divergent family needs {DIVERGENT_MIN_N} <= n <= {DIVERGENT_MAX_N}, got {n}"
        )


def _circle(n: int) -> np.ndarray:
    angles = 2 * np.pi * np.arange(n) / n
    return np.column_stack((n * np.cos(angles), n * np.sin(angles)))


def _cycle_with_reset(n: int, reset) -> sparse.csr_array:
    """Kernel on the n-cycle: reset to state 0 with probability reset[j], else step clockwise."""
    states = np.arange(n)
    rows = np.concatenate((states, states))
    cols = np.concatenate((np.zeros(n, dtype=int), (states + 1) % n))
    probs = np.concatenate((reset, 1 - reset))
    # Duplicate (j, 0) entries for j = n - 1 are summed
    return sparse.csr_array((probs, (rows, cols)), shape=(n, n))


def convergent_pair(n: int) -> ChainPair:
    """
    Clockwise walk on n points of a circle of radius n with reset to the origin state.

    The ideal chain resets with probability 1/n, the perturbed one with 4/n.
    """
    validate_params("convergent", n)
    space = FiniteMetricSpace(coords=_circle(n))
    ideal = FiniteMarkovChain(space, _cycle_with_reset(n, np.full(n, 1 / n)))
    perturbed = FiniteMarkovChain(space, _cycle_with_reset(n, np.full(n, 4 / n)))
    return ChainPair(ideal, perturbed)


def neutral_reset_probability(i: int, n: int) -> float:
    """Layer-dependent reset probability r(i) of the neutral family."""
    if 5 * i < n:
        return 1 / n
    if 5 * i < 4 * n:
        return 5 * i / n**2
    return 4 / n


def neutral_state(i: int, j: int, n: int) -> int:
    """Index of state omega_{i,j} (layer i, angle j)."""
    return i * n + j


def _layered_kernel(n: int, down: float) -> sparse.csr_array:
    layers = np.repeat(np.arange(n), n)
    angles = np.tile(np.arange(n), n)
    reset = np.array([neutral_reset_probability(i, n) for i in range(n)])[layers]

    rows, cols, probs = [], [], []
    for next_layer, layer_prob in (
        (np.maximum(layers - 1, 0), down),
        (np.minimum(layers + 1, n - 1), 1 - down),
    ):
        for next_angle, angle_prob in ((np.zeros_like(angles), reset), ((angles + 1) % n, 1 - reset)):
            rows.append(layers * n + angles)
            cols.append(next_layer * n + next_angle)
            probs.append(layer_prob * angle_prob)

    size = n * n
    return sparse.csr_array(
        (np.concatenate(probs), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def neutral_pair(n: int) -> ChainPair:
    """
    n closely packed layers of the convergent circle, 5/n^2 apart.

    The layer index drifts down with probability 2/3 in the ideal chain and
    up with probability 2/3 in the perturbed one; the reset probability grows
    with the layer.
    """
    validate_params("neutral", n)
    circle = _circle(n)
    layers = np.repeat(np.arange(n), n)
    coords = np.column_stack((np.tile(circle, (n, 1)), 5 * layers / n**2))
    labels = [f"{i},{j}" for i in range(n) for j in range(n)]
    space = FiniteMetricSpace(labels=labels, coords=coords)

    ideal = FiniteMarkovChain(space, _layered_kernel(n, down=2 / 3))
    perturbed = FiniteMarkovChain(space, _layered_kernel(n, down=1 / 3))
    return ChainPair(ideal, perturbed)


def tent_index(i: int, n: int) -> int:
    """Tent map on the grid {k / 2^n}, acting on the integer k."""
    size = 2**n
    if not 0 <= i < size:
        raise ValueError(f"State {i} is outside 0..{size - 1}")
    return 2 * i if i < size // 2 else 2 * (size - 1 - i)


def tent_map(x: float, n: int) -> float:
    """G(x) = 2x for x < 1/2, else 2(1 - 2^-n - x), on the dyadic grid of resolution 2^-n."""
    scaled = x * 2**n
    if scaled != int(scaled):
        raise ValueError(f"{x!r} is not on the grid of resolution 2^-{n}")
    return tent_index(int(scaled), n) / 2**n


def _tent_kernel(n: int, biased: bool) -> sparse.csr_array:
    size = 2**n
    states = np.arange(size)
    image = np.where(states < size // 2, 2 * states, 2 * (size - 1 - states))
    if biased:
        # The appended bit repeats the bit to its left with probability 3/4
        keep_zero = ((image >> 1) & 1) == 0
        low = np.where(keep_zero, 0.75, 0.25)
    else:
        low = np.full(size, 0.5)
    rows = np.concatenate((states, states))
    cols = np.concatenate((image, image + 1))
    return sparse.csr_array((np.concatenate((low, 1 - low)), (rows, cols)), shape=(size, size))


def divergent_pair(n: int) -> ChainPair:
    """
    Noisy tent map on {i / 2^n}: double, fold, append a random low bit.

    The ideal chain appends a fair bit; the perturbed chain copies the bit to
    its left with probability 3/4.
    """
    validate_params("divergent", n)
    size = 2**n
    space = FiniteMetricSpace(coords=(np.arange(size) / size).reshape(-1, 1))
    ideal = FiniteMarkovChain(space, _tent_kernel(n, biased=False))
    perturbed = FiniteMarkovChain(space, _tent_kernel(n, biased=True))
    return ChainPair(ideal, perturbed)


def build_pair(family: str, n: int) -> ChainPair:
    builders = {
        "convergent": convergent_pair,
        "neutral": neutral_pair,
        "divergent": divergent_pair,
    }
    validate_params(family, n)
    return builders[family](n)


def adjacent_pairs(family: str, n: int) -> list[tuple[int, int]]:
    """
    State pairs that cover the Lipschitz condition via the triangle inequality.

    convergent: neighbours on the circle; neutral: same angle, adjacent
    layers; divergent: neighbouring grid points.
    """
    validate_params(family, n)
    if family == "convergent":
        return [(j, (j + 1) % n) for j in range(n)]
    if family == "neutral":
        return [
            (neutral_state(i, j, n), neutral_state(i + 1, j, n))
            for i in range(n - 1)
            for j in range(n)
        ]
    return [(i, i + 1) for i in range(2**n - 1)]


def _grid_event(n: int, intervals) -> np.ndarray:
    points = np.arange(2**n) / 2**n
    inside = np.zeros(points.size, dtype=bool)
    for lo, hi in intervals:
        inside |= (points >= lo) & (points < hi)
    return np.flatnonzero(inside)


def verify_divergent_separation(n: int, t: int, start: int = 0) -> dict:
    """
    Probabilities that separate the perturbed tent chain from uniform.

    After t >= n steps the perturbed chain sits in A = [0, 1/4) u [3/4, 1)
    with probability 3/4, while the ideal chain is uniform and gives the
    1/12-enlargement A' = [0, 1/3) u [2/3, 1) only about 2/3.
    """
    validate_params("divergent", n)
    if t < n:
        raise ValueError(f"t must be at least n = {n}, got {t}")
    pair = divergent_pair(n)

    event = _grid_event(n, [(0, 0.25), (0.75, 1)])
    enlarged = _grid_event(n, [(0, 1 / 3), (2 / 3, 1)])
    perturbed_law = t_step_distribution(pair.perturbed, start, t)
    ideal_law = t_step_distribution(pair.ideal, start, t)
    uniform = Distribution.uniform(pair.ideal.space)

    return {
        "n": n,
        "t": t,
        "start": start,
        "perturbed_event_probability": perturbed_law.mass(event),
        "ideal_enlarged_probability": ideal_law.mass(enlarged),
        "enlarged_count": int(enlarged.size),
        "prohorov_to_stationary": prohorov_distance(
            perturbed_law, uniform, pair.ideal.space, 1.0
        ).value,
    }


def convergent_anchors(n: int, pi: Distribution, pi_hat: Distribution) -> dict:
    """
    Finite-n versions of the events behind the convergent gap.

    Pr[no reset in n/2 steps and one in n] for the ideal chain and
    Pr[no reset in n/2 steps] for the perturbed chain, next to their limits.
    """
    half = n // 2
    far_side = np.arange(half, n)
    stay_ideal = (1 - 1 / n) ** half
    return {
        "stationary_far_ideal": pi.mass(far_side),
        "stationary_far_perturbed": pi_hat.mass(far_side),
        "event_ideal": stay_ideal * (1 - stay_ideal),
        "event_perturbed": (1 - 4 / n) ** half,
        "anchor_ideal": CONVERGENT_IDEAL_ANCHOR,
        "anchor_perturbed": CONVERGENT_PERTURBED_ANCHOR,
    }


def verify_regime_tightness(
    family: str,
    n: int,
    t_max: int | None = None,
    logger: logging.Logger | None = None,
) -> CounterexampleReport:
    """
    Measure one family against the theorem's budget.

    Args:
        family: convergent, neutral or divergent
        n: Size parameter of the family
        t_max: Horizon for the tau1 search (defaults to 50 n)
        logger: Optional logger for progress messages

    Returns:
        CounterexampleReport with the per-row perturbation, tau1, the budget
        for the family's C and epsilon, and the gap between stationary laws
    """
    log = get_logger(logger, "counterexamples")
    pair = build_pair(family, n)
    lam, family_c, epsilon = FAMILY_LAMBDA[family], FAMILY_C[family], FAMILY_EPSILON[family]
    log.info(f"{family} family, n={n}: {pair.ideal.size} states")

    delta_actual, _ = kernel_perturbation(pair, lam)
    tau1 = variation_threshold_time(pair.ideal, t_max or 50 * n, logger=logger).tau1
    report = delta_budget(lam, family_c, epsilon, max(tau1, 1))

    pi = stationary_distribution(pair.ideal, logger=logger)
    pi_hat = stationary_distribution(pair.perturbed, logger=logger)
    gap = stationary_gap(pi, pi_hat, lam)

    extras = {
        "measured_C": kernel_lipschitz_constant(pair.ideal, lam, adjacent_pairs(family, n)),
    }
    if family == "convergent":
        extras.update(convergent_anchors(n, pi, pi_hat))
    if family in FAMILY_EPSILON_NOTES:
        extras["epsilon_note"] = FAMILY_EPSILON_NOTES[family]

    log.info(
        f"{family}: delta_actual={delta_actual:.6g}, budget={report.delta_budget:.6g}, "
        f"tau1={tau1}, gap={gap:.6g}"
    )
    return CounterexampleReport(
        family=family,
        n=n,
        lam=lam,
        C=family_c,
        tau1=tau1,
        delta_actual=delta_actual,
        regime_report=report,
        gap=gap,
        gap_metric="tv" if lam == 0 else f"prohorov_{lam:g}",
        extras=extras,
    )

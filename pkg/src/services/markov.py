"""
Analysis of finite Markov chains: t-step distributions, stationary
distributions, the variation threshold time tau1, kernel Lipschitz constants
and the coupled simulation of an ideal/perturbed chain pair.
"""

import logging
from itertools import combinations

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from config.constants import (
    DENSE_POWER_MAX_STATES,
    DIRECT_SOLVE_MAX_STATES,
    METRIC_TOLERANCE,
    POWER_ITERATION_MAX_STEPS,
    STATIONARY_TOLERANCE,
    TAU1_THRESHOLD,
    TV_PIVOTS,
)
from src.models.chain import ChainPair, DivergenceTrace, FiniteMarkovChain
from src.models.metric_space import Distribution
from src.models.results import Tau1Result
from src.services.prohorov import prohorov_distance, tv_distance
from src.services.regime import delta_budget
from src.utils.errors import HorizonExceededError, InstanceTooLargeError, NonErgodicChainError
from src.utils.logging import get_logger
from src.utils.rng import run_indexed


def t_step_distribution(chain: FiniteMarkovChain, x: int, t: int) -> Distribution:
    """Row x of P^t by t vector-matrix products."""
    if int(t) != t or t < 0:
        raise ValueError(f"t must be a nonnegative integer, got {t!r}")
    x = chain.check_state(x)
    weights = np.zeros(chain.size)
    weights[x] = 1.0
    for _ in range(int(t)):
        weights = chain.push(weights)
    return Distribution(chain.space, weights)


def support_graph(chain: FiniteMarkovChain) -> nx.DiGraph:
    """Directed graph with an edge x -> y whenever P(x, y) > 0."""
    return nx.from_scipy_sparse_array(chain.kernel, create_using=nx.DiGraph)


def is_ergodic(chain: FiniteMarkovChain) -> bool:
    """Irreducible and aperiodic, read off the support graph."""
    graph = support_graph(chain)
    return nx.is_strongly_connected(graph) and nx.is_aperiodic(graph)


def _residual(chain: FiniteMarkovChain, weights: np.ndarray) -> float:
    return float(np.abs(chain.push(weights) - weights).sum())


def _direct_solve(chain: FiniteMarkovChain) -> np.ndarray:
    # (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    size = chain.size
    system = (chain.kernel.T - sparse.eye(size, format="csr")).tocsr()
    system = sparse.vstack(
        [system[: size - 1, :], sparse.csr_array(np.ones((1, size)))], format="csc"
    )
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    return np.asarray(sparse_linalg.spsolve(system, rhs)).reshape(-1)


def _power_iteration(chain: FiniteMarkovChain, start: np.ndarray, tol: float) -> np.ndarray:
    weights = start
    for _ in range(POWER_ITERATION_MAX_STEPS):
        following = chain.push(weights)
        if np.abs(following - weights).sum() <= tol:
            return following
        weights = following
    raise RuntimeError(
        f"Power iteration did not reach tolerance {tol:g} in {POWER_ITERATION_MAX_STEPS} steps"
    )


def stationary_distribution(
    chain: FiniteMarkovChain,
    tol: float = STATIONARY_TOLERANCE,
    logger: logging.Logger | None = None,
) -> Distribution:
    """
    Stationary distribution of an ergodic chain.

    Direct sparse solve up to 2000 states, power iteration above that (or
    when the direct solution misses the tolerance).

    Raises:
        NonErgodicChainError: if the support graph is reducible or periodic
    """
    log = get_logger(logger, "markov")
    if not is_ergodic(chain):
        raise NonErgodicChainError(
            f"Chain with {chain.size} states is not ergodic; no unique stationary distribution"
        )

    if chain.size <= DIRECT_SOLVE_MAX_STATES:
        weights = _direct_solve(chain)
        weights = np.clip(weights, 0.0, None)
        weights /= weights.sum()
        if _residual(chain, weights) <= tol:
            return Distribution(chain.space, weights)
        log.warning(
            f"Direct solve residual {_residual(chain, weights):.3g} above {tol:g}; refining by power iteration"
        )
        start = weights
    else:
        log.info(f"Power iteration for stationary distribution on {chain.size} states")
        start = np.full(chain.size, 1.0 / chain.size)

    weights = _power_iteration(chain, start, tol)
    return Distribution(chain.space, weights / weights.sum())


def _row_tv(rows: np.ndarray, row: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(rows - row).sum(axis=1)


def max_pair_tv(rows: np.ndarray, hint: tuple[int, int] | None = None) -> tuple[float, tuple[int, int]]:
    """
    Exact max_{x,y} TV(rows[x], rows[y]).

    TV is a metric, so distances to a handful of farthest-first pivot rows
    give the upper bound min_k TV(x, k) + TV(k, y); only pairs whose bound
    beats the current best are evaluated exactly.
    """
    size = rows.shape[0]
    if size < 2:
        return 0.0, (0, 0)

    best, best_pair = 0.0, (0, 0)
    if hint is not None:
        best, best_pair = float(_row_tv(rows[[hint[1]]], rows[hint[0]])[0]), hint

    count = min(TV_PIVOTS, size)
    to_pivot = np.empty((size, count))
    pivot = hint[0] if hint is not None else 0
    nearest = np.full(size, np.inf)
    for k in range(count):
        to_pivot[:, k] = _row_tv(rows, rows[pivot])
        far = int(np.argmax(to_pivot[:, k]))
        if to_pivot[far, k] > best:
            best, best_pair = float(to_pivot[far, k]), (pivot, far)
        nearest = np.minimum(nearest, to_pivot[:, k])
        pivot = int(np.argmax(nearest))

    slack = METRIC_TOLERANCE
    for x in range(size - 1):
        bound = np.minimum((to_pivot[x + 1 :] + to_pivot[x]).min(axis=1), 1.0)
        candidates = np.flatnonzero(bound > best + slack) + x + 1
        if candidates.size == 0:
            continue
        values = _row_tv(rows[candidates], rows[x])
        k = int(np.argmax(values))
        if values[k] > best:
            best, best_pair = float(values[k]), (x, int(candidates[k]))
    return best, best_pair


def variation_threshold_time(
    chain: FiniteMarkovChain,
    t_max: int,
    threshold: float = TAU1_THRESHOLD,
    logger: logging.Logger | None = None,
) -> Tau1Result:
    """
    Smallest t <= t_max with max_{x,x'} TV(P^t(x,.), P^t(x',.)) <= threshold.

    Keeps every row of P^t and scans t upward.

    Raises:
        HorizonExceededError: carrying the max-pair TV profile for t = 0..t_max
    """
    log = get_logger(logger, "markov")
    if int(t_max) != t_max or t_max < 0:
        raise ValueError(f"t_max must be a nonnegative integer, got {t_max!r}")
    if chain.size > DENSE_POWER_MAX_STATES:
        raise InstanceTooLargeError(chain.size, DENSE_POWER_MAX_STATES)

    rows = np.eye(chain.size)
    profile: list[float] = []
    hint = None
    for t in range(int(t_max) + 1):
        if t:
            rows = chain.push(rows)
        value, hint = max_pair_tv(rows, hint)
        profile.append(value)
        if value <= threshold:
            log.info(f"tau1 = {t} on {chain.size} states (max-pair TV {value:.6g})")
            return Tau1Result(t, threshold, profile)

    log.warning(f"Variation threshold {threshold:.6g} not reached by t_max={t_max}")
    raise HorizonExceededError(int(t_max), threshold, profile)


def tv_to_stationary_profile(
    chain: FiniteMarkovChain,
    x: int,
    t_max: int,
    stationary: Distribution | None = None,
) -> list[float]:
    """TV(P^t(x, .), pi) for t = 0..t_max."""
    pi = stationary if stationary is not None else stationary_distribution(chain)
    x = chain.check_state(x)
    weights = np.zeros(chain.size)
    weights[x] = 1.0
    profile = []
    for t in range(int(t_max) + 1):
        if t:
            weights = chain.push(weights)
        profile.append(0.5 * float(np.abs(weights - pi.weights).sum()))
    return profile


def kernel_lipschitz_constant(
    chain: FiniteMarkovChain,
    lam: float,
    pairs="all",
    logger: logging.Logger | None = None,
) -> float:
    """
    max over state pairs of rho_lambda(P(x,.), P(x',.)) / d(x, x').

    Args:
        chain: Chain with at least two states
        lam: Spatial scale lambda
        pairs: "all" for every pair, or an iterable of (x, x') pairs such as
            adjacent states when the triangle inequality covers the rest

    Returns:
        The largest ratio over the selected pairs
    """
    log = get_logger(logger, "markov")
    if chain.size < 2:
        raise ValueError("A Lipschitz constant needs at least two states")

    selected = combinations(range(chain.size), 2) if pairs == "all" else pairs
    rows: dict[int, Distribution] = {}

    def row(x: int) -> Distribution:
        if x not in rows:
            rows[x] = chain.row(x)
        return rows[x]

    constant = 0.0
    checked = 0
    for x, y in selected:
        x, y = chain.check_state(x), chain.check_state(y)
        if x == y:
            raise ValueError(f"Pair ({x}, {y}) repeats a state")
        distance = chain.space.distance(x, y)
        if distance <= METRIC_TOLERANCE:
            raise ValueError(f"States {x} and {y} are distinct but at distance zero")
        value = prohorov_distance(row(x), row(y), chain.space, lam).value
        constant = max(constant, value / distance)
        checked += 1

    log.info(f"Lipschitz constant {constant:.6g} over {checked} pairs at lambda={lam:g}")
    return constant


def kernel_perturbation(pair: ChainPair, lam: float) -> tuple[float, int]:
    """max_x rho_lambda(P-hat(x,.), P(x,.)) over perturbed states, with the maximising state."""
    worst, state = 0.0, 0
    for x in range(pair.perturbed.size):
        value = prohorov_distance(
            pair.embedded_row(x), pair.ideal.row(int(pair.embedding[x])), pair.ideal.space, lam
        ).value
        if value > worst:
            worst, state = value, x
    return worst, state


class _CouplingSampler:
    """Cached Ky Fan optimal couplings of the two kernels, per state pair."""

    def __init__(self, pair: ChainPair, lam: float):
        self.pair = pair
        self.lam = lam
        self._inverse = np.full(pair.ideal.size, -1, dtype=np.intp)
        self._inverse[pair.embedding] = np.arange(pair.perturbed.size)
        self._cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def table(self, x_hat: int, x: int):
        key = (x_hat, x)
        if key not in self._cache:
            witness = prohorov_distance(
                self.pair.embedded_row(x_hat), self.pair.ideal.row(x), self.pair.ideal.space, self.lam
            ).witness_coupling
            rows, cols, mass = witness.pairs()
            cumulative = np.cumsum(mass)
            cumulative /= cumulative[-1]
            self._cache[key] = (self._inverse[rows], cols, cumulative)
        return self._cache[key]

    def draw(self, x_hat: int, x: int, uniforms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows, cols, cumulative = self.table(x_hat, x)
        picks = np.minimum(np.searchsorted(cumulative, uniforms, side="right"), cumulative.size - 1)
        return rows[picks], cols[picks]


def coupled_divergence_simulation(
    pair: ChainPair,
    t: int,
    runs: int,
    seed: int,
    lam: float = 0.0,
    start: int = 0,
    workers: int | None = None,
    logger: logging.Logger | None = None,
) -> DivergenceTrace:
    """
    Run the perturbed and ideal chains side by side under optimal couplings.

    At each step the pair (X-hat, X) moves jointly according to the Ky Fan
    optimal witness of rho_lambda(P-hat(X-hat,.), P(X,.)). Each run draws its
    uniforms from its own stream, so the trace does not depend on `workers`.

    Returns:
        DivergenceTrace with D_i = d(X-hat_i, X_i) for i = 0..t
    """
    log = get_logger(logger, "markov")
    if int(t) != t or t < 0:
        raise ValueError(f"t must be a nonnegative integer, got {t!r}")
    if int(runs) != runs or runs < 1:
        raise ValueError(f"runs must be a positive integer, got {runs!r}")
    start = pair.perturbed.check_state(start)

    uniforms = np.vstack(run_indexed(lambda _, rng: rng.random(int(t)), int(runs), seed, workers))
    uniforms = uniforms.reshape(int(runs), int(t))

    sampler = _CouplingSampler(pair, lam)
    x_hat = np.full(int(runs), start, dtype=np.intp)
    x = np.full(int(runs), pair.embedding[start], dtype=np.intp)
    space = pair.ideal.space

    distances = np.zeros((int(runs), int(t) + 1))
    distances[:, 0] = space.paired_distances(pair.embedding[x_hat], x)
    for step in range(int(t)):
        keys, groups = np.unique(np.stack([x_hat, x], axis=1), axis=0, return_inverse=True)
        groups = groups.reshape(-1)
        order = np.argsort(groups, kind="stable")
        splits = np.cumsum(np.bincount(groups, minlength=len(keys)))[:-1]
        next_hat, next_x = np.empty_like(x_hat), np.empty_like(x)
        for (a, b), members in zip(keys, np.split(order, splits)):
            next_hat[members], next_x[members] = sampler.draw(int(a), int(b), uniforms[members, step])
        x_hat, x = next_hat, next_x
        distances[:, step + 1] = space.paired_distances(pair.embedding[x_hat], x)

    log.info(f"Coupled simulation: {runs} runs x {t} steps, {len(sampler._cache)} state pairs")
    return DivergenceTrace(np.arange(int(t) + 1), distances)


def verify_theorem_conclusion(
    pair: ChainPair,
    lam: float,
    C: float,
    epsilon: float,
    start: int = 0,
    t_max: int = 10_000,
    logger: logging.Logger | None = None,
) -> dict:
    """
    Check the positive direction of the approximation theorem on one pair.

    When the measured per-step perturbation fits inside the budget, the
    perturbed t_eps-step law from `start` must be within epsilon of pi.
    """
    log = get_logger(logger, "markov")
    delta_actual, worst_state = kernel_perturbation(pair, lam)
    tau1 = variation_threshold_time(pair.ideal, t_max, logger=logger).tau1
    report = delta_budget(lam, C, epsilon, max(tau1, 1))
    pi = stationary_distribution(pair.ideal, logger=logger)

    law = t_step_distribution(pair.perturbed, start, report.t_epsilon)
    embedded = Distribution(pair.ideal.space, pair.embed(law.weights))
    distance = prohorov_distance(embedded, pi, pair.ideal.space, lam).value

    within_budget = delta_actual <= report.delta_budget
    holds = distance <= epsilon
    if within_budget and not holds:
        log.warning(f"Perturbation {delta_actual:.3g} within budget but distance {distance:.3g} > {epsilon}")

    return {
        **report.to_dict(),
        "delta_actual": delta_actual,
        "worst_state": worst_state,
        "distance_to_stationary": distance,
        "within_budget": within_budget,
        "conclusion_holds": holds,
        "consistent": holds or not within_budget,
    }


def stationary_gap(pi: Distribution, pi_hat: Distribution, lam: float) -> float:
    """rho_lambda between two stationary laws (plain TV at lambda = 0)."""
    if lam == 0:
        return tv_distance(pi, pi_hat)
    return prohorov_distance(pi, pi_hat, pi.space, lam).value

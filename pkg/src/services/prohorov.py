"""
Total variation, transport deficiency and parametric Prohorov distances on
finite metric spaces.

The exact solver rests on the coupling characterisation: the parametric
Prohorov distance is the smallest Ky Fan distance over couplings, and for a
spatial threshold s the least mass a coupling must put on pairs farther apart
than s is one minus a maximum flow through the s-admissible pairs.
"""

import numpy as np
import networkx as nx
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from config.constants import BRUTEFORCE_MAX_POINTS, FLOW_QUANTUM_BITS, METRIC_TOLERANCE
from src.models.metric_space import Coupling, Distribution, FiniteMetricSpace
from src.models.results import ProhorovResult
from src.utils.errors import InstanceTooLargeError

SCALE = 2**FLOW_QUANTUM_BITS


def _check_pair(p: Distribution, q: Distribution, space: FiniteMetricSpace | None = None):
    if not p.space.compatible_with(q.space):
        raise ValueError("Distributions live on different spaces")
    if space is not None and not space.compatible_with(p.space):
        raise ValueError("Distributions do not live on the given space")


def tv_distance(p: Distribution, q: Distribution) -> float:
    """Half the l1 distance, i.e. sup_A |p(A) - q(A)|."""
    _check_pair(p, q)
    return 0.5 * float(np.abs(p.weights - q.weights).sum())


def _step_infimum(levels: np.ndarray, heights: np.ndarray, lam: float) -> tuple[float, int]:
    """
    inf{eps : height(lam * eps) <= eps} for a non-increasing step function.

    `heights[k]` is the value on [levels[k], levels[k+1]). Ties go to the
    smallest level.
    """
    if lam == 0:
        return float(heights[0]), 0
    candidates = np.maximum(levels / lam, heights)
    index = int(np.argmin(candidates))
    return float(candidates[index]), index


def _network_flow(supply: list[int], demand: list[int], admissible: np.ndarray):
    """Max flow through the admissible pairs with networkx; returns (value, units)."""
    graph = nx.DiGraph()
    for a, units in enumerate(supply):
        graph.add_edge("source", ("p", a), capacity=units)
    for b, units in enumerate(demand):
        graph.add_edge(("q", b), "sink", capacity=units)
    rows, cols = np.nonzero(admissible)
    # Middle edges carry no capacity attribute: networkx treats them as unbounded
    graph.add_edges_from((("p", int(a)), ("q", int(b))) for a, b in zip(rows, cols))

    value, flow = nx.maximum_flow(graph, "source", "sink")

    routed = np.zeros(admissible.shape)
    for a in range(len(supply)):
        for node, units in flow.get(("p", a), {}).items():
            if units:
                routed[a, node[1]] = units
    return value, routed


def _interval_flow(supply, demand, source_order, sink_order, lo, hi):
    """
    Max flow when sorted sources reach sorted sinks lo[k]..hi[k] with both ends non-decreasing.

    Serving sources left to right, each from the leftmost sink with demand
    left, is optimal for such staircase graphs.
    """
    remaining = [demand[b] for b in sink_order]
    routed = np.zeros((len(supply), len(demand)))
    value = 0
    pointer = 0
    for rank, a in enumerate(source_order):
        if lo[rank] > hi[rank]:
            continue
        left = supply[a]
        pointer = max(pointer, int(lo[rank]))
        while left and pointer <= hi[rank]:
            take = min(left, remaining[pointer])
            if take:
                routed[a, sink_order[pointer]] += take
                remaining[pointer] -= take
                left -= take
                value += take
            if remaining[pointer] == 0:
                pointer += 1
    return value, routed


class TransportProblem:
    """
    Threshold-gated transport between two distributions.

    Only the supports enter the flow network; masses are quantised to
    integers (2**48 units per unit of probability) so that the max-flow is
    exact on the quantised instance. Components whose points are collinear
    are solved by a linear greedy pass instead of a general max-flow.
    """

    def __init__(self, p: Distribution, q: Distribution, space: FiniteMetricSpace | None = None):
        _check_pair(p, q, space)
        self.p = p
        self.q = q
        self.space = p.space
        self.sources = p.support
        self.sinks = q.support
        self.block = self.space.pair_distances(self.sources, self.sinks)
        self._supply = [int(v) for v in np.rint(p.weights[self.sources] * SCALE)]
        self._demand = [int(v) for v in np.rint(q.weights[self.sinks] * SCALE)]
        self._cache: dict[float, tuple[float, np.ndarray]] = {}

    def levels(self, upper: float | None = None) -> np.ndarray:
        """Distinct pair distances (always including 0), optionally capped at `upper`."""
        values = np.unique(np.concatenate(([0.0], self.block.ravel())))
        if upper is not None:
            values = values[values <= upper]
        return values

    def _only_identical_points(self, admissible: np.ndarray) -> bool:
        same = self.sources[:, None] == self.sinks[None, :]
        return bool(np.array_equal(admissible, same))

    def solve(self, threshold: float) -> tuple[float, np.ndarray]:
        """
        Return (deficiency, routed) for one spatial threshold.

        `routed[a, b]` is the probability sent from sources[a] to sinks[b]
        along admissible pairs.
        """
        threshold = float(threshold)
        if threshold in self._cache:
            return self._cache[threshold]

        admissible = self.block <= threshold
        p_s = self.p.weights[self.sources]
        q_s = self.q.weights[self.sinks]

        if admissible.all():
            result = (0.0, np.outer(p_s, q_s))
        elif self._only_identical_points(admissible):
            # Only X = Y is admissible: the optimal-coupling theorem gives TV
            routed = np.where(admissible, np.minimum(p_s[:, None], q_s[None, :]), 0.0)
            result = (tv_distance(self.p, self.q), routed)
        else:
            result = self._max_flow(admissible)

        self._cache[threshold] = result
        return result

    def _max_flow(self, admissible: np.ndarray) -> tuple[float, np.ndarray]:
        # Flow splits over connected components of the admissible bipartite graph
        n_sources = admissible.shape[0]
        gated = sparse.csr_array(admissible.astype(np.int8))
        adjacency = sparse.bmat([[None, gated], [gated.T, None]], format="csr")
        count, labels = connected_components(adjacency, directed=False)

        routed = np.zeros(admissible.shape)
        total = 0
        for component in range(count):
            sources = np.flatnonzero(labels[:n_sources] == component)
            sinks = np.flatnonzero(labels[n_sources:] == component)
            if sources.size == 0 or sinks.size == 0:
                continue
            supply = [self._supply[a] for a in sources]
            demand = [self._demand[b] for b in sinks]
            block = admissible[np.ix_(sources, sinks)]

            intervals = self._line_intervals(sources, sinks, block)
            if intervals is not None:
                value, units = _interval_flow(supply, demand, *intervals)
            else:
                value, units = _network_flow(supply, demand, block)
            routed[np.ix_(sources, sinks)] = units / SCALE
            total += value

        deficiency = min(max(1.0 - total / SCALE, 0.0), 1.0)
        return deficiency, routed

    def _line_intervals(self, sources: np.ndarray, sinks: np.ndarray, block: np.ndarray):
        """
        Sorted orders and sink intervals when the points lie on one line.

        On a line every source reaches a contiguous run of sinks, and the runs
        move monotonically with the source position. Returns None otherwise.
        """
        coords = self.space.coords
        if coords is None or sources.size < 2 or sinks.size < 2:
            return None
        points = np.vstack((coords[self.sources[sources]], coords[self.sinks[sinks]]))
        offsets = points - points[0]
        lengths = np.linalg.norm(offsets, axis=1)
        far = int(np.argmax(lengths))
        if lengths[far] == 0:
            return None
        direction = offsets[far] / lengths[far]
        positions = offsets @ direction
        off_line = np.linalg.norm(offsets - np.outer(positions, direction), axis=1)
        if off_line.max() > METRIC_TOLERANCE * max(1.0, lengths[far]):
            return None

        source_order = np.argsort(positions[: sources.size], kind="stable")
        sink_order = np.argsort(positions[sources.size :], kind="stable")
        ordered = block[np.ix_(source_order, sink_order)]

        reach = ordered.any(axis=1)
        lo = np.where(reach, np.argmax(ordered, axis=1), sink_order.size)
        hi = np.where(reach, sink_order.size - 1 - np.argmax(ordered[:, ::-1], axis=1), -1)
        contiguous = (ordered.sum(axis=1) == np.maximum(hi - lo + 1, 0)).all()
        reached_lo, reached_hi = lo[reach], hi[reach]
        monotone = np.all(np.diff(reached_lo) >= 0) and np.all(np.diff(reached_hi) >= 0)
        if not (contiguous and monotone):
            return None
        return source_order, sink_order, lo, hi

    def witness(self, threshold: float) -> Coupling:
        """Coupling that routes the max-flow and spreads the remainder independently."""
        return self._coupling(self.solve(threshold)[1])

    def diagonal_witness(self) -> Coupling:
        """Coupling that keeps min(p, q) in place, so Pr[X != Y] is the total variation."""
        same = self.sources[:, None] == self.sinks[None, :]
        p_s = self.p.weights[self.sources]
        q_s = self.q.weights[self.sinks]
        return self._coupling(np.where(same, np.minimum(p_s[:, None], q_s[None, :]), 0.0))

    def _coupling(self, routed: np.ndarray) -> Coupling:
        p_s = self.p.weights[self.sources]
        q_s = self.q.weights[self.sinks]
        left = np.clip(p_s - routed.sum(axis=1), 0.0, None)
        right = np.clip(q_s - routed.sum(axis=0), 0.0, None)

        joint = routed.copy()
        if right.sum() > 0:
            joint += np.outer(left, right) / right.sum()

        a, b = np.nonzero(joint)
        size = self.space.size
        matrix = sparse.csr_array(
            (joint[a, b], (self.sources[a], self.sinks[b])), shape=(size, size)
        )
        return Coupling(matrix, self.p, self.q)


def transportation_deficiency(
    p: Distribution, q: Distribution, space: FiniteMetricSpace, threshold: float
) -> float:
    """
    Least mass any coupling of p and q must put on pairs farther apart than `threshold`.

    Equals 1 minus the maximum flow from p to q through pairs at distance <= threshold.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    return TransportProblem(p, q, space).solve(threshold)[0]


def prohorov_distance(
    p: Distribution, q: Distribution, space: FiniteMetricSpace, lam: float
) -> ProhorovResult:
    """
    Parametric Prohorov distance rho_lambda(p, q) with a Ky Fan optimal witness.

    The deficiency is a non-increasing step function of the threshold, so the
    answer is min_k max(t_k / lambda, deficiency(t_k)) over the distinct
    distances t_k. Only t_k <= lambda can matter (the answer never exceeds 1),
    and the crossing of the two monotone sequences is found by bisection, so
    only O(log K) flows are solved.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    problem = TransportProblem(p, q, space)

    if lam == 0:
        # No spatial slack: distinct points at distance zero still count as distinct
        return ProhorovResult(tv_distance(p, q), problem.diagonal_witness(), 0.0, lam)

    levels = problem.levels(upper=lam)

    def deficiency(k: int) -> float:
        return problem.solve(levels[k])[0]

    # First level where t_k / lambda >= deficiency(t_k)
    lo, hi = 0, len(levels)
    while lo < hi:
        mid = (lo + hi) // 2
        if levels[mid] / lam >= deficiency(mid):
            hi = mid
        else:
            lo = mid + 1
    crossing = lo

    best_value, best_level = None, None
    if crossing > 0:
        best_value, best_level = deficiency(crossing - 1), crossing - 1
    if crossing < len(levels):
        rising = levels[crossing] / lam
        if best_value is None or rising < best_value:
            best_value, best_level = rising, crossing

    threshold = float(levels[best_level])
    return ProhorovResult(best_value, problem.witness(threshold), threshold, lam)


def kyfan_value(c: Coupling, space: FiniteMetricSpace, lam: float) -> float:
    """
    Ky Fan distance inf{eps : Pr[d(X, Y) > lambda * eps] <= eps} of a coupling.

    Evaluated exactly at the breakpoints of the pair-distance law under c.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if not space.compatible_with(c.space):
        raise ValueError("Coupling does not live on the given space")

    distances, mass = c.pair_distances()
    order = np.argsort(distances, kind="stable")
    distances, mass = distances[order], mass[order]

    levels = np.unique(np.concatenate(([0.0], distances)))
    # Mass strictly beyond each level
    beyond = mass.sum() - np.cumsum(mass)
    positions = np.searchsorted(distances, levels, side="right")
    tails = np.where(positions > 0, beyond[np.maximum(positions - 1, 0)], mass.sum())
    tails = np.clip(tails, 0.0, None)

    return _step_infimum(levels, tails, lam)[0]


def _subset_table(values: np.ndarray) -> np.ndarray:
    """Sum of `values` over every subset, indexed by bitmask."""
    table = np.zeros(1)
    for value in values:
        table = np.concatenate((table, table + value))
    return table


def _neighbourhood_table(near: np.ndarray) -> np.ndarray:
    """Bitmask of the enlargement of every subset A, indexed by the bitmask of A."""
    size = near.shape[0]
    weights = np.left_shift(np.int64(1), np.arange(size, dtype=np.int64))
    reach = near.astype(np.int64) @ weights
    table = np.zeros(1, dtype=np.int64)
    for x in range(size):
        table = np.concatenate((table, table | reach[x]))
    return table


def prohorov_bruteforce(
    p: Distribution, q: Distribution, space: FiniteMetricSpace, lam: float
) -> float:
    """
    Definitional oracle: smallest eps with p(A) <= q(A^{lambda eps}) + eps for every subset A.

    Enumerates all 2**n subsets; no flow solver is involved. With lambda = 0
    there is no spatial slack and A^0 is A itself.
    """
    _check_pair(p, q, space)
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if space.size > BRUTEFORCE_MAX_POINTS:
        raise InstanceTooLargeError(space.size, BRUTEFORCE_MAX_POINTS)

    p_mass = _subset_table(p.weights)
    q_mass = _subset_table(q.weights)

    def violation(near: np.ndarray) -> float:
        # max_A p(A) - q(A^t); A = {} gives 0
        worst = float(np.max(p_mass - q_mass[_neighbourhood_table(near)]))
        return min(max(worst, 0.0), 1.0)

    if lam == 0:
        return violation(np.eye(space.size, dtype=bool))

    dist = space.dist
    levels = np.unique(np.concatenate(([0.0], dist.ravel())))
    levels = levels[levels <= lam]

    # On [t_k / lambda, t_{k+1} / lambda) the condition reads violation(t_k) <= eps
    best = 1.0
    for t in levels:
        best = min(best, max(t / lam, violation(dist <= t)))
    return float(best)

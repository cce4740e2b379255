from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from config.constants import (
    COUPLING_TOLERANCE,
    DISTRIBUTION_TOLERANCE,
    METRIC_TOLERANCE,
)
from src.utils.errors import MetricAxiomError


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def check_metric_axioms(dist: np.ndarray, tolerance: float = METRIC_TOLERANCE) -> None:
    """
    Validate a square distance matrix against the metric axioms.

    Zero is allowed off the diagonal (pseudometric); everything else is strict
    up to `tolerance`, taken relative to the largest distance.

    Raises:
        MetricAxiomError: naming the first violated axiom and the offending indices
    """
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise MetricAxiomError(f"Distance matrix must be square, got shape {dist.shape}")
    if not np.all(np.isfinite(dist)):
        raise MetricAxiomError("Distance matrix contains non-finite entries")

    scale = tolerance * max(1.0, float(np.max(np.abs(dist), initial=0.0)))

    diagonal = np.abs(np.diag(dist))
    if np.any(diagonal > scale):
        i = int(np.argmax(diagonal))
        raise MetricAxiomError(f"dist[{i}][{i}] = {dist[i, i]!r} is not zero")

    if np.any(dist < -scale):
        i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
        raise MetricAxiomError(f"dist[{i}][{j}] = {dist[i, j]!r} is negative")

    asymmetry = np.abs(dist - dist.T)
    if np.any(asymmetry > scale):
        i, j = np.unravel_index(int(np.argmax(asymmetry)), dist.shape)
        raise MetricAxiomError(f"dist[{i}][{j}] != dist[{j}][{i}]")

    for k in range(dist.shape[0]):
        # dist[i][j] <= dist[i][k] + dist[k][j] for every i, j through pivot k
        excess = dist - (dist[:, k][:, None] + dist[k, :][None, :])
        if np.any(excess > scale):
            i, j = np.unravel_index(int(np.argmax(excess)), dist.shape)
            raise MetricAxiomError(
                f"Triangle inequality fails: dist[{i}][{j}] > dist[{i}][{k}] + dist[{k}][{j}]"
            )


class FiniteMetricSpace:
    """
    Labelled points with a pairwise distance function.

    A space is built either from Euclidean coordinates (distances derived on
    demand, so large coordinate spaces never hold a dense matrix) or from an
    explicit distance matrix checked against the metric axioms.
    """

    def __init__(self, labels=None, coords=None, dist=None, validate=True):
        if coords is None and dist is None:
            raise ValueError("A metric space needs coordinates or a distance matrix")

        self._coords = None
        self._dist = None

        if coords is not None:
            coords = np.array(coords, dtype=float)
            if coords.ndim != 2 or coords.shape[0] == 0:
                raise ValueError("Coordinates must be a nonempty list of equal-length vectors")
            self._coords = _frozen(coords)

        if dist is not None:
            dist = np.array(dist, dtype=float)
            if validate:
                check_metric_axioms(dist)
            if self._coords is not None:
                if dist.shape[0] != self._coords.shape[0]:
                    raise MetricAxiomError("Distance matrix and coordinates disagree in size")
                euclidean = cdist(self._coords, self._coords)
                scale = METRIC_TOLERANCE * max(1.0, float(np.max(euclidean, initial=0.0)))
                if np.any(np.abs(dist - euclidean) > scale):
                    raise MetricAxiomError(
                        "Distance matrix does not match the Euclidean distances of the coordinates"
                    )
            self._dist = _frozen(dist)

        size = self._coords.shape[0] if self._coords is not None else self._dist.shape[0]
        if labels is None:
            labels = [str(i) for i in range(size)]
        labels = tuple(str(label) for label in labels)
        if len(labels) != size:
            raise ValueError(f"Expected {size} labels, got {len(labels)}")
        self.labels = labels

    @classmethod
    def from_matrix(cls, dist, labels=None):
        """Build a space from an explicit distance matrix (axioms checked)."""
        return cls(labels=labels, dist=dist)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def coords(self) -> np.ndarray | None:
        return self._coords

    @property
    def dimension(self) -> int | None:
        return None if self._coords is None else int(self._coords.shape[1])

    @cached_property
    def dist(self) -> np.ndarray:
        """Full distance matrix (materialised on first use for coordinate spaces)."""
        if self._dist is not None:
            return self._dist
        return _frozen(cdist(self._coords, self._coords))

    def pair_distances(self, rows, cols) -> np.ndarray:
        """Distance block between index lists `rows` and `cols`."""
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if self._dist is not None:
            return self._dist[np.ix_(rows, cols)]
        return cdist(self._coords[rows], self._coords[cols])

    def paired_distances(self, a, b) -> np.ndarray:
        """Elementwise distances d(a[k], b[k])."""
        a = np.asarray(a, dtype=np.intp)
        b = np.asarray(b, dtype=np.intp)
        if self._dist is not None:
            return self._dist[a, b]
        return np.linalg.norm(self._coords[a] - self._coords[b], axis=-1)

    def distance(self, i: int, j: int) -> float:
        return float(self.paired_distances([i], [j])[0])

    def max_distance(self) -> float:
        return float(np.max(self.dist, initial=0.0))

    def compatible_with(self, other: "FiniteMetricSpace") -> bool:
        return self is other or (self.size == other.size and self.labels == other.labels)

    def to_dict(self):
        """Convert to dict for JSON serialization."""
        states = []
        for index, label in enumerate(self.labels):
            state = {"label": label}
            if self._coords is not None:
                state["coords"] = [float(c) for c in self._coords[index]]
            states.append(state)
        data = {"states": states}
        if self._coords is None:
            data["dist"] = [[float(v) for v in row] for row in self._dist]
        return data

    @classmethod
    def from_dict(cls, data):
        """Create instance from a `{states: [{label, coords}], dist?}` dict."""
        states = data.get("states") or []
        if not states:
            raise ValueError("A metric space needs at least one state")
        labels = [s.get("label", str(i)) for i, s in enumerate(states)]
        has_coords = all("coords" in s for s in states)
        coords = [s["coords"] for s in states] if has_coords else None
        return cls(labels=labels, coords=coords, dist=data.get("dist"))

    def __repr__(self):
        kind = "euclidean" if self._coords is not None else "matrix"
        return f"FiniteMetricSpace(size={self.size}, kind={kind})"


class Distribution:
    """Probability vector over the points of a FiniteMetricSpace."""

    def __init__(self, space: FiniteMetricSpace, weights):
        weights = np.array(weights, dtype=float).reshape(-1)
        if weights.shape[0] != space.size:
            raise ValueError(
                f"Distribution has {weights.shape[0]} weights for a space of {space.size} points"
            )
        if not np.all(np.isfinite(weights)):
            raise ValueError("Distribution weights must be finite")
        if np.any(weights < -DISTRIBUTION_TOLERANCE):
            i = int(np.argmin(weights))
            raise ValueError(f"Weight {i} is negative: {weights[i]!r}")
        # Solver round-off below the tolerance is clipped
        weights = np.clip(weights, 0.0, None)

        total = float(weights.sum())
        if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
            raise ValueError(f"Distribution weights sum to {total!r}, not 1")

        self.space = space
        self.weights = _frozen(weights / total)

    @classmethod
    def point_mass(cls, space: FiniteMetricSpace, index: int):
        weights = np.zeros(space.size)
        weights[index] = 1.0
        return cls(space, weights)

    @classmethod
    def uniform(cls, space: FiniteMetricSpace):
        return cls(space, np.full(space.size, 1.0 / space.size))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def mass(self, indices) -> float:
        """Probability of the point set `indices`."""
        indices = np.asarray(list(indices), dtype=np.intp)
        return float(self.weights[indices].sum()) if indices.size else 0.0

    def to_dict(self):
        return {"weights": [float(w) for w in self.weights]}

    def __repr__(self):
        return f"Distribution(size={self.space.size}, support={self.support.size})"


class Coupling:
    """
    Joint law of a pair (X, Y) with prescribed marginals.

    The joint matrix is stored sparse; only pairs carrying mass are kept.
    """

    def __init__(self, joint, left_marginal: Distribution, right_marginal: Distribution):
        if not left_marginal.space.compatible_with(right_marginal.space):
            raise ValueError("Coupling marginals live on different spaces")

        joint = sparse.csr_array(joint, dtype=float)
        size = left_marginal.space.size
        if joint.shape != (size, size):
            raise ValueError(f"Joint matrix has shape {joint.shape}, expected ({size}, {size})")
        if joint.nnz and joint.data.min() < -COUPLING_TOLERANCE:
            raise ValueError("Joint matrix has negative entries")
        joint.data = np.clip(joint.data, 0.0, None)
        joint.eliminate_zeros()

        rows = np.asarray(joint.sum(axis=1)).reshape(-1)
        cols = np.asarray(joint.sum(axis=0)).reshape(-1)
        row_gap = np.max(np.abs(rows - left_marginal.weights), initial=0.0)
        col_gap = np.max(np.abs(cols - right_marginal.weights), initial=0.0)
        if row_gap > COUPLING_TOLERANCE:
            raise ValueError(f"Row sums differ from the left marginal by {row_gap:.3g}")
        if col_gap > COUPLING_TOLERANCE:
            raise ValueError(f"Column sums differ from the right marginal by {col_gap:.3g}")

        self.joint = joint
        self.left_marginal = left_marginal
        self.right_marginal = right_marginal

    @property
    def space(self) -> FiniteMetricSpace:
        return self.left_marginal.space

    @classmethod
    def identity(cls, p: Distribution):
        """The coupling X = Y of `p` with itself."""
        return cls(sparse.diags(p.weights).tocsr(), p, p)

    @classmethod
    def independent(cls, p: Distribution, q: Distribution):
        return cls(np.outer(p.weights, q.weights), p, q)

    def pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (rows, cols, mass) for every pair with positive mass."""
        coo = self.joint.tocoo()
        return coo.row.astype(np.intp), coo.col.astype(np.intp), coo.data

    def pair_distances(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (distance, mass) of every pair with positive mass."""
        rows, cols, mass = self.pairs()
        return self.space.paired_distances(rows, cols), mass

    def mass_beyond(self, threshold: float) -> float:
        """Pr[d(X, Y) > threshold] under this coupling."""
        distances, mass = self.pair_distances()
        return float(mass[distances > threshold].sum())

    def to_dict(self):
        rows, cols, mass = self.pairs()
        return {
            "pairs": [
                {"x": int(r), "y": int(c), "mass": float(m)}
                for r, c, m in zip(rows, cols, mass)
            ]
        }

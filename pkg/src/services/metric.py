import numpy as np

from src.models.metric_space import FiniteMetricSpace


def build_euclidean_space(coords, labels=None) -> FiniteMetricSpace:
    """
    Embed points in R^k and use Euclidean distance.

    Args:
        coords: Nonempty list of coordinate vectors sharing one dimension
        labels: Optional point labels (defaults to "0", "1", ...)

    Returns:
        FiniteMetricSpace whose distances are the pairwise Euclidean distances
    """
    vectors = [np.atleast_1d(np.asarray(c, dtype=float)) for c in coords]
    if not vectors:
        raise ValueError("At least one coordinate vector is required")

    dimension = vectors[0].shape
    for index, vector in enumerate(vectors):
        if vector.ndim != 1 or vector.shape != dimension:
            raise ValueError(
                f"Coordinate vector {index} has shape {vector.shape}, expected {dimension}"
            )

    return FiniteMetricSpace(labels=labels, coords=np.vstack(vectors))


def discrete_metric_space(size: int, labels=None) -> FiniteMetricSpace:
    """Space where distinct points are at distance 1."""
    if size < 1:
        raise ValueError("A discrete space needs at least one point")
    dist = np.ones((size, size)) - np.eye(size)
    return FiniteMetricSpace(labels=labels, dist=dist, validate=False)


def closed_neighborhood(space: FiniteMetricSpace, points, eps: float) -> set[int]:
    """
    Closed eps-neighbourhood A^eps = {y : min_{x in A} d(y, x) <= eps}.

    The empty set has distance +inf from everything, so its neighbourhood is empty.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")

    members = sorted({int(x) for x in points})
    for x in members:
        if not 0 <= x < space.size:
            raise ValueError(f"Point index {x} is not in a space of {space.size} points")
    if not members:
        return set()

    block = space.pair_distances(members, np.arange(space.size))
    return set(np.flatnonzero(block.min(axis=0) <= eps).tolist())

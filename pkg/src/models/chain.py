import numpy as np
from scipy import sparse

from config.constants import DISTRIBUTION_TOLERANCE, METRIC_TOLERANCE
from src.models.metric_space import Distribution, FiniteMetricSpace


class FiniteMarkovChain:
    """
    Transition kernel over the points of a finite metric space.

    kernel[x, y] = P(x, {y}); stored as a scipy sparse CSR array so that the
    2^14-state counterexample chains stay small.
    """

    def __init__(self, space: FiniteMetricSpace, kernel):
        kernel = sparse.csr_array(kernel, dtype=float)
        size = space.size
        if kernel.shape != (size, size):
            raise ValueError(f"Kernel has shape {kernel.shape}, expected ({size}, {size})")
        if kernel.nnz and not np.all(np.isfinite(kernel.data)):
            raise ValueError("Kernel contains non-finite probabilities")
        if kernel.nnz and kernel.data.min() < -DISTRIBUTION_TOLERANCE:
            raise ValueError("Kernel contains negative probabilities")
        kernel.data = np.clip(kernel.data, 0.0, None)
        kernel.eliminate_zeros()

        sums = np.asarray(kernel.sum(axis=1)).reshape(-1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > DISTRIBUTION_TOLERANCE)
        if bad.size:
            x = int(bad[0])
            raise ValueError(f"Kernel row {x} ({space.labels[x]}) sums to {sums[x]!r}, not 1")

        self.space = space
        self.kernel = kernel

    @property
    def size(self) -> int:
        return self.space.size

    def check_state(self, x: int) -> int:
        if not 0 <= int(x) < self.size:
            raise ValueError(f"State {x} is not in a chain of {self.size} states")
        return int(x)

    def row_weights(self, x: int) -> np.ndarray:
        x = self.check_state(x)
        return self.kernel[[x], :].toarray().reshape(-1)

    def row(self, x: int) -> Distribution:
        """P(x, .) as a Distribution."""
        return Distribution(self.space, self.row_weights(x))

    def push(self, weights: np.ndarray) -> np.ndarray:
        """One step of the chain applied to a probability vector (or a stack of them)."""
        return np.asarray(weights @ self.kernel)

    def to_dict(self):
        """Convert to dict for JSON serialization."""
        data = self.space.to_dict()
        data["kernel"] = [[float(v) for v in row] for row in self.kernel.toarray()]
        return data

    @classmethod
    def from_dict(cls, data):
        """Create instance from a `{states, kernel}` dict."""
        if "kernel" not in data:
            raise ValueError("Chain data has no kernel")
        space = FiniteMetricSpace.from_dict(data)
        return cls(space, np.array(data["kernel"], dtype=float))

    def __repr__(self):
        return f"FiniteMarkovChain(states={self.size}, nnz={self.kernel.nnz})"


class ChainPair:
    """
    Ideal chain P on a space and perturbed chain on a subspace.

    `embedding[k]` is the index in the ideal space of perturbed state k; it
    must be injective and preserve distances.
    """

    def __init__(self, ideal: FiniteMarkovChain, perturbed: FiniteMarkovChain, embedding=None):
        if embedding is None:
            if perturbed.size != ideal.size:
                raise ValueError("An identity embedding needs chains of equal size")
            embedding = np.arange(ideal.size)
        embedding = np.asarray(embedding, dtype=np.intp)

        if embedding.shape != (perturbed.size,):
            raise ValueError(
                f"Embedding has {embedding.shape[0]} entries for {perturbed.size} perturbed states"
            )
        if embedding.size and (embedding.min() < 0 or embedding.max() >= ideal.size):
            raise ValueError("Embedding points outside the ideal state space")
        if np.unique(embedding).size != embedding.size:
            raise ValueError("Embedding is not injective")

        self.ideal = ideal
        self.perturbed = perturbed
        self.embedding = embedding
        self._check_isometry()

    @property
    def identity_embedding(self) -> bool:
        return self.perturbed.size == self.ideal.size and bool(
            np.array_equal(self.embedding, np.arange(self.ideal.size))
        )

    def _check_isometry(self):
        if self.identity_embedding and self.perturbed.space.compatible_with(self.ideal.space):
            return
        # Compare in blocks so large subspaces never need a full matrix
        size = self.perturbed.size
        block = 512
        for start in range(0, size, block):
            rows = np.arange(start, min(start + block, size))
            own = self.perturbed.space.pair_distances(rows, np.arange(size))
            image = self.ideal.space.pair_distances(self.embedding[rows], self.embedding)
            tol = METRIC_TOLERANCE * max(1.0, float(image.max()))
            if np.any(np.abs(own - image) > tol):
                raise ValueError("Embedding does not preserve distances")

    def embed(self, weights: np.ndarray) -> np.ndarray:
        """Push a vector over the perturbed states into the ideal space."""
        out = np.zeros(self.ideal.size)
        out[self.embedding] = weights
        return out

    def embedded_row(self, x: int) -> Distribution:
        """P-hat(x, .) seen as a distribution on the ideal space."""
        return Distribution(self.ideal.space, self.embed(self.perturbed.row_weights(x)))


class DivergenceTrace:
    """Per-run samples of D_i = d(X-hat_i, X_i) from a coupled simulation."""

    def __init__(self, times, distances):
        times = np.asarray(times, dtype=int)
        distances = np.asarray(distances, dtype=float)
        if distances.ndim != 2 or distances.shape[1] != times.size:
            raise ValueError("Distances must have one column per recorded time")
        if np.any(distances < 0):
            raise ValueError("Distances must be nonnegative")
        self.times = times
        self.distances = distances

    @property
    def runs(self) -> int:
        return int(self.distances.shape[0])

    def exceedance(self, threshold: float, time_index: int = -1) -> tuple[float, float]:
        """Empirical Pr[D_t > threshold] and its binomial standard error."""
        hits = self.distances[:, time_index] > threshold
        p = float(hits.mean())
        return p, float(np.sqrt(p * (1 - p) / self.runs))

    def median(self, time_index: int = -1) -> float:
        return float(np.median(self.distances[:, time_index]))

    def to_records(self):
        """One row per run: the final distance and the largest one seen."""
        return [
            {"run": run, "final_distance": float(row[-1]), "max_distance": float(row.max())}
            for run, row in enumerate(self.distances)
        ]

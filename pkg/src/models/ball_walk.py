import numpy as np

from config.constants import MIN_PRECISION_BITS

SHARP_CORNER_NOTE = (
    "box bodies have sharp corners; mixing-time orders assume a body without them"
)

INJECTION_MODES = ("shift", "quantization")


class ConvexBody:
    """Closed ball or axis-aligned box in R^n."""

    def __init__(self, kind: str, center=None, radius=None, lo=None, hi=None):
        self.kind = kind
        if kind == "ball":
            self.center = np.atleast_1d(np.asarray(center, dtype=float))
            self.radius = float(radius)
            if self.center.ndim != 1 or self.center.size == 0:
                raise ValueError("Ball center must be a nonempty vector")
            if not self.radius > 0:
                raise ValueError(f"Ball radius must be positive, got {radius!r}")
        elif kind == "box":
            self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
            self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
            if self.lo.shape != self.hi.shape or self.lo.ndim != 1 or self.lo.size == 0:
                raise ValueError("Box corners must be vectors of equal length")
            if not np.all(self.hi > self.lo):
                raise ValueError("Box upper corner must strictly dominate the lower corner")
        else:
            raise ValueError(f"Unknown body kind {kind!r}; expected ball or box")

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=center, radius=radius)

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def from_string(cls, text: str, dimension: int):
        """
        Parse `ball:R` (centred at the origin) or `box:lo,hi` (same bounds on every axis).

        Example:
            ConvexBody.from_string("box:0,1", 3) is the unit cube in R^3.
        """
        if dimension < 1:
            raise ValueError(f"dimension must be at least 1, got {dimension}")
        kind, _, args = text.partition(":")
        try:
            values = [float(v) for v in args.split(",")] if args else []
        except ValueError:
            raise ValueError(f"Invalid body description {text!r}")
        if kind == "ball" and len(values) == 1:
            return cls.ball(np.zeros(dimension), values[0])
        if kind == "box" and len(values) == 2:
            return cls.box(np.full(dimension, values[0]), np.full(dimension, values[1]))
        raise ValueError(f"Invalid body description {text!r}; use ball:R or box:lo,hi")

    @property
    def dimension(self) -> int:
        return int(self.center.size if self.kind == "ball" else self.lo.size)

    @property
    def diameter(self) -> float:
        if self.kind == "ball":
            return 2 * self.radius
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def interior_point(self) -> np.ndarray:
        return self.center.copy() if self.kind == "ball" else (self.lo + self.hi) / 2

    @property
    def note(self) -> str | None:
        return SHARP_CORNER_NOTE if self.kind == "box" else None

    def contains(self, points) -> np.ndarray | bool:
        """Boundary-inclusive membership for one point or a stack of points."""
        points = np.asarray(points, dtype=float)
        if self.kind == "ball":
            inside = np.linalg.norm(points - self.center, axis=-1) <= self.radius
        else:
            inside = np.all((points >= self.lo) & (points <= self.hi), axis=-1)
        return bool(inside) if np.ndim(inside) == 0 else inside

    def distance_to(self, points) -> np.ndarray | float:
        """Euclidean distance to the body; 0 inside."""
        points = np.asarray(points, dtype=float)
        if self.kind == "ball":
            gap = np.maximum(np.linalg.norm(points - self.center, axis=-1) - self.radius, 0.0)
        else:
            excess = np.maximum(np.maximum(self.lo - points, points - self.hi), 0.0)
            gap = np.linalg.norm(excess, axis=-1)
        return float(gap) if np.ndim(gap) == 0 else gap

    def to_dict(self):
        if self.kind == "ball":
            data = {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        else:
            data = {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}
        data["diameter"] = self.diameter
        return data


class BallWalkConfig:
    """Lazy ball walk on a body with step radius r."""

    def __init__(self, body: ConvexBody, r: float, seed: int = 0, precision_bits: int | None = None):
        if not r > 0:
            raise ValueError(f"Step radius must be positive, got {r!r}")
        if precision_bits is not None and precision_bits < MIN_PRECISION_BITS:
            raise ValueError(
                f"precision_bits must be at least {MIN_PRECISION_BITS}, got {precision_bits}"
            )
        self.body = body
        self.r = float(r)
        self.seed = int(seed)
        self.precision_bits = precision_bits

    @property
    def dimension(self) -> int:
        return self.body.dimension

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"Point has shape {x.shape}, expected ({self.dimension},)")
        if not self.body.contains(x):
            raise ValueError("Point lies outside the body")
        return x


class PerturbedSamplerConfig:
    """Size and style of the errors injected into the Gaussian and uniform draws."""

    def __init__(self, gaussian_prohorov_error: float, uniform_prohorov_error: float, mode: str = "shift"):
        if gaussian_prohorov_error < 0 or uniform_prohorov_error < 0:
            raise ValueError("Injected errors must be nonnegative")
        if mode not in INJECTION_MODES:
            raise ValueError(f"Unknown injection mode {mode!r}; expected shift or quantization")
        self.gaussian_prohorov_error = float(gaussian_prohorov_error)
        self.uniform_prohorov_error = float(uniform_prohorov_error)
        self.mode = mode


class ErrorBudgetSample:
    """Divergences of one hatted/unhatted sampler trial, row by row."""

    COLUMNS = [
        "phi_error",
        "s_error",
        "w_error",
        "y_error",
        "step_error",
        "void_mismatch",
        "u_near_zero",
        "rejection_mismatch",
        "in_shell",
    ]

    def __init__(
        self,
        phi_error,
        s_error,
        w_error,
        y_error,
        step_error,
        void_mismatch,
        u_near_zero,
        rejection_mismatch,
        in_shell,
    ):
        self.phi_error = float(phi_error)
        self.s_error = float(s_error)
        self.w_error = float(w_error)
        self.y_error = float(y_error)
        self.step_error = float(step_error)
        self.void_mismatch = bool(void_mismatch)
        self.u_near_zero = bool(u_near_zero)
        self.rejection_mismatch = bool(rejection_mismatch)
        self.in_shell = bool(in_shell)

    @property
    def is_zero(self) -> bool:
        return (
            self.phi_error == self.s_error == self.w_error == self.y_error == self.step_error == 0.0
            and not (self.void_mismatch or self.u_near_zero or self.rejection_mismatch)
        )

    def to_dict(self):
        return {column: getattr(self, column) for column in self.COLUMNS}


class TrajectoryPair:
    """Distances between an exact walk and its finite-precision shadow over time."""

    def __init__(self, distances, rounding):
        self.distances = np.asarray(distances, dtype=float)
        self.rounding = np.asarray(rounding, dtype=float)

    @property
    def steps(self) -> int:
        return int(self.distances.size - 1)

    @property
    def final_distance(self) -> float:
        return float(self.distances[-1])

    def to_records(self):
        return [
            {"t": t, "distance": float(d), "rounding": float(e)}
            for t, (d, e) in enumerate(zip(self.distances, self.rounding))
        ]
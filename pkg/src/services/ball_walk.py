"""
Lazy ball walk on convex bodies.

Proposals come from a four-step uniform-ball sampler (Gaussian direction,
void rejection of short Gaussians, uniform radius); a proposal outside the
body leaves the walk where it is. The reflection coupling, the Lipschitz
constant v_{n-1}(r)/v_n(r) and the error-injection trials used to account
for imperfect random numbers live here too.
"""

import logging
import math

import numpy as np
from scipy import stats
from scipy.special import gammaln

from config.constants import MONTE_CARLO_CHUNK, SAMPLER_MAX_RESTARTS, U_GIVEAWAY_KAPPA
from src.models.ball_walk import (
    BallWalkConfig,
    ConvexBody,
    ErrorBudgetSample,
    PerturbedSamplerConfig,
    TrajectoryPair,
)
from src.services.regime import classify_regime, delta_budget
from src.utils.errors import SamplerRestartError
from src.utils.logging import get_logger
from src.utils.rng import chunk_sizes, run_indexed

CONSTANTS_NOTE = "up to unspecified constants in the mixing-time and budget orders"


def _check_sampler_args(n: int, r: float):
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r!r}")


def ball_volume(n: int, r: float) -> float:
    """v_n(r) = pi^{n/2} r^n / Gamma(n/2 + 1), with v_0 = 1."""
    if n == 0:
        return 1.0
    _check_sampler_args(n, r)
    return math.exp(0.5 * n * math.log(math.pi) + n * math.log(r) - gammaln(0.5 * n + 1))


def lipschitz_bound(n: int, r: float) -> float:
    """v_{n-1}(r) / v_n(r): cross-section over volume, the walk's Lipschitz constant."""
    _check_sampler_args(n, r)
    return math.exp(
        gammaln(0.5 * n + 1) - gammaln(0.5 * (n - 1) + 1) - math.log(r) - 0.5 * math.log(math.pi)
    )


def void_probability(n: int) -> float:
    """Pr[|Phi| < sqrt(n)/2] for a standard Gaussian vector: one void trial."""
    _check_sampler_args(n, 1.0)
    return float(stats.chi(n).cdf(math.sqrt(n) / 2))


def shell_fraction(n: int, r: float, eta: float) -> float:
    """Volume of the eta-shell around B(0, r) relative to the ball: ((r + eta)/r)^n - 1."""
    _check_sampler_args(n, r)
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta!r}")
    return math.expm1(n * math.log1p(eta / r))


def _gaussian_batch(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Standard Gaussian vectors with norm >= sqrt(n)/2, void rows redrawn."""
    phi = rng.standard_normal((size, n))
    floor = math.sqrt(n) / 2
    void = np.linalg.norm(phi, axis=1) < floor
    for _ in range(SAMPLER_MAX_RESTARTS):
        if not void.any():
            return phi
        phi[void] = rng.standard_normal((int(void.sum()), n))
        void = np.linalg.norm(phi, axis=1) < floor
    if void.any():
        raise SamplerRestartError(
            f"{int(void.sum())} draws voided more than {SAMPLER_MAX_RESTARTS} times in dimension {n}"
        )
    return phi


def sample_ball_uniform_batch(n: int, r: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """`size` independent uniform points of B_n(0, r), one per row."""
    _check_sampler_args(n, r)
    phi = _gaussian_batch(n, size, rng)
    directions = r * phi / np.linalg.norm(phi, axis=1, keepdims=True)
    u = rng.random(size)
    return u[:, None] ** (1.0 / n) * directions


def sample_ball_uniform(n: int, r: float, rng: np.random.Generator) -> np.ndarray:
    """
    One uniform point of B_n(0, r).

    Draw n Gaussians; void the trial and start again when their norm is
    below sqrt(n)/2; scale the direction to length r; shrink by U^{1/n}.

    Raises:
        SamplerRestartError: after 64 consecutive void trials
    """
    return sample_ball_uniform_batch(n, r, rng, 1)[0]


def _lazy_step(body: ConvexBody, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    y = x + w
    return y if body.contains(y) else x


def ball_walk_step(cfg: BallWalkConfig, x, rng: np.random.Generator) -> np.ndarray:
    """Propose y uniform in B(x, r); move there if y is in the body, otherwise stay."""
    x = cfg.check_point(x)
    return _lazy_step(cfg.body, x, sample_ball_uniform(cfg.dimension, cfg.r, rng))


def reflect(y: np.ndarray, x: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Mirror points y in the hyperplane bisecting x and x2."""
    gap = x - x2
    unit = gap / np.linalg.norm(gap)
    midpoint = (x + x2) / 2
    offsets = np.asarray((y - midpoint) @ unit)
    return y - 2 * offsets[..., None] * unit


def coupled_proposals(x: np.ndarray, x2: np.ndarray, r: float, w: np.ndarray):
    """
    Partner proposals of the reflection coupling for offsets w from x.

    Returns (y, y2, mismatch): y2 = y whenever y also lies in B(x2, r),
    otherwise the reflection of y.
    """
    y = x + w
    if np.array_equal(x, x2):
        return y, y.copy(), np.zeros(y.shape[:-1], dtype=bool)
    mismatch = np.linalg.norm(y - x2, axis=-1) > r
    y2 = np.where(mismatch[..., None], reflect(y, x, x2), y)
    return y, y2, mismatch


def reflection_coupled_step(cfg: BallWalkConfig, x, x2, rng: np.random.Generator):
    """
    One coupled step from (x, x2); each marginal is an exact ball-walk step.

    Returns:
        (y, y2) after applying the rejection rule to each walk separately
    """
    x = cfg.check_point(x)
    x2 = cfg.check_point(x2)
    w = sample_ball_uniform(cfg.dimension, cfg.r, rng)
    y, y2, _ = coupled_proposals(x, x2, cfg.r, w)
    return (
        y if cfg.body.contains(y) else x,
        y2 if cfg.body.contains(y2) else x2,
    )


def ballwalk_budgets(
    n: int,
    r: float,
    D: float,
    epsilon: float,
    tau1_constant: float = 1.0,
    delta_constant: float = 1.0,
) -> dict:
    """
    Orders of tau1 and delta for the ball walk, with lambda = 1/(2C).

    tau1 ~ D^2 n^2 ln(D/r) / r^2 and delta ~ epsilon r^2 / (D^2 n^2 ln(D/r)),
    each times a caller-supplied constant.
    """
    _check_sampler_args(n, r)
    if not D > r:
        raise ValueError(f"Diameter D must exceed the step radius r, got D={D!r}, r={r!r}")

    C = lipschitz_bound(n, r)
    lam = 1 / (2 * C)
    log_ratio = math.log(D / r)
    tau1_estimate = tau1_constant * D**2 * n**2 * log_ratio / r**2
    delta = delta_constant * epsilon * r**2 / (D**2 * n**2 * log_ratio)
    report = delta_budget(lam, C, epsilon, max(math.ceil(tau1_estimate), 1))

    return {
        "n": n,
        "r": r,
        "D": D,
        "epsilon": epsilon,
        "C": C,
        "lambda": lam,
        "lambda_C": lam * C,
        "regime": classify_regime(lam, C),
        "tau1_estimate": tau1_estimate,
        "delta_estimate": delta,
        "theorem_t_epsilon": report.t_epsilon,
        "theorem_delta_budget": report.delta_budget,
        "note": CONSTANTS_NOTE,
    }


def _inject_gaussian(phi: np.ndarray, error: float, mode: str) -> np.ndarray:
    if error == 0:
        return phi.copy()
    if mode == "shift":
        return phi + error
    return np.round(phi / error) * error


def _inject_uniform(u: float, error: float, mode: str) -> float:
    if error == 0:
        return u
    if mode == "shift":
        return min(u + error, 1.0)
    return min(max(round(u / error) * error, 0.0), 1.0)


def perturbed_coupled_trial(
    cfg: BallWalkConfig,
    pcfg: PerturbedSamplerConfig,
    x,
    rng: np.random.Generator,
) -> ErrorBudgetSample:
    """
    One sampler trial run twice: with exact draws and with perturbed draws.

    The Gaussian error e plays the role of delta/n per coordinate, so
    delta = n e and the rejection shell has width eta = r e. The trial is
    given away when the perturbed uniform falls below kappa * delta.
    """
    x = cfg.check_point(x)
    n, r = cfg.dimension, cfg.r
    error = pcfg.gaussian_prohorov_error
    floor = math.sqrt(n) / 2

    void_mismatch = False
    for _ in range(SAMPLER_MAX_RESTARTS + 1):
        phi = rng.standard_normal(n)
        phi_hat = _inject_gaussian(phi, error, pcfg.mode)
        norm, norm_hat = np.linalg.norm(phi), np.linalg.norm(phi_hat)
        void, void_hat = norm < floor, norm_hat < floor
        void_mismatch |= bool(void != void_hat)
        if not (void or void_hat):
            break
    else:
        raise SamplerRestartError(f"Coupled trial voided more than {SAMPLER_MAX_RESTARTS} times")

    s, s_hat = r * phi / norm, r * phi_hat / norm_hat
    u = float(rng.random())
    u_hat = _inject_uniform(u, pcfg.uniform_prohorov_error, pcfg.mode)
    w, w_hat = u ** (1 / n) * s, u_hat ** (1 / n) * s_hat
    y, y_hat = x + w, x + w_hat

    accept, accept_hat = cfg.body.contains(y), cfg.body.contains(y_hat)
    step, step_hat = (y if accept else x), (y_hat if accept_hat else x)
    delta = n * error
    eta = r * error
    in_shell = (not accept) and cfg.body.distance_to(y) <= eta and eta > 0

    return ErrorBudgetSample(
        phi_error=np.linalg.norm(phi - phi_hat),
        s_error=np.linalg.norm(s - s_hat),
        w_error=np.linalg.norm(w - w_hat),
        y_error=np.linalg.norm(y - y_hat),
        step_error=np.linalg.norm(step - step_hat),
        void_mismatch=void_mismatch,
        u_near_zero=u_hat < U_GIVEAWAY_KAPPA * delta,
        rejection_mismatch=accept != accept_hat,
        in_shell=in_shell,
    )


def error_budget_trials(
    cfg: BallWalkConfig,
    pcfg: PerturbedSamplerConfig,
    x,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> list[ErrorBudgetSample]:
    """Independent perturbed trials from x, chunked over per-chunk streams."""
    chunks = _chunked(
        lambda size, rng: [perturbed_coupled_trial(cfg, pcfg, x, rng) for _ in range(size)],
        trials,
        seed,
        workers,
    )
    return [sample for chunk in chunks for sample in chunk]


def summarize_error_budget(
    samples: list[ErrorBudgetSample],
    cfg: BallWalkConfig,
    pcfg: PerturbedSamplerConfig,
) -> dict:
    """Aggregate error-budget trials next to the orders they should respect."""
    if not samples:
        raise ValueError("No trials to summarise")
    n, r = cfg.dimension, cfg.r
    error = pcfg.gaussian_prohorov_error
    delta = n * error

    def column(name):
        return np.array([getattr(s, name) for s in samples], dtype=float)

    summary = {"trials": len(samples), "delta": delta, "eta": r * error}
    for name in ("phi_error", "s_error", "w_error", "y_error", "step_error"):
        values = column(name)
        summary[f"{name}_mean"] = float(values.mean())
        summary[f"{name}_max"] = float(values.max())
    for name in ("void_mismatch", "u_near_zero", "rejection_mismatch", "in_shell"):
        summary[f"{name}_rate"] = float(column(name).mean())
    summary["s_error_scale"] = r * delta / n
    # Volume of K^eta \ K relative to K, for ball bodies
    if cfg.body.kind == "ball":
        summary["shell_volume_ratio"] = shell_fraction(n, cfg.body.radius, r * error)
    summary["note"] = cfg.body.note
    return summary


def round_to_bits(values: np.ndarray, bits: int) -> np.ndarray:
    """Round each coordinate to `bits` binary digits of mantissa."""
    mantissa, exponent = np.frexp(values)
    return np.ldexp(np.round(mantissa * 2.0**bits) / 2.0**bits, exponent)


def finite_precision_walk(cfg: BallWalkConfig, x, t: int, rng: np.random.Generator) -> TrajectoryPair:
    """
    Exact walk and a shadow walk rounded to cfg.precision_bits after every step.

    Both walks use the same proposal offsets; the shadow may stray outside
    the body by a rounding error and is not re-checked.
    """
    if cfg.precision_bits is None:
        raise ValueError("finite_precision_walk needs precision_bits in the config")
    x = cfg.check_point(x)
    if int(t) != t or t < 0:
        raise ValueError(f"t must be a nonnegative integer, got {t!r}")

    shadow = round_to_bits(x, cfg.precision_bits)
    distances = [float(np.linalg.norm(x - shadow))]
    rounding = [distances[0]]
    for w in sample_ball_uniform_batch(cfg.dimension, cfg.r, rng, int(t)):
        x = _lazy_step(cfg.body, x, w)
        moved = _lazy_step(cfg.body, shadow, w)
        shadow = round_to_bits(moved, cfg.precision_bits)
        rounding.append(float(np.linalg.norm(shadow - moved)))
        distances.append(float(np.linalg.norm(x - shadow)))
    return TrajectoryPair(distances, rounding)


def finite_precision_summary(
    cfg: BallWalkConfig,
    x,
    t: int,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> dict:
    """Median shadow distance at t and median per-step rounding over independent walks."""
    walks = run_indexed(lambda _, rng: finite_precision_walk(cfg, x, t, rng), trials, seed, workers)
    finals = np.array([walk.final_distance for walk in walks])
    rounding = np.concatenate([walk.rounding[1:] for walk in walks]) if t else np.zeros(1)
    return {
        "precision_bits": cfg.precision_bits,
        "steps": t,
        "trials": trials,
        "median_final_distance": float(np.median(finals)),
        "max_final_distance": float(finals.max()),
        "median_step_rounding": float(np.median(rounding)),
    }


def _chunked(draw, total: int, seed: int, workers: int | None) -> list:
    """Run draw(size, rng) over fixed-size chunks, one stream per chunk, in chunk order."""
    sizes = chunk_sizes(total, MONTE_CARLO_CHUNK)
    return run_indexed(lambda k, rng: draw(sizes[k], rng), len(sizes), seed, workers)


def radial_cdf_check(
    n: int,
    r: float,
    draws: int,
    seed: int,
    quantiles=(0.5, 0.9),
    workers: int | None = None,
) -> list[dict]:
    """Empirical Pr[|W| <= q r] against q^n, with binomial standard errors."""
    _check_sampler_args(n, r)
    levels = np.asarray(quantiles, dtype=float) * r

    def count(size, rng):
        radii = np.linalg.norm(sample_ball_uniform_batch(n, r, rng, size), axis=1)
        return (radii[:, None] <= levels).sum(axis=0)

    hits = np.sum(_chunked(count, draws, seed, workers), axis=0)
    rows = []
    for q, hit in zip(quantiles, hits):
        expected = q**n
        sigma = math.sqrt(expected * (1 - expected) / draws)
        empirical = float(hit) / draws
        rows.append(
            {
                "n": n,
                "quantile": q,
                "empirical": empirical,
                "expected": expected,
                "sigma": sigma,
                "z": (empirical - expected) / sigma if sigma else 0.0,
            }
        )
    return rows


def direction_mean(n: int, draws: int, seed: int, workers: int | None = None) -> np.ndarray:
    """Mean unit direction W/|W| of the sampler (zero by symmetry)."""

    def total(size, rng):
        w = sample_ball_uniform_batch(n, 1.0, rng, size)
        return (w / np.linalg.norm(w, axis=1, keepdims=True)).sum(axis=0)

    return np.sum(_chunked(total, draws, seed, workers), axis=0) / draws


def coupling_mismatch_rate(
    n: int,
    r: float,
    d: float,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> dict:
    """Frequency of differing proposals for two walks d apart, against d v_{n-1}(r)/v_n(r)."""
    _check_sampler_args(n, r)
    x = np.zeros(n)
    x2 = np.zeros(n)
    x2[0] = d

    def count(size, rng):
        _, _, mismatch = coupled_proposals(x, x2, r, sample_ball_uniform_batch(n, r, rng, size))
        return int(mismatch.sum())

    rate = sum(_chunked(count, trials, seed, workers)) / trials
    return {
        "n": n,
        "r": r,
        "d": d,
        "trials": trials,
        "mismatch_rate": rate,
        "sigma": math.sqrt(rate * (1 - rate) / trials),
        "bound": d * lipschitz_bound(n, r),
    }


def stay_probability(cfg: BallWalkConfig, x, trials: int, seed: int, workers: int | None = None) -> float:
    """Monte Carlo probability that one ball-walk step from x stays put."""
    x = cfg.check_point(x)

    def count(size, rng):
        proposals = x + sample_ball_uniform_batch(cfg.dimension, cfg.r, rng, size)
        return int((~cfg.body.contains(proposals)).sum())

    return sum(_chunked(count, trials, seed, workers)) / trials


def corner_stay_probability(
    n: int,
    r: float,
    constrained_axes: int,
    trials: int,
    seed: int,
    side: float = 10.0,
    workers: int | None = None,
) -> dict:
    """
    Stay probability at a box point lying on `constrained_axes` lower faces.

    With r below half the side length the outside fraction of B(x, r) is
    1 - 2^{-k} for k constrained axes.
    """
    _check_sampler_args(n, r)
    if not 0 <= constrained_axes <= n:
        raise ValueError(f"constrained_axes must lie in 0..{n}, got {constrained_axes}")
    if not r < side / 2:
        raise ValueError("The step radius must be below half the box side")
    body = ConvexBody.box(np.zeros(n), np.full(n, side))
    x = np.full(n, side / 2)
    x[:constrained_axes] = 0.0

    rate = stay_probability(BallWalkConfig(body, r), x, trials, seed, workers)
    expected = 1 - 2.0**-constrained_axes
    return {
        "n": n,
        "constrained_axes": constrained_axes,
        "trials": trials,
        "stay_rate": rate,
        "expected": expected,
        "sigma": math.sqrt(expected * (1 - expected) / trials),
        "note": body.note,
    }


def run_ball_walk(
    cfg: BallWalkConfig,
    x,
    steps: int,
    rng: np.random.Generator,
    logger: logging.Logger | None = None,
) -> np.ndarray:
    """Trajectory of the lazy walk: steps + 1 points, starting at x."""
    log = get_logger(logger, "ball_walk")
    x = cfg.check_point(x)
    path = [x]
    for w in sample_ball_uniform_batch(cfg.dimension, cfg.r, rng, int(steps)):
        path.append(_lazy_step(cfg.body, path[-1], w))
    log.info(f"Ball walk: {steps} steps in dimension {cfg.dimension}, r={cfg.r:g}")
    return np.vstack(path)

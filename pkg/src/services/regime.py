"""
Closed-form horizon and perturbation budget of the approximation theorem.

Given the kernel Lipschitz constant C at scale lambda, the variation threshold
time tau1 and a target accuracy epsilon, the theorem bounds how large the
per-step kernel perturbation delta may be. The bound behaves very differently
on either side of lambda*C = 1, hence the three regimes.
"""

import math

import mpmath

from config.constants import REGIME_BAND
from src.models.results import RegimeReport

CONVERGENT = "convergent"
NEUTRAL = "neutral"
DIVERGENT = "divergent"

# Digits used for the exactly-evaluated horizon product
_HORIZON_DPS = 50
# Distance to an integer below which the product counts as that integer
_HORIZON_SNAP = "1e-40"


def _check_nonnegative(**values):
    for name, value in values.items():
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"{name} must be a nonnegative finite number, got {value!r}")


def classify_regime(lam: float, C: float) -> str:
    """convergent if lambda*C < 1, divergent if > 1, neutral inside a 1e-12 band."""
    _check_nonnegative(lam=lam, C=C)
    product = lam * C
    if product < 1 - REGIME_BAND:
        return CONVERGENT
    if product > 1 + REGIME_BAND:
        return DIVERGENT
    return NEUTRAL


def t_epsilon(epsilon: float, tau1: int) -> int:
    """
    Horizon t_eps = ceil(ln(2e / epsilon) * tau1).

    The product is evaluated at 50 digits; values within 1e-40 of an integer
    are snapped to it so that exact inputs such as epsilon = 2 give exact
    answers, while genuine excesses as small as 1e-13 still round up.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    if epsilon > 2 * math.e * (1 + REGIME_BAND):
        raise ValueError(f"epsilon must not exceed 2e, got {epsilon!r}")
    if int(tau1) != tau1 or tau1 < 0:
        raise ValueError(f"tau1 must be a nonnegative integer, got {tau1!r}")

    with mpmath.workdps(_HORIZON_DPS):
        product = mpmath.log(2 * mpmath.e / mpmath.mpf(epsilon)) * int(tau1)
        nearest = mpmath.nint(product)
        if abs(product - nearest) <= mpmath.mpf(_HORIZON_SNAP):
            return max(int(nearest), 0)
        return int(mpmath.ceil(product))


def delta_budget(lam: float, C: float, epsilon: float, tau1: int) -> RegimeReport:
    """
    Admissible per-step kernel perturbation for each regime.

    Args:
        lam: Spatial scale lambda of the Prohorov metric
        C: Kernel Lipschitz constant at that scale
        epsilon: Target accuracy in (0, 1]
        tau1: Variation threshold time of the ideal chain (>= 1)

    Returns:
        RegimeReport; in the divergent regime the budget is also given as
        log2 so that it survives when the double underflows to 0.
    """
    _check_nonnegative(lam=lam, C=C)
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    if int(tau1) != tau1 or tau1 < 1:
        raise ValueError(f"tau1 must be a positive integer, got {tau1!r}")

    horizon = t_epsilon(epsilon, tau1)
    regime = classify_regime(lam, C)
    product = lam * C

    if regime == CONVERGENT:
        budget = (1 - product) * epsilon / (2 * horizon)
        log2_budget = math.log2(budget)
    elif regime == NEUTRAL:
        budget = epsilon / (horizon * (horizon + 1))
        log2_budget = math.log2(budget)
    else:
        log_budget = (
            2 * math.log(product - 1)
            + math.log(epsilon)
            - math.log(2)
            - (horizon + 1) * math.log(product)
        )
        log2_budget = log_budget / math.log(2)
        budget = math.exp(log_budget)

    return RegimeReport(
        lam=lam,
        C=C,
        epsilon=epsilon,
        tau1=tau1,
        t_epsilon=horizon,
        regime=regime,
        delta_budget=budget,
        log2_delta_budget=log2_budget,
    )


def recursion_bound(lam: float, C: float, delta: float, t: int) -> tuple[float, float]:
    """
    Iterated coupling bound after t steps.

    Returns (s, p) with Pr[D_t > s] <= p, where
    s = lambda * delta * sum_{i<t} (lambda C)^i and
    p = delta * sum_{i<t} (t - i) (lambda C)^i.
    """
    _check_nonnegative(lam=lam, C=C, delta=delta)
    if int(t) != t or t < 0:
        raise ValueError(f"t must be a nonnegative integer, got {t!r}")

    product = lam * C
    powers = [product**i for i in range(int(t))]
    distance = lam * delta * math.fsum(powers)
    probability = delta * math.fsum((t - i) * power for i, power in enumerate(powers))
    return distance, probability

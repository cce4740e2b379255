import math

from config.constants import WITNESS_TOLERANCE
from src.models.metric_space import Coupling


class ProhorovResult:
    """
    Parametric Prohorov distance together with the coupling that attains it.

    `critical_threshold` is the smallest distance level t_k at which the
    optimum max(t_k / lambda, deficiency(t_k)) is attained. It equals
    lambda * value when the spatial slack binds; when the deficiency binds it
    is the largest pair distance not exceeding lambda * value, and the
    witness puts the same mass beyond both.
    """

    def __init__(self, value, witness_coupling: Coupling, critical_threshold, lam):
        if not -WITNESS_TOLERANCE <= value <= 1 + WITNESS_TOLERANCE:
            raise ValueError(f"Prohorov value {value!r} is outside [0, 1]")
        self.value = min(max(float(value), 0.0), 1.0)
        self.witness_coupling = witness_coupling
        self.critical_threshold = float(critical_threshold)
        self.lam = float(lam)

        far_mass = witness_coupling.mass_beyond(max(self.critical_threshold, lam * self.value))
        if far_mass > self.value + WITNESS_TOLERANCE:
            raise ValueError(
                f"Witness coupling puts {far_mass:.3g} beyond the threshold, more than {self.value:.3g}"
            )

    def to_dict(self):
        return {
            "lambda": self.lam,
            "value": self.value,
            "critical_threshold": self.critical_threshold,
        }

    def __repr__(self):
        return f"ProhorovResult(value={self.value:.12g}, lambda={self.lam:g})"


class Tau1Result:
    """Variation threshold time with the max-pair TV profile that produced it."""

    def __init__(self, tau1, threshold, profile):
        self.tau1 = int(tau1)
        self.threshold = float(threshold)
        self.profile = [float(v) for v in profile]

    def to_dict(self):
        return {
            "tau1": self.tau1,
            "threshold": self.threshold,
            "profile": self.profile,
        }

    def to_records(self):
        return [{"t": t, "max_pair_tv": tv} for t, tv in enumerate(self.profile)]


class RegimeReport:
    """Quantities of the main approximation theorem for one (lambda, C, epsilon, tau1)."""

    def __init__(
        self,
        lam,
        C,
        epsilon,
        tau1,
        t_epsilon,
        regime,
        delta_budget,
        log2_delta_budget,
    ):
        self.lam = float(lam)
        self.C = float(C)
        self.epsilon = float(epsilon)
        self.tau1 = int(tau1)
        self.t_epsilon = int(t_epsilon)
        self.regime = regime
        self.delta_budget = float(delta_budget)
        self.log2_delta_budget = float(log2_delta_budget)

    @property
    def underflows(self) -> bool:
        """True when the budget is too small for a double and only the log form is exact."""
        return self.delta_budget == 0.0 and math.isfinite(self.log2_delta_budget)

    def to_dict(self):
        return {
            "lambda": self.lam,
            "C": self.C,
            "epsilon": self.epsilon,
            "tau1": self.tau1,
            "t_epsilon": self.t_epsilon,
            "regime": self.regime,
            "delta_budget": self.delta_budget,
            "log2_delta_budget": self.log2_delta_budget,
        }


class CounterexampleReport:
    """One row of the regime-tightness table."""

    COLUMNS = ["family", "n", "tau1", "delta_actual", "delta_budget", "gap", "epsilon"]

    def __init__(
        self,
        family,
        n,
        lam,
        C,
        tau1,
        delta_actual,
        regime_report: RegimeReport,
        gap,
        gap_metric,
        extras=None,
    ):
        self.family = family
        self.n = int(n)
        self.lam = float(lam)
        self.C = float(C)
        self.tau1 = int(tau1)
        self.delta_actual = float(delta_actual)
        self.regime_report = regime_report
        self.gap = float(gap)
        self.gap_metric = gap_metric
        self.extras = extras or {}

    @property
    def epsilon(self) -> float:
        return self.regime_report.epsilon

    @property
    def delta_budget(self) -> float:
        return self.regime_report.delta_budget

    @property
    def delta_exceeds_budget(self) -> bool:
        return self.delta_actual > self.delta_budget

    @property
    def gap_exceeds_epsilon(self) -> bool:
        return self.gap > self.epsilon

    def to_row(self):
        """Flat record with the tightness-table columns."""
        return {
            "family": self.family,
            "n": self.n,
            "tau1": self.tau1,
            "delta_actual": self.delta_actual,
            "delta_budget": self.delta_budget,
            "gap": self.gap,
            "epsilon": self.epsilon,
        }

    def to_dict(self):
        return {
            **self.to_row(),
            "lambda": self.lam,
            "C": self.C,
            "regime": self.regime_report.regime,
            "t_epsilon": self.regime_report.t_epsilon,
            "log2_delta_budget": self.regime_report.log2_delta_budget,
            "gap_metric": self.gap_metric,
            "delta_exceeds_budget": self.delta_exceeds_budget,
            "gap_exceeds_epsilon": self.gap_exceeds_epsilon,
            **self.extras,
        }

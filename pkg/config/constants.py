import math

# Tolerances
METRIC_TOLERANCE = 1e-12
DISTRIBUTION_TOLERANCE = 1e-10
COUPLING_TOLERANCE = 1e-10
WITNESS_TOLERANCE = 1e-9
REGIME_BAND = 1e-12

# Transport flows run on integer masses: probability 1 == 2**FLOW_QUANTUM_BITS units
FLOW_QUANTUM_BITS = 48

# Brute-force Prohorov oracle enumerates 2**n subsets
BRUTEFORCE_MAX_POINTS = 20

# Markov chain analysis
TAU1_THRESHOLD = math.exp(-1)
DIRECT_SOLVE_MAX_STATES = 2000
STATIONARY_TOLERANCE = 1e-12
POWER_ITERATION_MAX_STEPS = 1_000_000

# tau1 keeps every row of P^t as a dense matrix
DENSE_POWER_MAX_STATES = 8192
TV_PIVOTS = 16

# Ball walk
SAMPLER_MAX_RESTARTS = 64
MIN_PRECISION_BITS = 4
U_GIVEAWAY_KAPPA = 1.0
MONTE_CARLO_CHUNK = 10_000

# Counterexample families
FAMILIES = ("convergent", "neutral", "divergent")

FAMILY_LAMBDA = {
    "convergent": 0.0,
    "neutral": 1.0,
    "divergent": 1.0,
}

# Lipschitz constants claimed for each family
FAMILY_C = {
    "convergent": 1.0,
    "neutral": 1.0,
    "divergent": 2.0,
}

# Accuracy each family is shown to defeat
FAMILY_EPSILON = {
    "convergent": 0.1,
    "neutral": 0.1,
    "divergent": 0.08,
}

# Reported next to families whose epsilon departs from the usual 0.1
FAMILY_EPSILON_NOTES = {
    "divergent": "epsilon = 0.08, not 0.1: the rho_1 gap between stationary laws is about 0.082",
}

CONVERGENT_MIN_N = 4
NEUTRAL_MIN_N = 10
DIVERGENT_MIN_N = 2
DIVERGENT_MAX_N = 14

# Asymptotic anchors for the convergent family
CONVERGENT_IDEAL_ANCHOR = math.exp(-0.5) * (1 - math.exp(-0.5))
CONVERGENT_PERTURBED_ANCHOR = math.exp(-2)

# CLI
SUBCOMMANDS = (
    "prohorov",
    "tv",
    "tau1",
    "stationary",
    "lipschitz",
    "regime",
    "counterexample",
    "divergence-sim",
    "ballwalk",
    "error-budget",
)

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "unknown_subcommand": 2,
    "invalid_parameters": 3,
    "horizon_exceeded": 4,
    "non_ergodic": 5,
    "instance_too_large": 6,
    "io_error": 7,
    "sampler_restart": 8,
}

CSV_SIGNIFICANT_DIGITS = 17

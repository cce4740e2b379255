import argparse
import json
import math
import sys

import numpy as np

from config.constants import EXIT_CODES, FAMILIES, FAMILY_C, FAMILY_LAMBDA, SUBCOMMANDS
from config.settings import WORKERS
from src.models.ball_walk import INJECTION_MODES, BallWalkConfig, ConvexBody, PerturbedSamplerConfig
from src.models.experiment import ExperimentConfig
from src.repositories.chain_json import ChainRepository
from src.services.ball_walk import (
    ballwalk_budgets,
    coupling_mismatch_rate,
    error_budget_trials,
    finite_precision_summary,
    finite_precision_walk,
    radial_cdf_check,
    run_ball_walk,
    stay_probability,
    summarize_error_budget,
)
from src.services.counterexamples import (
    adjacent_pairs,
    build_pair,
    verify_divergent_separation,
    verify_regime_tightness,
)
from src.services.markov import (
    coupled_divergence_simulation,
    kernel_lipschitz_constant,
    kernel_perturbation,
    stationary_distribution,
    variation_threshold_time,
)
from src.services.prohorov import prohorov_bruteforce, prohorov_distance, tv_distance
from src.services.regime import delta_budget, recursion_bound
from src.services.report import emit_report
from src.utils.errors import (
    HorizonExceededError,
    InstanceTooLargeError,
    NonErgodicChainError,
    SamplerRestartError,
)
from src.utils.logging import setup_logger
from src.utils.rng import stream

# Values used when neither the YAML file nor the command line sets them
DEFAULTS = {
    "prohorov": {"lam": 1.0, "bruteforce": False},
    "tv": {},
    "tau1": {"t_max": 10_000},
    "stationary": {},
    "lipschitz": {"pairs": "all"},
    "regime": {},
    "counterexample": {},
    "divergence-sim": {"runs": 10_000, "start": 0},
    "ballwalk": {"body": "ball:1", "steps": 100, "trials": 100_000, "epsilon": 0.1},
    "error-budget": {
        "body": "ball:1",
        "trials": 1000,
        "gaussian_error": 1e-6,
        "uniform_error": 1e-6,
        "mode": "shift",
    },
}

# Options shared by every subcommand; they never reach the parameter dict
COMMON = ("config", "log_level", "subcommand")


class UsageError(ValueError):
    """Raised instead of argparse's own exit on malformed arguments."""


class ExperimentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="YAML file of parameters (flags override it)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--output", help="Report path (default <output dir>/<subcommand>.<format>)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))


def _add_chain_source(parser: argparse.ArgumentParser):
    parser.add_argument("--input", help="Chain JSON file")
    parser.add_argument("--family", choices=FAMILIES)
    parser.add_argument("--n", type=int)
    parser.add_argument("--perturbed", action="store_true", default=None)


def _add_body(parser: argparse.ArgumentParser):
    parser.add_argument("--dimension", type=int)
    parser.add_argument("--radius", type=float)
    parser.add_argument("--body", help="ball:R or box:lo,hi")
    parser.add_argument("--trials", type=int)


def build_parser() -> ExperimentParser:
    parser = ExperimentParser(prog="markov-approx", description="Perturbed Markov chain experiments")
    commands = parser.add_subparsers(dest="subcommand", required=True)

    p = commands.add_parser("prohorov", help="Parametric Prohorov distance of a distribution pair")
    p.add_argument("--input", help="Pair JSON file")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--bruteforce", action="store_true", default=None, help="Also run the exhaustive oracle")

    p = commands.add_parser("tv", help="Total variation distance of a distribution pair")
    p.add_argument("--input", help="Pair JSON file")

    p = commands.add_parser("tau1", help="Variation threshold time")
    _add_chain_source(p)
    p.add_argument("--t-max", type=int)

    p = commands.add_parser("stationary", help="Stationary distribution")
    _add_chain_source(p)

    p = commands.add_parser("lipschitz", help="Kernel Lipschitz constant")
    _add_chain_source(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--pairs", choices=("all", "adjacent"))

    p = commands.add_parser("regime", help="Regime and perturbation budget")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--C", dest="C", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau1", type=int)

    p = commands.add_parser("counterexample", help="Regime-tightness report for one family")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int, help="Horizon for the divergent separation check")
    p.add_argument("--t-max", type=int)

    p = commands.add_parser("divergence-sim", help="Coupled ideal/perturbed simulation")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--start", type=int)

    p = commands.add_parser("ballwalk", help="Ball-walk budgets and sampler checks")
    _add_body(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--precision-bits", type=int)

    p = commands.add_parser("error-budget", help="Perturbed sampler trials")
    _add_body(p)
    p.add_argument("--gaussian-error", type=float)
    p.add_argument("--uniform-error", type=float)
    p.add_argument("--mode", choices=INJECTION_MODES)

    for sub in commands.choices.values():
        _add_common(sub)
    return parser


def _chain(cfg: ExperimentConfig):
    if cfg.get("input"):
        return ChainRepository().load_chain(cfg.get("input"))
    if cfg.get("family") is None or cfg.get("n") is None:
        raise ValueError(f"{cfg.subcommand} needs --input or --family with --n")
    pair = build_pair(cfg.get("family"), int(cfg.get("n")))
    return pair.perturbed if cfg.get("perturbed") else pair.ideal


def _body_config(cfg: ExperimentConfig, precision_bits=None) -> BallWalkConfig:
    n = int(cfg.require("dimension"))
    body = ConvexBody.from_string(str(cfg.get("body")), n)
    # Step radius of order 1/sqrt(n) relative to the body
    r = cfg.get("radius") or body.diameter / (2 * math.sqrt(n))
    return BallWalkConfig(body, r, seed=cfg.seed, precision_bits=precision_bits)


def cmd_prohorov(cfg, logger):
    p, q = ChainRepository().load_pair(cfg.require("input"))
    lam = float(cfg.get("lam"))
    result = prohorov_distance(p, q, p.space, lam)
    logger.info(f"Prohorov distance on {p.space.size} points: {result.value:.12g}")
    payload = {**result.to_dict(), "witness": result.witness_coupling.to_dict()}
    row = result.to_dict()
    if cfg.get("bruteforce"):
        oracle = prohorov_bruteforce(p, q, p.space, lam)
        payload["bruteforce_value"] = row["bruteforce_value"] = oracle
    return payload, [row], f"prohorov: value={result.value:.12g} at lambda={lam:g}"


def cmd_tv(cfg, logger):
    p, q = ChainRepository().load_pair(cfg.require("input"))
    value = tv_distance(p, q)
    return {"tv": value}, [{"tv": value}], f"tv: {value:.12g}"


def cmd_tau1(cfg, logger):
    chain = _chain(cfg)
    result = variation_threshold_time(chain, int(cfg.get("t_max")), logger=logger)
    return result.to_dict(), result.to_records(), f"tau1: {result.tau1} on {chain.size} states"


def cmd_stationary(cfg, logger):
    chain = _chain(cfg)
    pi = stationary_distribution(chain, logger=logger)
    records = [
        {"state": i, "label": label, "probability": float(w)}
        for i, (label, w) in enumerate(zip(chain.space.labels, pi.weights))
    ]
    return records, records, f"stationary: {chain.size} states, max mass {pi.weights.max():.6g}"


def cmd_lipschitz(cfg, logger):
    chain = _chain(cfg)
    lam = float(cfg.require("lam"))
    pairs = cfg.get("pairs")
    if pairs == "adjacent":
        if cfg.get("family") is None:
            raise ValueError("--pairs adjacent needs --family")
        selected = adjacent_pairs(cfg.get("family"), int(cfg.get("n")))
    else:
        selected = "all"
    constant = kernel_lipschitz_constant(chain, lam, selected, logger=logger)
    payload = {"lambda": lam, "pairs": pairs, "states": chain.size, "C": constant}
    return payload, [payload], f"lipschitz: C={constant:.12g} at lambda={lam:g}"


def cmd_regime(cfg, logger):
    report = delta_budget(
        float(cfg.require("lam")),
        float(cfg.require("C")),
        float(cfg.require("epsilon")),
        int(cfg.require("tau1")),
    )
    payload = report.to_dict()
    return (
        payload,
        [payload],
        f"regime: {report.regime}, t_epsilon={report.t_epsilon}, delta={report.delta_budget:.6g}",
    )


def cmd_counterexample(cfg, logger):
    family, n = cfg.require("family"), int(cfg.require("n"))
    report = verify_regime_tightness(family, n, cfg.get("t_max"), logger=logger)
    payload = report.to_dict()
    if cfg.get("t") is not None:
        if family != "divergent":
            raise ValueError("--t applies to the divergent family only")
        payload["separation"] = verify_divergent_separation(n, int(cfg.get("t")))
    summary = (
        f"counterexample: {family} n={n}, tau1={report.tau1}, gap={report.gap:.6g}, "
        f"delta_actual={report.delta_actual:.6g}, budget={report.delta_budget:.6g}"
    )
    if "epsilon_note" in report.extras:
        summary += f" ({report.extras['epsilon_note']})"
    return payload, [report.to_row()], summary


def cmd_divergence_sim(cfg, logger):
    family, n = cfg.require("family"), int(cfg.require("n"))
    t, runs = int(cfg.require("t")), int(cfg.get("runs"))
    lam = FAMILY_LAMBDA[family] if cfg.get("lam") is None else float(cfg.get("lam"))
    pair = build_pair(family, n)

    trace = coupled_divergence_simulation(
        pair, t, runs, cfg.seed, lam=lam, start=int(cfg.get("start")), workers=cfg.workers, logger=logger
    )
    delta, _ = kernel_perturbation(pair, lam)
    threshold, bound = recursion_bound(lam, FAMILY_C[family], delta, t)
    exceedance, se = trace.exceedance(threshold)
    payload = {
        "family": family,
        "n": n,
        "t": t,
        "runs": runs,
        "lambda": lam,
        "delta": delta,
        "distance_threshold": threshold,
        "probability_bound": bound,
        "exceedance": exceedance,
        "standard_error": se,
        "median_distance": trace.median(),
        "within_bound": exceedance <= bound + 3 * se,
    }
    return (
        payload,
        trace.to_records(),
        f"divergence-sim: Pr[D_t > {threshold:.6g}] = {exceedance:.6g} (bound {bound:.6g})",
    )


def cmd_ballwalk(cfg, logger):
    bits = cfg.get("precision_bits")
    walk = _body_config(cfg, bits)
    n, r, body = walk.dimension, walk.r, walk.body
    trials, steps = int(cfg.get("trials")), int(cfg.get("steps"))
    x = body.interior_point

    payload = {
        "body": body.to_dict(),
        "budgets": ballwalk_budgets(n, r, body.diameter, float(cfg.get("epsilon"))),
        "radial_cdf": radial_cdf_check(n, r, trials, cfg.seed, workers=cfg.workers),
        "coupling": coupling_mismatch_rate(n, r, 0.01 * r, trials, cfg.seed + 1, workers=cfg.workers),
        "stay_probability": stay_probability(walk, x, trials, cfg.seed + 2, workers=cfg.workers),
    }

    rng = stream(cfg.seed, 0)
    if bits is not None:
        payload["finite_precision"] = finite_precision_summary(
            walk, x, steps, max(trials // 1000, 1), cfg.seed + 3, workers=cfg.workers
        )
        records = finite_precision_walk(walk, x, steps, rng).to_records()
    else:
        path = run_ball_walk(walk, x, steps, rng, logger=logger)
        gaps = np.linalg.norm(path - x, axis=1)
        records = [
            {"t": t, **{f"x{i}": float(v) for i, v in enumerate(point)}, "distance_from_start": float(d)}
            for t, (point, d) in enumerate(zip(path, gaps))
        ]

    budgets = payload["budgets"]
    return (
        payload,
        records,
        f"ballwalk: n={n}, r={r:.6g}, lambda*C={budgets['lambda_C']:.6g}, "
        f"tau1~{budgets['tau1_estimate']:.6g}, delta~{budgets['delta_estimate']:.6g}",
    )


def cmd_error_budget(cfg, logger):
    walk = _body_config(cfg)
    perturbation = PerturbedSamplerConfig(
        float(cfg.get("gaussian_error")), float(cfg.get("uniform_error")), cfg.get("mode")
    )
    samples = error_budget_trials(
        walk, perturbation, walk.body.interior_point, int(cfg.get("trials")), cfg.seed, cfg.workers
    )
    summary = summarize_error_budget(samples, walk, perturbation)
    return (
        summary,
        [s.to_dict() for s in samples],
        f"error-budget: {len(samples)} trials, mean step error {summary['step_error_mean']:.6g}",
    )


COMMANDS = {
    "prohorov": cmd_prohorov,
    "tv": cmd_tv,
    "tau1": cmd_tau1,
    "stationary": cmd_stationary,
    "lipschitz": cmd_lipschitz,
    "regime": cmd_regime,
    "counterexample": cmd_counterexample,
    "divergence-sim": cmd_divergence_sim,
    "ballwalk": cmd_ballwalk,
    "error-budget": cmd_error_budget,
}


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the documented exit code."""
    if isinstance(error, HorizonExceededError):
        return EXIT_CODES["horizon_exceeded"]
    if isinstance(error, NonErgodicChainError):
        return EXIT_CODES["non_ergodic"]
    if isinstance(error, InstanceTooLargeError):
        return EXIT_CODES["instance_too_large"]
    if isinstance(error, SamplerRestartError):
        return EXIT_CODES["sampler_restart"]
    if isinstance(error, (ValueError, KeyError, TypeError)):
        return EXIT_CODES["invalid_parameters"]
    if isinstance(error, OSError):
        return EXIT_CODES["io_error"]
    return EXIT_CODES["internal"]


def _fail(name: str, message: str, code: int, **details) -> int:
    print(json.dumps({"error": name, "message": message, "exit_code": code, **details}), file=sys.stderr)
    return code


def _error_details(error: BaseException) -> dict:
    """Partial results an error carries, for the JSON error line."""
    if isinstance(error, HorizonExceededError):
        return {"t_max": error.t_max, "threshold": error.threshold, "profile": error.profile}
    return {}


def run(argv=None) -> int:
    """
    Execute one subcommand and write its report.

    Returns:
        The process exit status (0 on success, see EXIT_CODES otherwise)
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or (argv[0] not in SUBCOMMANDS and argv[0] not in ("-h", "--help")):
        given = argv[0] if argv else ""
        return _fail(
            "UnknownSubcommand",
            f"Unknown subcommand {given!r}; expected one of {', '.join(SUBCOMMANDS)}",
            EXIT_CODES["unknown_subcommand"],
        )

    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail(type(e).__name__, str(e), EXIT_CODES["invalid_parameters"])
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    logger = setup_logger("markov_approx", args.log_level, subcommand=args.subcommand)
    try:
        cli = {k: v for k, v in vars(args).items() if k not in COMMON}
        cfg = ExperimentConfig.from_sources(args.subcommand, cli, DEFAULTS[args.subcommand], args.config)
        if cfg.workers is None:
            cfg.workers = WORKERS
        logger.info(f"Running {cfg.subcommand} with {cfg.parameters} (seed {cfg.seed})")

        payload, records, summary = COMMANDS[cfg.subcommand](cfg, logger)
        path = emit_report(payload if cfg.fmt == "json" else records, cfg.fmt, cfg.output_path)
        print(f"{summary} -> {path}")
        return EXIT_CODES["ok"]
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"Error: {type(e).__name__}: {e}")
        return _fail(type(e).__name__, str(e), code, **_error_details(e))


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

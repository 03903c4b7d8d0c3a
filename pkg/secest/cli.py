"""
secest command-line interface.

Usage Examples:
    # Simulate a system under a roving budget attack and export the trajectory
    python run_secest.py simulate --system sys.json --steps 50 --policy changing_support_budget --budget 20

    # Decode a window of measurements (rows = time steps, columns = sensors)
    python run_secest.py decode --system sys.json --window y.csv --method qr --dump-lp lp.txt

    # Design report and secure feedback
    python run_secest.py check --system sys.json --window 8
    python run_secest.py design --system sys.json --poles auto

    # Experiments
    python run_secest.py uav --scenario mitm --ny 5
    python run_secest.py montecarlo --trials 100 --self-check
    python run_secest.py demo --which fixed_vs_roving
"""

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from secest.core.config import ConfigurationError, SecestConfig
from secest.core.errors import SecestError
from secest.utils import LOG_FORMAT, get_timestamp

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "decode", "check", "design", "track", "uav", "montecarlo", "demo")


def setup_logging(level: str = "INFO", log_dir: Optional[Path] = None) -> None:
    """Configure root logging to stdout and a run log"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / f"secest_{get_timestamp()}.log"))
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        prog="secest",
        description="Secure state estimation under sparse, time-varying sensor attacks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", type=str, help="YAML or JSON configuration file")
    parser.add_argument("--seed", type=int, help="Random seed (overrides execution.seed)")
    parser.add_argument("--threads", type=int, help="Worker threads (overrides execution.threads)")
    parser.add_argument("--out", type=str, help="Output directory (overrides reporting.output_dir)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging level")
    parser.add_argument("--self-check", action="store_true",
                        help="Exit nonzero when an experiment invariant is violated")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Simulate a system under attack and export the trajectory")
    p.add_argument("--system", required=True, help="System JSON file")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--x0", type=_float_list, help="Initial state, comma separated (default: standard normal)")
    p.add_argument("--policy", default="changing_support_budget",
                   choices=["fixed_support", "changing_support_budget",
                            "ramp_plus_roving_noise", "sinusoid_plus_roving_noise"])
    p.add_argument("--budget", type=int, default=0, help="Total attack budget S")
    p.add_argument("--support", type=_int_list, help="Attacked sensors for fixed_support")

    p = sub.add_parser("decode", help="Decode the initial state of one measurement window")
    p.add_argument("--system", required=True, help="System JSON file")
    p.add_argument("--window", required=True, help="CSV file, one row of p measurements per step")
    p.add_argument("--method", choices=["qr", "direct"], help="Decoder (default decoder.method)")
    p.add_argument("--json-out", help="Write the decode result to this JSON file")
    p.add_argument("--dump-lp", help="Write the l1 linear program to this text file")

    p = sub.add_parser("check", help="Design report: supports, q_max, window bound, rank checks")
    p.add_argument("--system", required=True, help="System JSON file")
    p.add_argument("--window", type=int, help="Window length T (default: recommended bound)")
    p.add_argument("--sparsity", type=int, help="Total sparsity s for the rank/support checks")
    p.add_argument("--samples", type=int, default=2000, help="Samples for randomized checks")
    p.add_argument("--format", choices=["json", "text"], default="text")

    p = sub.add_parser("design", help="Design decoder-aware state feedback")
    p.add_argument("--system", required=True, help="System JSON file with A and B")
    p.add_argument("--poles", default="auto", help="'auto' (LQR-based) or comma separated base poles")
    p.add_argument("--max-shift", type=float, help="Largest pole perturbation (default design.max_shift)")
    p.add_argument("--iterations", type=int, help="Perturbation sweeps (default design.iterations)")

    p = sub.add_parser("track", help="Run KF / SE / SE+KF on a simulated attacked trajectory")
    p.add_argument("--system", required=True, help="System JSON file")
    p.add_argument("--attacks", default="ramp_plus_roving_noise",
                   help="Attack CSV file (steps x p) or a policy name")
    p.add_argument("--method", choices=["kf", "se", "se+kf"], action="append",
                   help="Estimator(s) to run (repeatable; default all)")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--window", type=int, help="Decoding window T (default n)")
    p.add_argument("--budget", type=int, help="Total attack budget S for budget policies")

    p = sub.add_parser("uav", help="Quadrotor attack scenarios")
    p.add_argument("--scenario", choices=["mitm", "gps"], default="mitm")
    p.add_argument("--ny", type=int, choices=[3, 5, 8], help="Number of measurements")
    p.add_argument("--methods", nargs="+", choices=["kf", "se", "se+kf"])
    p.add_argument("--steps", type=int, help="Simulation steps")

    p = sub.add_parser("montecarlo", help="Success-rate sweep over attack budgets")
    p.add_argument("--sources", nargs="+",
                   choices=["ideal_gaussian_coding", "designed_feedback", "poor_feedback", "random_lti"])
    p.add_argument("--trials", type=int, help="Trials per budget (overrides montecarlo.trials_per_point)")
    p.add_argument("--full", action="store_true", help="Use montecarlo.full_trials trials per budget")
    p.add_argument("--p-sweep", type=_int_list, help="Sweep sensor counts, e.g. 8,10,12")

    p = sub.add_parser("demo", help="Small demonstrations and cross-checks")
    p.add_argument("--which", choices=["fixed_vs_roving", "decoder_equivalence"], default="fixed_vs_roving")
    p.add_argument("--trials", type=int, help="Trials for decoder_equivalence")

    return parser.parse_args(argv)


def _runtime_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["execution.seed"] = args.seed
    if args.threads is not None:
        overrides["execution.threads"] = args.threads
    if args.out:
        overrides["reporting.output_dir"] = args.out
    return overrides


def _output_dir(config: Dict[str, Any], command: str) -> Path:
    root = Path(config["reporting"]["output_dir"])
    path = root / f"{command}_{get_timestamp()}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _solver(config: Dict[str, Any]):
    from secest.core.l1solve import SimplexSolver

    s = config["solver"]
    return SimplexSolver(feas_tol=float(s["feas_tol"]), opt_tol=float(s["opt_tol"]),
                         max_iters=int(s["max_iters"]), pivot_rule=s["pivot_rule"],
                         degenerate_switch=int(s["degenerate_switch"]))


def _attack_params(config: Dict[str, Any], policy: str, args: argparse.Namespace) -> Dict[str, Any]:
    a = config["attacks"]
    params: Dict[str, Any] = {"amplitude": a["amplitude"], "roving_std": a["roving_std"],
                              "target": a["ramp_target"]}
    if policy == "ramp_plus_roving_noise":
        params["slope"] = a["ramp_slope"]
    elif policy == "sinusoid_plus_roving_noise":
        params.update(amplitude=a["sinusoid_amplitude"], period=a["sinusoid_period"])
    if getattr(args, "budget", None) is not None:
        params["budget"] = args.budget
    if getattr(args, "support", None):
        params["support"] = args.support
    return params


def cmd_simulate(args, config) -> int:
    from secest.core.model import AttackPolicy, generate_attacks, load_system, simulate, trajectory_to_frame
    from secest.utils.report_generator import ReportGenerator

    sys_ = load_system(args.system)
    seed = config["execution"]["seed"]
    rng = np.random.default_rng(seed)
    x0 = np.asarray(args.x0) if args.x0 else rng.standard_normal(sys_.n)
    attacks = generate_attacks(AttackPolicy(args.policy), sys_.p, args.steps,
                               _attack_params(config, args.policy, args), rng=rng)
    traj = simulate(sys_, x0, attacks, args.steps, seed=seed)

    reporter = ReportGenerator(str(_output_dir(config, "simulate")))
    path = reporter.write_table_csv(trajectory_to_frame(traj), "trajectory.csv")
    logger.info(f"Trajectory written to {path}")
    print(path)
    return 0


def cmd_decode(args, config) -> int:
    from secest.core.decoder import decode
    from secest.core.l1solve import basis_pursuit_problem, dump_lp, l1_regression_problem
    from secest.core.model import build_observability, load_system
    from secest.utils import save_json_file, to_serializable

    sys_ = load_system(args.system)
    window = pd.read_csv(args.window, header=None).to_numpy(dtype=float)
    if window.ndim != 2 or window.shape[1] != sys_.p:
        raise SecestError(f"Window file must have {sys_.p} columns, got shape {window.shape}")
    T = window.shape[0]
    code = build_observability(sys_, T)
    y = window.reshape(-1)
    method = args.method or config["decoder"]["method"]

    if args.dump_lp:
        problem = (basis_pursuit_problem(code.q2.T, code.q2.T @ y) if method == "qr"
                   else l1_regression_problem(code.phi, y))
        logger.info(f"LP written to {dump_lp(problem, args.dump_lp)}")

    result = decode(code, y, method, _solver(config), float(config["decoder"]["support_tol"]))
    if not result.unique:
        logger.warning("The l1 program has alternative optimal solutions; the estimate is one of them")
    doc = {
        "method": result.method,
        "window": T,
        "x0_hat": result.x0_hat,
        "e_hat": result.attack_blocks(sys_.p),
        "per_step_supports": [sorted(s) for s in result.per_step_supports],
        "residual_l1": result.residual_l1,
        "unique": result.unique,
    }
    if args.json_out:
        save_json_file(doc, args.json_out)
        logger.info(f"Decode result written to {args.json_out}")
    print(json.dumps(to_serializable(doc), indent=2))
    return 0


def _check_report(sys_, T: Optional[int], sparsity: Optional[int], samples: int, seed: int) -> Dict[str, Any]:
    from secest.core.conditions import (
        ComplexSpectrumWarning,
        check_design_conditions,
        check_rank_condition,
        check_support_condition,
        max_correctable,
        support_profile,
    )
    from secest.core.model import build_observability

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComplexSpectrumWarning)
        profile = support_profile(sys_.a_closed, sys_.c)
    q = max_correctable(profile, sys_.p)
    conditions = check_design_conditions(sys_.a_open, sys_.b, sys_.c, sys_.g, T or sys_.n)
    if T is None:
        T = conditions["t_bound"]["t_recommended"] if conditions["t_bound"] else sys_.n
        conditions = check_design_conditions(sys_.a_open, sys_.b, sys_.c, sys_.g, T)
    code = build_observability(sys_, T)
    s = sparsity if sparsity is not None else q * T
    return {
        "n": sys_.n,
        "p": sys_.p,
        "window": T,
        "support_profile": profile.to_dict(),
        "q_max": q,
        "conditions": conditions,
        "sparsity": s,
        "rank_condition": check_rank_condition(code, s, n_samples=samples, seed=seed) if s > 0 else True,
        "support_condition": check_support_condition(code, s, n_samples=samples, seed=seed),
    }


def _print_check_text(report: Dict[str, Any]) -> None:
    profile = report["support_profile"]
    print(f"n = {report['n']}, p = {report['p']}, T = {report['window']}")
    print(f"{'i':>3}  {'lambda_i':>12}  {'s_i':>4}")
    for i, (lam, s) in enumerate(zip(profile["eigvals"], profile["s"])):
        print(f"{i:>3}  {lam:>12.6f}  {s:>4}")
    print(f"q_max = {report['q_max']}")
    bound = report["conditions"]["t_bound"]
    if bound:
        print(f"T* = {bound['t_star']:.4f}, recommended T = {bound['t_recommended']}")
    for key, value in report["conditions"].items():
        if key.startswith("condition_"):
            print(f"{key:<40} {'yes' if value else 'no'}")
    print(f"rank condition (s = {report['sparsity']}): {report['rank_condition']}")
    print(f"support condition (s = {report['sparsity']}): {report['support_condition']}")


def cmd_check(args, config) -> int:
    from secest.core.model import load_system
    from secest.utils import to_serializable

    report = _check_report(load_system(args.system), args.window, args.sparsity, args.samples,
                           config["execution"]["seed"])
    if args.format == "json":
        print(json.dumps(to_serializable(report), indent=2))
    else:
        _print_check_text(report)
    return 0


def cmd_design(args, config) -> int:
    from secest.core.design import design_secure_feedback, perturb_for_security
    from secest.core.model import load_system
    from secest.utils.report_generator import ReportGenerator

    sys_ = load_system(args.system)
    d = config["design"]
    max_shift = args.max_shift if args.max_shift is not None else float(d["max_shift"])
    iterations = args.iterations if args.iterations is not None else int(d["iterations"])
    Q = float(d["q_scale"]) * np.eye(sys_.n)
    R = float(d["r_scale"]) * np.eye(sys_.m)
    if args.poles == "auto":
        report = design_secure_feedback(sys_.a_open, sys_.b, sys_.c, Q, R, max_shift, iterations)
    else:
        report = perturb_for_security(sys_.a_open, sys_.b, sys_.c, _float_list(args.poles),
                                      max_shift=max_shift, iterations=iterations, Q_cost=Q, R_cost=R)
    path = ReportGenerator(str(_output_dir(config, "design"))).write_json(report.to_dict(), "design.json")
    logger.info(f"Design report written to {path}")
    print(json.dumps(report.to_dict()["support_profile"], indent=2))
    return 0


def cmd_track(args, config) -> int:
    from secest.core.kalman import FILTER_METHODS, run_filters
    from secest.core.model import AttackPolicy, AttackSequence, generate_attacks, load_system, simulate
    from secest.utils.report_generator import ReportGenerator

    sys_ = load_system(args.system)
    seed = config["execution"]["seed"]
    rng = np.random.default_rng(seed)
    if Path(args.attacks).exists():
        attacks = AttackSequence(pd.read_csv(args.attacks, header=None).to_numpy(dtype=float))
    else:
        attacks = generate_attacks(AttackPolicy(args.attacks), sys_.p, args.steps,
                                   _attack_params(config, args.attacks, args), rng=rng)
    steps = min(args.steps, attacks.length)
    traj = simulate(sys_, rng.standard_normal(sys_.n), attacks, steps, seed=seed)
    methods = tuple(args.method or FILTER_METHODS)
    T = args.window or sys_.n
    est = run_filters(sys_, traj.corrupted_outputs, None, T, methods,
                      decoder_method=config["decoder"]["method"],
                      p0_scale=float(config["kalman"]["p0_scale"]),
                      r_inflation=float(config["kalman"]["r_inflation"]),
                      solver=_solver(config))

    data: Dict[str, Any] = {"t": np.arange(steps)}
    for i in range(sys_.n):
        data[f"x_{i + 1}"] = traj.states[:, i]
        for m in methods:
            data[f"{m}_x_{i + 1}"] = est[m][:, i]
    for i in range(sys_.p):
        data[f"e_{i + 1}"] = attacks.vectors[:steps, i]
        data[f"e_hat_{i + 1}"] = est["e_hat"][:, i]
    path = ReportGenerator(str(_output_dir(config, "track"))).write_table_csv(pd.DataFrame(data), "track.csv")
    for m in methods:
        rmse = float(np.sqrt(np.mean((est[m][T:] - traj.states[T:]) ** 2)))
        logger.info(f"{m}: state RMSE after warm-up {rmse:.4g}")
    print(path)
    return 0


def _run_experiment(name: str, args, config, **options) -> int:
    from secest.runners.base_runner import ExperimentRunner

    runner = ExperimentRunner(name, config)
    runner.set_options(self_check=args.self_check, **options)
    result = runner.run()
    if not result.get("success", False):
        logger.error(f"Experiment {name} failed: {result.get('error') or result.get('violations')}")
        return 1
    logger.info(f"Results in {result['results_dir']}")
    return 0


def cmd_uav(args, config) -> int:
    if args.methods:
        config["uav"]["methods"] = list(args.methods)
    if args.steps:
        config["uav"]["steps"] = args.steps
    name = "mitm" if args.scenario == "mitm" else "gps_spoof"
    return _run_experiment(name, args, config, n_y=args.ny)


def cmd_montecarlo(args, config) -> int:
    trials = config["montecarlo"]["full_trials"] if args.full else args.trials
    if args.p_sweep:
        return _run_experiment("p_sweep", args, config, sources=args.sources, trials=trials,
                               p_values=args.p_sweep)
    return _run_experiment("montecarlo", args, config, sources=args.sources, trials=trials)


def cmd_demo(args, config) -> int:
    return _run_experiment(args.which, args, config, trials=args.trials)


HANDLERS = {
    "simulate": cmd_simulate,
    "decode": cmd_decode,
    "check": cmd_check,
    "design": cmd_design,
    "track": cmd_track,
    "uav": cmd_uav,
    "montecarlo": cmd_montecarlo,
    "demo": cmd_demo,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = parse_arguments(argv)
    try:
        config = SecestConfig.load_config(args.config)
    except ConfigurationError as e:
        setup_logging(args.log_level or "INFO")
        logger.error(f"Configuration error: {e}")
        return 1

    for key, value in _runtime_overrides(args).items():
        section, name = key.split(".")
        config[section][name] = value

    level = args.log_level or config["execution"].get("log_level", "INFO")
    setup_logging(level, Path(config["reporting"]["output_dir"]))
    logger.info(f"Starting secest {args.command}")

    try:
        return HANDLERS[args.command](args, config)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 130
    except SecestError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        return 1
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())

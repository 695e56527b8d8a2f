# cli.py
# Command-line entry point for the homomorphism toolkit.
#
# What this does:
#   mdp validate|show <file>          schema + stochasticity check of an MDP JSON file
#   quotient <mdp> <hom>              quotient MDP + homomorphism report
#   minimize <mdp> --tol T            coarsest lax-bisimulation homomorphism + its quotient
#   metrics <mdp> --kind bisim|lax    metric table as CSV
#   verify --suite all|finite|...     acceptance checks, JSON reports
#   verify --suite training           paired ddpg / dhpg_summed training runs (opt-in, slow)
#   train --env pendulum --variant V  DHPG / DDPG training run
#
# Every command that produces files writes them into one run directory under the
# output root (HOMPG_OUTPUT_ROOT from the environment or .env, default runs/,
# --out overrides) together with manifest.json.
#
# Exit codes: 0 success, 1 a check failed, 2 bad input.
#
# Run with:  python cli.py verify --suite finite

import argparse
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

# make sure src/ and tools/ are importable when run as a script
sys.path.insert(0, str(Path(__file__).parent))

from run_tracker import RunTracker, output_root, run_dir_name
from src.guardrails import (
    DimensionMismatch,
    HomomorphismToolkitError,
    InfeasibleMarginals,
    NonStochasticMatrix,
    SchemaError,
    stochasticity_report,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2

INPUT_ERRORS = (SchemaError, NonStochasticMatrix, DimensionMismatch, InfeasibleMarginals, FileNotFoundError)


def _banner(title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def _manifest_config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose")}


def _tracker(args, command: str, seed=None, config=None, log_fields=None, **tags) -> RunTracker:
    run_dir = output_root(args.out) / run_dir_name(command, seed, **tags)
    config = _manifest_config(args) if config is None else config
    return RunTracker(run_dir, command, config=config, seed=seed, log_fields=log_fields)


# -- mdp --

def cmd_mdp(args) -> int:
    from tools.mdp_files import LOAD_ROW_TOL, load_mdp

    mdp = load_mdp(args.file)
    if args.action == "validate":
        report = stochasticity_report(mdp.transitions, LOAD_ROW_TOL)
        print(f"{args.file}: valid MDP with {mdp.n_states} states, {mdp.n_actions} actions, gamma {mdp.gamma}")
        print(f"  worst transition row error: {report['worst_error']:.3g}")
        return EXIT_OK

    _banner(f"MDP: {args.file}")
    print(f"States: {mdp.n_states}")
    print(f"Actions: {mdp.n_actions}")
    print(f"Gamma: {mdp.gamma}")
    print(f"Rewards: min {mdp.rewards.min():.6g}, max {mdp.rewards.max():.6g}")
    print("=" * 60)
    print("\nRewards R[s, a]:")
    for s, row in enumerate(mdp.rewards):
        print(f"  s{s}: " + "  ".join(f"{r: .4f}" for r in row))
    print()
    return EXIT_OK


# -- quotient / minimize / metrics --

def cmd_quotient(args) -> int:
    from src.homomorphism import quotient_mdp
    from tools.mdp_files import load_homomorphism, load_mdp, save_mdp, save_report

    mdp = load_mdp(args.mdp)
    h = load_homomorphism(args.hom)
    h.check_dimensions(mdp)
    # strict=False so an inexact homomorphism still gets its report written
    quotient, report = quotient_mdp(mdp, h, args.tol, strict=False)

    tracker = _tracker(args, "quotient", mdp=Path(args.mdp).stem, hom=Path(args.hom).stem)
    save_mdp(quotient, tracker.register_output("quotient.json"))
    save_report(report.to_dict(), tracker.register_output("homomorphism_report.json"))
    tracker.log_event("quotient", is_exact=report.is_exact, n_abstract_states=quotient.n_states)
    tracker.finish()
    tracker.print_run_summary(report.to_dict())
    if not report.is_exact:
        print("Homomorphism is not exact at this tolerance.")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_minimize(args) -> int:
    from src.homomorphism import quotient_mdp, minimize_lax
    from tools.mdp_files import load_mdp, save_homomorphism, save_mdp, save_report

    mdp = load_mdp(args.mdp)
    h, quotient = minimize_lax(mdp, args.tol)
    _, report = quotient_mdp(mdp, h, max(args.tol, 1e-12), strict=False)

    tracker = _tracker(args, "minimize", mdp=Path(args.mdp).stem)
    save_homomorphism(h, tracker.register_output("homomorphism.json"))
    save_mdp(quotient, tracker.register_output("quotient.json"))
    save_report(report.to_dict(), tracker.register_output("homomorphism_report.json"))
    tracker.log_event(
        "minimize", n_states=mdp.n_states, n_abstract_states=h.n_abstract_states,
        n_abstract_actions=h.n_abstract_actions, is_exact=report.is_exact,
    )
    tracker.finish()
    tracker.print_run_summary({
        "states": mdp.n_states,
        "abstract_states": h.n_abstract_states,
        "abstract_actions": h.n_abstract_actions,
        "is_exact": report.is_exact,
    })
    return EXIT_OK


def cmd_metrics(args) -> int:
    from src.metrics import bisim_metric, lax_bisim_metric
    from tools.mdp_files import load_mdp, save_metric_csv, save_report

    mdp = load_mdp(args.mdp)
    compute = bisim_metric if args.kind == "bisim" else lax_bisim_metric
    table = compute(mdp, c_r=args.c_r, c_t=args.c_t, tol=args.tol)

    tracker = _tracker(args, "metrics", kind=args.kind, mdp=Path(args.mdp).stem)
    save_metric_csv(table.d, tracker.register_output("metric.csv"))
    summary = table.summary()
    summary["residual_history"] = list(table.residual_history)
    save_report(summary, tracker.register_output("metric_summary.json"))
    if table.state_distances is not None:
        save_metric_csv(table.state_distances, tracker.register_output("state_metric.csv"))
    details = table.summary()
    tracker.log_event("metrics", metric=details.pop("kind"), **details)
    tracker.finish()
    tracker.print_run_summary(table.summary())
    return EXIT_OK


# -- verify --

def _training_tracker_factory(parent: RunTracker):
    """Each training run of the opt-in suite gets its own run directory inside the verify run."""
    from src.dhpg_agent import LOG_FIELDS

    def make(seed, config) -> RunTracker:
        name = run_dir_name("train", seed, env="pendulum", variant=config.variant)
        return RunTracker(parent.run_dir / name, "train", config=config.to_dict(), seed=seed, log_fields=LOG_FIELDS)

    return make


def cmd_verify(args) -> int:
    from src.verify_suite import SUITES, TRAINING_SUITE, run_suite
    from tools.mdp_files import save_report

    suites = SUITES if args.suite == "all" else (args.suite,)
    tracker = _tracker(args, "verify", seed=args.seed, suite=args.suite, corrupt="corrupt" if args.corrupt else None)
    factory = _training_tracker_factory(tracker) if args.suite == TRAINING_SUITE else None

    all_passed = True
    for name in suites:
        result = run_suite(name, seed=args.seed, quick=args.quick, corrupt=args.corrupt, tracker_factory=factory)
        save_report(result, tracker.register_output(f"{name}.json"))
        for check in result["checks"]:
            tracker.log_event("check", suite=name, name=check["name"], passed=check["passed"])
            status = "PASS" if check["passed"] else "FAIL"
            print(f"  [{status}] {name}/{check['name']}")
        all_passed = all_passed and result["passed"]

    tracker.finish()
    tracker.print_run_summary({"suites": ", ".join(suites), "passed": all_passed})
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


# -- train --

def cmd_train(args) -> int:
    from src.dhpg_agent import LOG_FIELDS, load_config, train, training_summary
    from src.envs import make_env
    from tools.checkpoints import save_checkpoint

    config = load_config(args.config, variant=args.variant)
    env = make_env(args.env, seed=args.seed)
    tracker = _tracker(
        args, "train", seed=args.seed, config=config.to_dict(), log_fields=LOG_FIELDS,
        env=args.env, variant=config.variant,
    )
    tracker.log_event("start", env=args.env, variant=config.variant, steps=args.steps)

    try:
        result = train(env, config, args.seed, args.steps, tracker=tracker, verbose=args.verbose)
    except HomomorphismToolkitError:
        tracker.finish()
        raise

    save_checkpoint(tracker.register_output("checkpoint.json"), result.agent.named_modules())
    summary = training_summary(result, env)
    tracker.write_json("summary.json", summary)
    tracker.finish()
    tracker.print_run_summary({k: v for k, v in summary.items() if k != "symmetry"})
    return EXIT_OK


# -- Argument parsing --

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="MDP homomorphism toolkit")
    parser.add_argument("--out", default=None, help="output root (overrides HOMPG_OUTPUT_ROOT)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mdp", help="validate or show an MDP file")
    p.add_argument("action", choices=["validate", "show"])
    p.add_argument("file")
    p.set_defaults(func=cmd_mdp)

    p = sub.add_parser("quotient", help="quotient an MDP by a homomorphism")
    p.add_argument("mdp")
    p.add_argument("hom")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_quotient)

    p = sub.add_parser("minimize", help="coarsest lax-bisimulation homomorphism")
    p.add_argument("mdp")
    p.add_argument("--tol", type=float, default=0.0)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("metrics", help="bisimulation or lax bisimulation metric")
    p.add_argument("mdp")
    p.add_argument("--kind", choices=["bisim", "lax"], default="bisim")
    p.add_argument("--c-r", dest="c_r", type=float, default=1.0)
    p.add_argument("--c-t", dest="c_t", type=float, default=None, help="default: the MDP's gamma")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--suite", choices=["all", "finite", "continuous", "gradients", "training"], default="all",
                   help="all runs finite, continuous and gradients; training only runs when named")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="fewer instances, same thresholds")
    p.add_argument("--corrupt", action="store_true", help="run the HPG check on a reward-corrupted homomorphism")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="train a DHPG or DDPG agent")
    p.add_argument("--env", choices=["pendulum", "lqr"], default="pendulum")
    p.add_argument("--variant", default=None, help="overrides the config's variant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--config", default="dhpg_pendulum", help="name in configs/ or a path to a JSON file")
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except INPUT_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except HomomorphismToolkitError as err:
        print(f"check failed: {err}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())

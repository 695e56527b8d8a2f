# verify_suite.py
# The acceptance checks behind `cli.py verify`.
#
# Three suites, all run by "all":
#   finite      -- quotient value equivalence, lifting identity, transport oracle,
#                  metric/relation consistency. Pure numpy/scipy/POT; nothing here
#                  imports the diff engine, so the finite suite runs without it.
#   continuous  -- LQR value equivalence (analytic), LQR optimal values,
#                  pendulum flip value equivalence (paired Monte Carlo).
#   gradients   -- diff engine primitives vs central differences, gradient
#                  equivalence on random LQR coordinate changes with MLP policies,
#                  HPG estimator agreement plus its corrupted-reward negative control.
#
# One opt-in suite, run only when named:
#   training    -- paired ddpg / dhpg_summed pendulum runs judged on final return,
#                  the value-equivalence diagnostic and the learned g symmetry.
#                  Hours of compute at full size; quick=True trains 2 seeds for 20k steps.
#
# Each check returns a plain dict: {"name", "passed", ...numbers}. A suite returns
# {"suite", "passed", "checks": [...]} with checks in a fixed order.
#
# quick=True shrinks the instance counts for unit tests; the thresholds stay the same.

import csv
import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.homomorphism import (
    FiniteHomomorphism,
    lift_policy,
    minimize_lax,
    mirrored_mdp,
    verify_optimal_value_equivalence,
    verify_value_equivalence,
)
from src.mdp_core import TabularPolicy, random_mdp
from src.metrics import bisim_metric, kantorovich, kantorovich_lp, lax_bisim_metric

logger = logging.getLogger(__name__)

SUITES = ("finite", "continuous", "gradients")

VALUE_EQUIVALENCE_TOL = 1e-8
LIFTING_TOL = 1e-15
TRANSPORT_TOL = 1e-9
# a metric entry counts as zero below this
METRIC_ZERO_TOL = 1e-8


def _check(name: str, passed: bool, **details) -> dict:
    return {"name": name, "passed": bool(passed), **details}


# -- Finite suite --

def check_finite_value_equivalence(n_instances: int = 50, seed: int = 0) -> dict:
    """Mirrored random MDPs collapse onto their base; Q^{pi_up} and Q* must match the quotient."""
    rng = np.random.default_rng(seed)
    worst_policy, worst_optimal = 0.0, 0.0
    for _ in range(n_instances):
        n_s = int(rng.integers(2, 11))
        n_a = int(rng.integers(2, 6))
        base = random_mdp(n_s, n_a, float(rng.uniform(0.5, 0.95)), rng)
        mdp, h = mirrored_mdp(base, rng.permutation(n_a))
        abstract_policy = TabularPolicy(rng.dirichlet(np.ones(n_a), size=n_s))
        worst_policy = max(worst_policy, verify_value_equivalence(mdp, h, abstract_policy))
        worst_optimal = max(worst_optimal, verify_optimal_value_equivalence(mdp, h))
    return _check(
        "finite_value_equivalence",
        max(worst_policy, worst_optimal) <= VALUE_EQUIVALENCE_TOL,
        n_instances=n_instances,
        max_policy_gap=worst_policy,
        max_optimal_gap=worst_optimal,
        tolerance=VALUE_EQUIVALENCE_TOL,
    )


def _random_surjection(rng: np.random.Generator, n: int, n_bar: int) -> np.ndarray:
    values = np.concatenate([np.arange(n_bar), rng.integers(0, n_bar, size=n - n_bar)])
    return rng.permutation(values)


def random_homomorphism(rng: np.random.Generator, n_states: int, n_actions: int) -> FiniteHomomorphism:
    """Arbitrary surjective state map and per-state surjective action maps."""
    n_bar_s = int(rng.integers(1, n_states + 1))
    n_bar_a = int(rng.integers(1, n_actions + 1))
    state_map = _random_surjection(rng, n_states, n_bar_s)
    action_maps = np.stack([_random_surjection(rng, n_actions, n_bar_a) for _ in range(n_states)])
    return FiniteHomomorphism(state_map, action_maps, n_bar_s, n_bar_a)


def check_lifting_identity(n_pairs: int = 1000, seed: int = 0) -> dict:
    """sum_{a in g_s^-1(a_bar)} pi_up(a|s) == pi_bar(a_bar|f(s)) for every s, a_bar."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        h = random_homomorphism(rng, int(rng.integers(1, 9)), int(rng.integers(1, 5)))
        abstract_policy = TabularPolicy(rng.dirichlet(np.ones(h.n_abstract_actions), size=h.n_abstract_states))
        lifted = lift_policy(abstract_policy, h)
        pushed = np.zeros((h.n_states, h.n_abstract_actions))
        rows = np.repeat(np.arange(h.n_states), h.n_actions)
        np.add.at(pushed, (rows, h.action_maps.ravel()), lifted.probs.ravel())
        gap = float(np.abs(pushed - abstract_policy.probs[h.state_map]).max())
        worst = max(worst, gap)
    return _check("lifting_identity", worst <= LIFTING_TOL, n_pairs=n_pairs, max_gap=worst, tolerance=LIFTING_TOL)


def _random_metric(rng: np.random.Generator, k: int) -> np.ndarray:
    points = rng.normal(size=(k, 2))
    return np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)


def check_transport_oracle(n_instances: int = 200, seed: int = 0) -> dict:
    """kantorovich vs a generic LP, plus symmetry, identity and triangle inequality."""
    rng = np.random.default_rng(seed)
    worst_oracle, worst_axiom = 0.0, 0.0
    for _ in range(n_instances):
        k = int(rng.integers(2, 9))
        ground = _random_metric(rng, k)
        p, q, r = rng.dirichlet(np.ones(k), size=3)
        d_pq = kantorovich(p, q, ground)
        worst_oracle = max(worst_oracle, abs(d_pq - kantorovich_lp(p, q, ground)))

        d_qp = kantorovich(q, p, ground)
        d_pr = kantorovich(p, r, ground)
        d_qr = kantorovich(q, r, ground)
        d_pp = kantorovich(p, p, ground)
        worst_axiom = max(worst_axiom, abs(d_pq - d_qp), abs(d_pp), d_pr - (d_pq + d_qr))
    passed = worst_oracle <= TRANSPORT_TOL and worst_axiom <= TRANSPORT_TOL
    return _check(
        "transport_oracle", passed,
        n_instances=n_instances, max_oracle_gap=worst_oracle, max_axiom_violation=worst_axiom,
        tolerance=TRANSPORT_TOL,
    )


def check_metric_relation_consistency(n_instances: int = 20, seed: int = 0) -> dict:
    """
    Zeros of the lax metric's state distances must coincide with the blocks of
    minimize_lax at tol 0. On the same mirrored instances the strict bisimulation
    metric must separate at least one pair the lax metric merges.
    """
    rng = np.random.default_rng(seed)
    mismatches, separated = 0, 0
    for _ in range(n_instances):
        n_s = int(rng.integers(2, 4))
        n_a = 2
        base = random_mdp(n_s, n_a, 0.5, rng)
        mdp, _ = mirrored_mdp(base)
        h, _ = minimize_lax(mdp, tol=0.0)
        lax = lax_bisim_metric(mdp)
        same_block = h.state_map[:, None] == h.state_map[None, :]
        lax_zero = lax.state_distances <= METRIC_ZERO_TOL
        mismatches += int(np.sum(same_block != lax_zero))

        strict = bisim_metric(mdp)
        if np.any(lax_zero & (strict.d > METRIC_ZERO_TOL)):
            separated += 1
    passed = mismatches == 0 and separated == n_instances
    return _check(
        "metric_relation_consistency", passed,
        n_instances=n_instances, zero_pattern_mismatches=mismatches, strict_lax_separated=separated,
    )


# -- Continuous suite --

def _random_lqr_pair(rng: np.random.Generator, state_dim: int = 2, action_dim: int = 2, noise_scale: float = 0.0):
    from src.envs import random_invertible, random_lqr
    from src.grad_equiv import linear_homomorphism

    env = random_lqr(rng, state_dim, action_dim, noise_scale=noise_scale)
    F = random_invertible(rng, state_dim)
    G = random_invertible(rng, action_dim)
    return env, linear_homomorphism(env, F, G)


def check_lqr_value_equivalence(n_instances: int = 5, seed: int = 0) -> dict:
    """Noise-free LQR: V^{pi_up}(s) == V_bar^{pi_bar}(F s) and Q* == Q_bar* analytically."""
    from src.grad_equiv import check_optimal_value_equivalence, check_value_equivalence_mc, perturbed_optimal_policy

    rng = np.random.default_rng(seed)
    worst_value, worst_optimal, passed = 0.0, 0.0, True
    for i in range(n_instances):
        env, hom = _random_lqr_pair(rng)
        policy = perturbed_optimal_policy(env, 0.9, rng, scale=0.1)
        value = check_value_equivalence_mc(env, hom, policy, seed=seed + i)
        optimal = check_optimal_value_equivalence(env, hom, seed=seed + i)
        worst_value = max(worst_value, value.max_abs_gap)
        worst_optimal = max(worst_optimal, optimal.max_q_gap, optimal.max_v_gap)
        passed = passed and value.passed and optimal.passed
    return _check(
        "lqr_value_equivalence", passed,
        n_instances=n_instances, max_value_gap=worst_value, max_optimal_gap=worst_optimal,
        tolerance=VALUE_EQUIVALENCE_TOL,
    )


def check_pendulum_flip_equivalence(n_rollouts: int = 64, seed: int = 0) -> dict:
    """Flip-symmetric linear policy on the noisy pendulum, paired noise on both sides."""
    from src.envs import PendulumSwingup
    from src.grad_equiv import LinearPolicy, check_value_equivalence_mc, pendulum_flip_homomorphism

    env = PendulumSwingup(seed=seed, process_noise=0.1)
    hom = pendulum_flip_homomorphism(env)
    policy = LinearPolicy([[-0.5], [-0.2]])
    report = check_value_equivalence_mc(env, hom, policy, n_rollouts=n_rollouts, seed=seed)
    details = report.to_dict()
    return _check("pendulum_flip_equivalence", details.pop("passed"), **details)


# -- Gradients suite --

def _primitive_cases() -> Dict[str, Callable]:
    """name -> builder(rng, shape) returning (inputs, loss_fn over Tensors)."""
    from src.diff_engine import concat, gaussian_sample, l1_norm

    def away_from_zero(rng, shape):
        x = rng.uniform(0.2, 1.5, size=shape)
        return x * rng.choice([-1.0, 1.0], size=shape)

    return {
        "add": lambda rng, sh: ([rng.normal(size=sh), rng.normal(size=sh[-1:])], lambda x, y: x + y),
        "sub": lambda rng, sh: ([rng.normal(size=sh), rng.normal(size=sh)], lambda x, y: x - y),
        "neg": lambda rng, sh: ([rng.normal(size=sh)], lambda x: -x),
        "mul": lambda rng, sh: ([rng.normal(size=sh), rng.normal(size=sh)], lambda x, y: x * y),
        "div": lambda rng, sh: ([rng.normal(size=sh), away_from_zero(rng, sh)], lambda x, y: x / y),
        "matmul": lambda rng, sh: ([rng.normal(size=sh), rng.normal(size=(sh[1], 3))], lambda x, y: x @ y),
        "tanh": lambda rng, sh: ([rng.normal(size=sh)], lambda x: x.tanh()),
        "relu": lambda rng, sh: ([away_from_zero(rng, sh)], lambda x: x.relu()),
        "exp": lambda rng, sh: ([rng.normal(size=sh)], lambda x: x.exp()),
        "sqrt": lambda rng, sh: ([rng.uniform(0.5, 2.0, size=sh)], lambda x: x.sqrt()),
        "square": lambda rng, sh: ([rng.normal(size=sh)], lambda x: x.square()),
        "abs": lambda rng, sh: ([away_from_zero(rng, sh)], lambda x: x.abs()),
        "sum": lambda rng, sh: ([rng.normal(size=sh)], lambda x: x.sum(axis=0)),
        "mean": lambda rng, sh: ([rng.normal(size=sh)], lambda x: x.mean(axis=-1)),
        "clip": lambda rng, sh: (
            [rng.choice([-1.0, 1.0], size=sh) * rng.choice([0.3, 2.0], size=sh) + rng.uniform(-0.1, 0.1, size=sh)],
            lambda x: x.clip(-1.0, 1.0),
        ),
        "index": lambda rng, sh: (
            [rng.normal(size=sh)], lambda x, perm=rng.integers(0, sh[0], size=sh[0]): x[perm],
        ),
        "concat": lambda rng, sh: ([rng.normal(size=sh), rng.normal(size=sh)], lambda x, y: concat([x, y], axis=-1)),
        "l1_norm": lambda rng, sh: ([away_from_zero(rng, sh)], lambda x: l1_norm(x, axis=-1)),
        "gaussian_sample": lambda rng, sh: (
            [rng.normal(size=sh), rng.uniform(-1.0, 1.0, size=sh)],
            lambda m, s, noise=rng.normal(size=sh): gaussian_sample(m, s, noise),
        ),
    }


def check_diff_engine_primitives(n_cases: int = 100, seed: int = 0) -> dict:
    """Reverse mode vs central differences for every primitive on random shapes."""
    from src.diff_engine import Tensor, finite_difference_grad, no_grad

    rng = np.random.default_rng(seed)
    cases = _primitive_cases()
    names = sorted(cases)
    worst: Dict[str, float] = {name: 0.0 for name in names}
    for i in range(n_cases):
        name = names[i % len(names)]
        shape = (int(rng.integers(2, 5)), int(rng.integers(2, 5)))
        inputs, fn = cases[name](rng, shape)
        tensors = [Tensor(x, requires_grad=True) for x in inputs]
        out = fn(*tensors)
        weights = rng.normal(size=out.shape)
        (out * weights).sum().backward()

        for k, x in enumerate(inputs):
            def scalar(v, k=k):
                args = [Tensor(v) if j == k else Tensor(inputs[j]) for j in range(len(inputs))]
                with no_grad():
                    return float(np.sum(fn(*args).data * weights))

            numeric = finite_difference_grad(scalar, x, h=1e-6)
            analytic = tensors[k].grad
            scale = max(1.0, float(np.abs(numeric).max()))
            worst[name] = max(worst[name], float(np.abs(analytic - numeric).max()) / scale)
    max_error = max(worst.values())
    return _check(
        "diff_engine_primitives", max_error <= 1e-4,
        n_cases=n_cases, max_rel_error=max_error, per_primitive=worst, tolerance=1e-4,
    )


def check_lqr_gradient_equivalence(n_instances: int = 20, seed: int = 0, horizon: int = 100) -> dict:
    """Random LQR, random invertible (F, G), small MLP policy; autodiff and finite-difference grad_a Q."""
    from src.diff_engine import Mlp
    from src.grad_equiv import FD_GRADIENT_TOL, GRADIENT_TOL, check_gradient_equivalence

    rng = np.random.default_rng(seed)
    worst_auto, worst_fd = 0.0, 0.0
    for i in range(n_instances):
        env, hom = _random_lqr_pair(rng)
        policy = Mlp([env.state_dim, 16, env.action_dim], rng, final_scale=0.1)
        points = rng.uniform(-1.0, 1.0, size=(5, env.state_dim))
        auto = check_gradient_equivalence(env, hom, policy, points, method="autodiff", horizon=horizon)
        fd = check_gradient_equivalence(env, hom, policy, points, method="finite_difference", horizon=horizon)
        worst_auto = max(worst_auto, auto.max_rel_error)
        worst_fd = max(worst_fd, fd.max_rel_error)
    passed = worst_auto <= GRADIENT_TOL and worst_fd <= FD_GRADIENT_TOL
    return _check(
        "lqr_gradient_equivalence", passed,
        n_instances=n_instances, max_rel_error_autodiff=worst_auto, max_rel_error_finite_difference=worst_fd,
        tolerance_autodiff=GRADIENT_TOL, tolerance_finite_difference=FD_GRADIENT_TOL,
    )


def check_hpg_agreement(n_samples: int = 100_000, seed: int = 0, corrupt: bool = False) -> dict:
    """
    Sampled DPG on M vs HPG on M_bar must agree (cosine >= 0.99). The negative
    control breaks reward invariance by 0.5 and must fall below the threshold.
    With corrupt=True the main check itself runs on the broken homomorphism.
    """
    from src.grad_equiv import check_hpg_estimator, corrupt_reward

    rng = np.random.default_rng(seed)
    env, hom = _random_lqr_pair(rng, noise_scale=0.05)
    broken = corrupt_reward(hom, 0.5)
    main = check_hpg_estimator(env, broken if corrupt else hom, n_samples=n_samples, seed=seed)
    control = check_hpg_estimator(env, broken, n_samples=n_samples, seed=seed)
    return _check(
        "hpg_agreement",
        main.passed and not control.passed,
        corrupted=corrupt,
        cosine_similarity=main.cosine_similarity,
        rel_norm_gap=main.rel_norm_gap,
        negative_control_cosine=control.cosine_similarity,
        n_samples=n_samples,
    )


# -- Training suite (opt-in, never part of "all") --

TRAINING_SUITE = "training"
TRAINING_RETURN_THRESHOLD = 700.0
# dhpg_summed may trail ddpg by at most this fraction of ddpg's return
TRAINING_RETURN_SLACK = 0.05
DIAGNOSTIC_DECREASE_FRACTION = 0.8


def _diagnostic_window(points: List[Tuple[int, Optional[float]]], end: int, width: int) -> Optional[float]:
    values = [v for step, v in points if end - width <= step < end and v is not None]
    return float(np.mean(values)) if values else None


def training_run_record(variant: str, seed: int, points: List[Tuple[int, Optional[float]]],
                        episode_returns: List[float], symmetry: Optional[dict] = None) -> dict:
    """
    Reduce one training run to the numbers the acceptance check needs.

    points are (step, value_equiv_error) pairs, None where the diagnostic was not
    computed. The diagnostic is averaged over the last 1% of steps before the 10%
    mark and before the end of the run.
    """
    total = max((step for step, _ in points), default=-1) + 1
    width = max(1, total // 100)
    tail = episode_returns[-10:]
    symmetry = symmetry or {}
    return {
        "variant": variant,
        "seed": seed,
        "steps": total,
        "final_return": float(np.mean(tail)) if tail else float("nan"),
        "diagnostic_early": _diagnostic_window(points, total // 10, width),
        "diagnostic_late": _diagnostic_window(points, total, width),
        "symmetry_fraction": symmetry.get("fraction_symmetric"),
        "symmetry_passed": bool(symmetry.get("passed", False)),
    }


def read_training_run(run_dir, variant: str, seed: int) -> dict:
    """Same record as training_run_record, read back from a run directory's log.csv and summary.json."""
    run_dir = Path(run_dir)
    points, returns = [], []
    with open(run_dir / "log.csv", newline="") as f:
        for row in csv.DictReader(f):
            diagnostic = row.get("value_equiv_error") or None
            points.append((int(row["step"]), float(diagnostic) if diagnostic else None))
            if row.get("episode_return"):
                returns.append(float(row["episode_return"]))
    summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
    return training_run_record(variant, seed, points, returns, summary.get("symmetry"))


def evaluate_training_acceptance(ddpg_runs: List[dict], dhpg_runs: List[dict]) -> dict:
    """
    Paired-seed verdict: ddpg clears the return threshold, dhpg_summed stays within
    the slack of it, the value-equivalence diagnostic falls on enough seeds, and
    every learned action map passes the flip symmetry grid.
    """
    if sorted(r["seed"] for r in ddpg_runs) != sorted(r["seed"] for r in dhpg_runs):
        raise ValueError("training acceptance needs the same seeds for both variants")
    if not dhpg_runs:
        raise ValueError("training acceptance needs at least one seed")

    ddpg_return = float(np.mean([r["final_return"] for r in ddpg_runs]))
    dhpg_return = float(np.mean([r["final_return"] for r in dhpg_runs]))
    decreasing = sum(
        1 for r in dhpg_runs
        if r["diagnostic_early"] is not None and r["diagnostic_late"] is not None
        and r["diagnostic_late"] < r["diagnostic_early"]
    )
    required = int(np.ceil(DIAGNOSTIC_DECREASE_FRACTION * len(dhpg_runs)))
    symmetric = sum(1 for r in dhpg_runs if r["symmetry_passed"])

    return_ok = ddpg_return >= TRAINING_RETURN_THRESHOLD
    parity_ok = dhpg_return >= (1.0 - TRAINING_RETURN_SLACK) * ddpg_return
    diagnostic_ok = decreasing >= required
    symmetry_ok = symmetric == len(dhpg_runs)
    return _check(
        "training_acceptance", return_ok and parity_ok and diagnostic_ok and symmetry_ok,
        n_seeds=len(dhpg_runs),
        ddpg_final_return=ddpg_return, dhpg_final_return=dhpg_return,
        return_threshold=TRAINING_RETURN_THRESHOLD, return_slack=TRAINING_RETURN_SLACK,
        diagnostic_decreasing_seeds=decreasing, diagnostic_required_seeds=required,
        symmetric_seeds=symmetric,
        return_ok=return_ok, parity_ok=parity_ok, diagnostic_ok=diagnostic_ok, symmetry_ok=symmetry_ok,
        runs=sorted(ddpg_runs + dhpg_runs, key=lambda r: (r["seed"], r["variant"])),
    )


def check_training_acceptance(seeds=(0, 1, 2, 3, 4), steps: int = 100_000,
                              ddpg_config: str = "ddpg_pendulum", dhpg_config: str = "dhpg_pendulum",
                              tracker_factory: Optional[Callable] = None) -> dict:
    """
    Train ddpg and dhpg_summed on the pendulum swing-up for every seed and judge the pairs.

    tracker_factory(seed, config) may return a RunTracker per run; the run then
    writes log.csv and summary.json and its record is read back from those files.
    """
    from src.dhpg_agent import load_config, train, training_summary
    from src.envs import PendulumSwingup

    runs = {"ddpg": [], "dhpg_summed": []}
    for seed in seeds:
        for variant, config_name in (("ddpg", ddpg_config), ("dhpg_summed", dhpg_config)):
            config = load_config(config_name, variant=variant)
            env = PendulumSwingup(seed=seed)
            tracker = tracker_factory(seed, config) if tracker_factory is not None else None
            logger.info("training %s seed %d for %d steps", variant, seed, steps)
            result = train(env, config, seed, steps, tracker=tracker)
            summary = training_summary(result, env)
            if tracker is not None:
                tracker.write_json("summary.json", summary)
                tracker.finish()
                record = read_training_run(tracker.run_dir, variant, seed)
            else:
                points = [(row["step"], row["value_equiv_error"]) for row in result.rows]
                record = training_run_record(variant, seed, points, result.episode_returns,
                                             summary.get("symmetry"))
            runs[variant].append(record)
    return evaluate_training_acceptance(runs["ddpg"], runs["dhpg_summed"])


# -- Runner --

def _suite_checks(suite: str, seed: int, quick: bool, corrupt: bool,
                 tracker_factory: Optional[Callable] = None) -> List[Callable[[], dict]]:
    if suite == "finite":
        return [
            lambda: check_finite_value_equivalence(10 if quick else 50, seed),
            lambda: check_lifting_identity(100 if quick else 1000, seed),
            lambda: check_transport_oracle(30 if quick else 200, seed),
            lambda: check_metric_relation_consistency(3 if quick else 20, seed),
        ]
    if suite == "continuous":
        return [
            lambda: check_lqr_value_equivalence(2 if quick else 5, seed),
            lambda: check_pendulum_flip_equivalence(16 if quick else 64, seed),
        ]
    if suite == "gradients":
        return [
            lambda: check_diff_engine_primitives(38 if quick else 100, seed),
            lambda: check_lqr_gradient_equivalence(2 if quick else 20, seed),
            lambda: check_hpg_agreement(20_000 if quick else 100_000, seed, corrupt),
        ]
    if suite == TRAINING_SUITE:
        n_seeds, steps = (2, 20_000) if quick else (5, 100_000)
        return [
            lambda: check_training_acceptance(range(seed, seed + n_seeds), steps, tracker_factory=tracker_factory),
        ]
    raise ValueError(f"unknown suite {suite!r}; choose one of all, {', '.join(SUITES)}, {TRAINING_SUITE}")


def run_suite(suite: str, seed: int = 0, quick: bool = False, corrupt: bool = False,
              tracker_factory: Optional[Callable] = None) -> dict:
    """Run one suite ("finite", "continuous", "gradients", "training") and collect its checks."""
    checks = []
    for run in _suite_checks(suite, seed, quick, corrupt, tracker_factory):
        result = run()
        logger.info("%s: %s", result["name"], "pass" if result["passed"] else "FAIL")
        checks.append(result)
    return {"suite": suite, "passed": all(c["passed"] for c in checks), "checks": checks}


def run_all(seed: int = 0, quick: bool = False, corrupt: bool = False, suites=SUITES) -> dict:
    results = [run_suite(name, seed, quick, corrupt) for name in suites]
    return {"passed": all(r["passed"] for r in results), "suites": results}

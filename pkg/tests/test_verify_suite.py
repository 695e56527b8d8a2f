# test_verify_suite.py
# The acceptance checks at reduced instance counts. Thresholds are the real ones.

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from run_tracker import RunTracker
from src.dhpg_agent import LOG_FIELDS
from src.verify_suite import (
    SUITES,
    TRAINING_SUITE,
    check_diff_engine_primitives,
    check_hpg_agreement,
    check_lifting_identity,
    check_lqr_gradient_equivalence,
    check_metric_relation_consistency,
    check_pendulum_flip_equivalence,
    check_training_acceptance,
    evaluate_training_acceptance,
    random_homomorphism,
    run_suite,
    training_run_record,
)


def test_finite_suite_passes_quick():
    result = run_suite("finite", seed=0, quick=True)
    names = [c["name"] for c in result["checks"]]
    assert names == ["finite_value_equivalence", "lifting_identity", "transport_oracle", "metric_relation_consistency"]
    for check in result["checks"]:
        print(f"  {check['name']}: {'pass' if check['passed'] else 'FAIL'}")
    assert result["passed"]


def test_continuous_suite_passes_quick():
    result = run_suite("continuous", seed=1, quick=True)
    assert [c["name"] for c in result["checks"]] == ["lqr_value_equivalence", "pendulum_flip_equivalence"]
    assert result["passed"]


def test_random_homomorphisms_are_surjective():
    rng = np.random.default_rng(0)
    for _ in range(20):
        h = random_homomorphism(rng, 6, 4)
        assert set(h.state_map.tolist()) == set(range(h.n_abstract_states))
        for row in h.action_maps:
            assert set(row.tolist()) == set(range(h.n_abstract_actions))


def test_lifting_identity_small():
    check = check_lifting_identity(n_pairs=50, seed=3)
    assert check["passed"], check


def test_metric_relation_consistency_small():
    check = check_metric_relation_consistency(n_instances=2, seed=4)
    assert check["zero_pattern_mismatches"] == 0
    assert check["passed"]


def test_diff_engine_primitives_cover_every_case():
    check = check_diff_engine_primitives(n_cases=19, seed=5)
    assert len(check["per_primitive"]) == 19
    assert check["passed"], check["per_primitive"]


def test_lqr_gradient_equivalence_one_instance():
    check = check_lqr_gradient_equivalence(n_instances=1, seed=6, horizon=50)
    assert check["passed"], check


def test_hpg_agreement_passes_with_its_negative_control():
    check = check_hpg_agreement(n_samples=20_000, seed=0)
    assert check["corrupted"] is False
    assert check["cosine_similarity"] >= 0.99
    assert check["negative_control_cosine"] < 0.99
    assert check["passed"]


def test_pendulum_flip_check_reports_its_numbers():
    check = check_pendulum_flip_equivalence(n_rollouts=8, seed=2)
    assert check["name"] == "pendulum_flip_equivalence"
    assert check["method"] == "monte_carlo"
    assert check["passed"] is True


def test_corrupted_run_cannot_pass():
    # with corrupt=True the main check and the negative control are the same computation
    check = check_hpg_agreement(n_samples=2000, seed=7, corrupt=True)
    assert check["corrupted"] is True
    assert check["passed"] is False


# -- Training acceptance (synthetic records; the real runs are opt-in) --

def _record(variant, seed, final_return, early=1.0, late=0.5, symmetric=True):
    return {
        "variant": variant, "seed": seed, "steps": 100_000, "final_return": final_return,
        "diagnostic_early": early, "diagnostic_late": late,
        "symmetry_fraction": 0.9 if symmetric else 0.5, "symmetry_passed": symmetric,
    }


def _paired(ddpg_returns, dhpg_returns, dhpg_overrides=None):
    dhpg_overrides = dhpg_overrides or {}
    ddpg = [_record("ddpg", s, r, early=None, late=None, symmetric=False) for s, r in enumerate(ddpg_returns)]
    dhpg = [_record("dhpg_summed", s, r, **dhpg_overrides.get(s, {})) for s, r in enumerate(dhpg_returns)]
    return ddpg, dhpg


def test_training_acceptance_passes_on_good_runs():
    check = evaluate_training_acceptance(*_paired([720, 760, 740, 700, 780], [710, 750, 730, 720, 760]))
    assert check["name"] == "training_acceptance"
    assert check["ddpg_final_return"] == pytest.approx(740.0)
    assert check["diagnostic_required_seeds"] == 4
    assert check["passed"]


def test_training_acceptance_thresholds():
    # ddpg below 700
    assert not evaluate_training_acceptance(*_paired([690] * 5, [690] * 5))["return_ok"]
    # dhpg more than 5% behind ddpg
    check = evaluate_training_acceptance(*_paired([800] * 5, [755] * 5))
    assert check["return_ok"] and not check["parity_ok"] and not check["passed"]
    assert evaluate_training_acceptance(*_paired([800] * 5, [761] * 5))["parity_ok"]


def test_training_acceptance_needs_four_of_five_decreasing_diagnostics():
    one_rises = {0: {"early": 0.2, "late": 0.3}}
    assert evaluate_training_acceptance(*_paired([750] * 5, [750] * 5, one_rises))["passed"]

    two_rise = {0: {"early": 0.2, "late": 0.3}, 3: {"early": None}}
    check = evaluate_training_acceptance(*_paired([750] * 5, [750] * 5, two_rise))
    assert check["diagnostic_decreasing_seeds"] == 3
    assert not check["passed"]


def test_training_acceptance_needs_every_map_symmetric():
    check = evaluate_training_acceptance(*_paired([750] * 5, [750] * 5, {2: {"symmetric": False}}))
    assert check["symmetric_seeds"] == 4
    assert not check["symmetry_ok"]


def test_training_acceptance_rejects_unpaired_seeds():
    ddpg, dhpg = _paired([750] * 3, [750] * 3)
    with pytest.raises(ValueError):
        evaluate_training_acceptance(ddpg, dhpg[:2])


def test_training_record_windows():
    # diagnostic 1.0 for the first tenth of 1000 steps, 0.1 at the end
    points = [(step, None if step < 50 else (1.0 if step < 100 else 0.1)) for step in range(1000)]
    record = training_run_record("dhpg_summed", 0, points, [float(r) for r in range(20)])
    assert record["steps"] == 1000
    assert record["diagnostic_early"] == pytest.approx(1.0)
    assert record["diagnostic_late"] == pytest.approx(0.1)
    assert record["final_return"] == pytest.approx(14.5)
    assert record["symmetry_passed"] is False


def test_training_check_reads_its_run_directories(tmp_path):
    trackers = []

    def factory(seed, config):
        tracker = RunTracker(tmp_path / f"{config.variant}-seed{seed}", "train", seed=seed, log_fields=LOG_FIELDS)
        trackers.append(tracker)
        return tracker

    from_files = check_training_acceptance(seeds=(0,), steps=150, ddpg_config="smoke", dhpg_config="smoke",
                                           tracker_factory=factory)
    in_memory = check_training_acceptance(seeds=(0,), steps=150, ddpg_config="smoke", dhpg_config="smoke")
    assert [t.run_dir.name for t in trackers] == ["ddpg-seed0", "dhpg_summed-seed0"]
    assert (tmp_path / "dhpg_summed-seed0" / "summary.json").exists()

    # no episode finishes in 150 steps, so final_return is nan on both sides
    for a, b in zip(from_files["runs"], in_memory["runs"]):
        assert math.isnan(a["final_return"]) and math.isnan(b["final_return"])
        assert {k: v for k, v in a.items() if k != "final_return"} == {k: v for k, v in b.items() if k != "final_return"}
    dhpg = [r for r in from_files["runs"] if r["variant"] == "dhpg_summed"][0]
    assert dhpg["diagnostic_late"] is not None
    assert from_files["passed"] is False


def test_training_suite_is_not_part_of_all():
    assert TRAINING_SUITE not in SUITES


def test_unknown_suite():
    assert "finite" in SUITES
    with pytest.raises(ValueError):
        run_suite("everything")


if __name__ == "__main__":
    print("=" * 60)
    print("Verification suites (quick)")
    print("=" * 60)
    test_finite_suite_passes_quick()
    test_continuous_suite_passes_quick()

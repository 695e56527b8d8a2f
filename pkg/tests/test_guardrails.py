# test_guardrails.py
# Pure checks, no solvers: stochastic rows, probability vectors and the loss guardrail.

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.guardrails import (
    HomomorphismToolkitError,
    InfeasibleMarginals,
    NonStochasticMatrix,
    NumericalDivergence,
    SchemaError,
    TrainingGuardrails,
    check_probability_vector,
    check_stochastic,
    stochasticity_report,
)


def test_stochasticity_report():
    rows = np.array([[[0.5, 0.5], [1.0, 0.0]], [[0.2, 0.7], [0.0, 1.0]]])
    report = stochasticity_report(rows, 1e-12)
    assert report["ok"] is False
    assert report["worst_row"] == (1, 0)
    assert report["worst_sum"] == pytest.approx(0.9)
    assert report["worst_error"] == pytest.approx(0.1)
    assert report["negative_rows"] == []
    print("Finds the worst row:", report["worst_row"])

    assert stochasticity_report(np.eye(3), 1e-12)["ok"] is True


def test_check_stochastic_names_rows():
    with pytest.raises(NonStochasticMatrix) as info:
        check_stochastic(np.array([[0.5, 0.5], [0.6, 0.6]]), 1e-9)
    assert info.value.row == (1,)
    assert "sums to 1.2" in str(info.value)

    # negative entries are reported even when the row sums to one
    with pytest.raises(NonStochasticMatrix, match="negative"):
        check_stochastic(np.array([[1.5, -0.5]]), 1e-9)


def test_probability_vectors():
    p = check_probability_vector([0.25, 0.75], 1e-9)
    assert p.tolist() == [0.25, 0.75]
    # tiny negative round-off is clipped to zero
    assert check_probability_vector([1.0 + 1e-12, -1e-12], 1e-9)[1] == 0.0
    for bad in ([], [[0.5, 0.5]], [0.5, 0.4], [1.5, -0.5], [np.nan, 1.0]):
        with pytest.raises(InfeasibleMarginals):
            check_probability_vector(bad, 1e-9)


def test_loss_guardrail_passes_finite_losses():
    guard = TrainingGuardrails()
    report = guard.check_losses({"L_actual": 0.3, "L_abstract": None})
    assert report == {"finite": True, "bad_terms": []}
    guard.enforce({"L_actual": 0.3}, step=5, snapshot=lambda: pytest.fail("snapshot built for finite losses"))


def test_loss_guardrail_stops_on_nan():
    guard = TrainingGuardrails()
    with pytest.raises(NumericalDivergence) as info:
        guard.enforce({"L_actual": float("nan"), "L_h": float("inf"), "L_lax": 1.0}, step=12,
                      snapshot={"variant": "dhpg_summed"})
    dump = info.value.dump
    assert dump["step"] == 12
    assert dump["bad_terms"] == ["L_actual", "L_h"]
    assert dump["variant"] == "dhpg_summed"
    assert dump["losses"]["L_lax"] == 1.0
    print("Divergence dump:", dump["bad_terms"])


def test_error_hierarchy():
    assert issubclass(SchemaError, HomomorphismToolkitError)
    assert issubclass(SchemaError, ValueError)
    assert issubclass(NumericalDivergence, RuntimeError)


if __name__ == "__main__":
    print("=" * 60)
    print("Guardrails")
    print("=" * 60)
    test_stochasticity_report()
    test_loss_guardrail_stops_on_nan()
    print("Guardrails behave")

# guardrails.py
# Checks we run on every model, distribution and loss BEFORE trusting it.
#
# Three kinds of things live here:
#   1. The error types every module raises (one place, one hierarchy)
#   2. Validation checks on tabular objects (stochastic rows, probability vectors)
#   3. Training guardrails: catch a NaN/inf loss and stop with a diagnostic dump
#
# Report-style checks return plain dicts (so the CLI can print or serialize them),
# enforce-style checks raise.

import math
from typing import Dict, List, Optional

import numpy as np


# -- Error hierarchy --

class HomomorphismToolkitError(Exception):
    """Base class for every error raised by this project."""


class SchemaError(HomomorphismToolkitError, ValueError):
    """A file or config does not match the expected schema."""


class NonStochasticMatrix(HomomorphismToolkitError, ValueError):
    """A transition row or policy row is not a probability distribution."""

    def __init__(self, message: str, row: Optional[tuple] = None):
        super().__init__(message)
        self.row = row


class DimensionMismatch(HomomorphismToolkitError, ValueError):
    """Two objects disagree on state or action counts."""


class InconsistentQuotient(HomomorphismToolkitError, ValueError):
    """
    Preimage representatives of an abstract pair disagree by more than tol.
    The report and the (approximate) quotient are still attached.
    """

    def __init__(self, message: str, report, quotient):
        super().__init__(message)
        self.report = report
        self.quotient = quotient


class InfeasibleMarginals(HomomorphismToolkitError, ValueError):
    """Transport marginals are not probability vectors of equal mass."""


class ShapeMismatch(HomomorphismToolkitError, ValueError):
    """Tensor shapes are incompatible for an operation."""


class NoConvergence(HomomorphismToolkitError, RuntimeError):
    """An iterative solver cannot (or did not) reach its tolerance."""


class RiccatiDivergence(HomomorphismToolkitError, RuntimeError):
    """The discounted Riccati equation has no acceptable stabilizing solution."""


class SingularJacobian(HomomorphismToolkitError, RuntimeError):
    """An action map is not a local diffeomorphism at a test point."""


class NumericalDivergence(HomomorphismToolkitError, RuntimeError):
    """A training loss became non-finite. `dump` holds the diagnostic snapshot."""

    def __init__(self, message: str, dump: Dict):
        super().__init__(message)
        self.dump = dump


# -- Tabular checks --

def stochasticity_report(rows: np.ndarray, tol: float) -> Dict:
    """
    Look at every distribution along the last axis of `rows`.

    Returns:
      ok            -- True if all rows are nonnegative and sum to 1 within tol
      worst_row     -- index tuple of the row with the largest sum error
      worst_error   -- |sum - 1| of that row
      worst_sum     -- the sum itself
      negative_rows -- index tuples of rows with a negative entry
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        return {"ok": True, "worst_row": None, "worst_error": 0.0, "worst_sum": 1.0, "negative_rows": []}

    sums = rows.sum(axis=-1)
    sum_error = np.abs(sums - 1.0)
    worst = np.unravel_index(int(np.argmax(sum_error)), sum_error.shape)
    negative = np.argwhere((rows < 0).any(axis=-1))
    finite = bool(np.isfinite(rows).all())

    worst_error = float(sum_error[worst])
    return {
        "ok": finite and worst_error <= tol and len(negative) == 0,
        "worst_row": tuple(int(i) for i in worst),
        "worst_error": worst_error,
        "worst_sum": float(sums[worst]),
        "negative_rows": [tuple(int(i) for i in r) for r in negative],
    }


def check_stochastic(rows: np.ndarray, tol: float, what: str = "transition") -> None:
    """Raise NonStochasticMatrix naming the offending row."""
    report = stochasticity_report(rows, tol)
    if report["ok"]:
        return
    if report["negative_rows"]:
        row = report["negative_rows"][0]
        raise NonStochasticMatrix(f"{what} row {list(row)} has a negative entry", row=row)
    row = report["worst_row"]
    raise NonStochasticMatrix(
        f"{what} row {list(row)} sums to {report['worst_sum']:.12g} "
        f"(off by {report['worst_error']:.3g}, tolerance {tol:g})",
        row=row,
    )


def check_probability_vector(p: np.ndarray, tol: float, name: str = "p") -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InfeasibleMarginals(f"{name} must be a non-empty vector, got shape {p.shape}")
    if (p < -tol).any() or not np.isfinite(p).all():
        raise InfeasibleMarginals(f"{name} has negative or non-finite mass")
    if abs(p.sum() - 1.0) > tol:
        raise InfeasibleMarginals(f"{name} sums to {p.sum():.12g}, not 1")
    return np.clip(p, 0.0, None)


# -- Training guardrails --

class TrainingGuardrails:
    """Post-update checks on the losses of one training step."""

    def check_losses(self, losses: Dict[str, float]) -> Dict:
        """
        Returns:
          finite    -- True if every loss value is a finite number
          bad_terms -- names of the non-finite losses
        """
        bad: List[str] = [
            name for name, value in losses.items()
            if value is not None and not math.isfinite(float(value))
        ]
        return {"finite": not bad, "bad_terms": bad}

    def enforce(self, losses: Dict[str, float], step: int, snapshot) -> None:
        """
        Raise NumericalDivergence (with a dump) if any loss is non-finite.
        snapshot is a dict or a zero-argument callable that builds one on failure.
        """
        report = self.check_losses(losses)
        if report["finite"]:
            return
        if callable(snapshot):
            snapshot = snapshot()
        dump = {
            "step": step,
            "bad_terms": report["bad_terms"],
            "losses": {k: (None if v is None else float(v)) for k, v in losses.items()},
            **snapshot,
        }
        raise NumericalDivergence(
            f"non-finite loss at step {step}: {', '.join(report['bad_terms'])}", dump
        )

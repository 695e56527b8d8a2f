# mdp_files.py
# Reading and writing the on-disk artifacts: MDP JSON, homomorphism JSON,
# metric tables as CSV and verification reports as JSON.
#
# MDP file:
#   {"n_states": int, "n_actions": int, "gamma": float,
#    "transitions": [[[float]]], "rewards": [[float]]}
# Floats are written with repr precision so a save/load round trip is bit-exact.
# Transition rows may be off by up to 1e-9 on load (hand-written files), anything
# more raises NonStochasticMatrix naming the row.

import csv
import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from src.guardrails import DimensionMismatch, NonStochasticMatrix, SchemaError
from src.homomorphism import FiniteHomomorphism
from src.mdp_core import FiniteMdp

logger = logging.getLogger(__name__)

LOAD_ROW_TOL = 1e-9
MDP_FIELDS = ("n_states", "n_actions", "gamma", "transitions", "rewards")

PathLike = Union[str, Path]


def _read_json(path: PathLike) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise SchemaError(f"{path} must hold a JSON object")
    return raw


def _write_json(path: PathLike, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


# -- MDP --

def mdp_from_dict(raw: dict, source: str = "<dict>") -> FiniteMdp:
    missing = [k for k in MDP_FIELDS if k not in raw]
    if missing:
        raise SchemaError(f"{source}: missing field(s) {', '.join(missing)}")

    gamma = raw["gamma"]
    if isinstance(gamma, bool) or not isinstance(gamma, (int, float)) or not 0.0 < gamma <= 1.0:
        raise SchemaError(f"{source}: gamma must be a number in (0, 1], got {gamma!r}")
    try:
        transitions = np.array(raw["transitions"], dtype=np.float64)
        rewards = np.array(raw["rewards"], dtype=np.float64)
    except (TypeError, ValueError) as err:
        raise SchemaError(f"{source}: transitions/rewards are not numeric arrays: {err}") from err

    n_s, n_a = raw["n_states"], raw["n_actions"]
    if transitions.shape != (n_s, n_a, n_s):
        raise SchemaError(f"{source}: transitions shape {transitions.shape} != ({n_s}, {n_a}, {n_s})")
    if rewards.shape != (n_s, n_a):
        raise SchemaError(f"{source}: rewards shape {rewards.shape} != ({n_s}, {n_a})")
    if not np.isfinite(rewards).all():
        raise SchemaError(f"{source}: rewards must be finite")

    try:
        return FiniteMdp(transitions, rewards, float(gamma), row_tol=LOAD_ROW_TOL)
    except DimensionMismatch as err:
        raise SchemaError(f"{source}: {err}") from err
    except NonStochasticMatrix as err:
        raise NonStochasticMatrix(f"{source}: {err}", err.row) from err


def mdp_to_dict(mdp: FiniteMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "transitions": mdp.transitions.tolist(),
        "rewards": mdp.rewards.tolist(),
    }


def load_mdp(path: PathLike) -> FiniteMdp:
    return mdp_from_dict(_read_json(path), source=str(path))


def save_mdp(mdp: FiniteMdp, path: PathLike) -> Path:
    return _write_json(path, mdp_to_dict(mdp))


# -- Homomorphism --

def load_homomorphism(path: PathLike) -> FiniteHomomorphism:
    """{"state_map": [int], "action_maps": [[int]], optional n_abstract_states / n_abstract_actions}"""
    raw = _read_json(path)
    missing = [k for k in ("state_map", "action_maps") if k not in raw]
    if missing:
        raise SchemaError(f"{path}: missing field(s) {', '.join(missing)}")
    try:
        return FiniteHomomorphism(
            raw["state_map"],
            raw["action_maps"],
            raw.get("n_abstract_states"),
            raw.get("n_abstract_actions"),
        )
    except (TypeError, ValueError) as err:
        raise SchemaError(f"{path}: {err}") from err


def save_homomorphism(h: FiniteHomomorphism, path: PathLike) -> Path:
    payload = h.to_dict()
    payload["n_abstract_states"] = h.n_abstract_states
    payload["n_abstract_actions"] = h.n_abstract_actions
    return _write_json(path, payload)


# -- Metrics and reports --

def save_metric_csv(d: np.ndarray, path: PathLike) -> Path:
    """One row per (row, col) entry of a distance matrix (MetricTable.d or state_distances)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["row", "col", "distance"])
        d = np.asarray(d, dtype=np.float64)
        n = d.shape[0]
        for i in range(n):
            for j in range(n):
                writer.writerow([i, j, repr(float(d[i, j]))])
    return path


def load_metric_csv(path: PathLike) -> np.ndarray:
    with open(path, "r", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return np.zeros((0, 0))
    n = max(int(r["row"]) for r in rows) + 1
    d = np.zeros((n, n))
    for r in rows:
        d[int(r["row"]), int(r["col"])] = float(r["distance"])
    return d


def save_report(payload: dict, path: PathLike) -> Path:
    return _write_json(path, payload)

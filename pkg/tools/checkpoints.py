# checkpoints.py
# Save and load network parameters as plain JSON.
#
# Format (stable):
#   {
#     "format": "hompg-checkpoint/1",
#     "parameters": {
#       "<module>.layers.<i>.weight": {"shape": [rows, cols], "values": [row-major floats]},
#       ...
#     }
#   }
# Floats are written with repr precision, so load(save(x)) is bit-exact.

import json
from pathlib import Path
from typing import Dict

import numpy as np

from src.guardrails import SchemaError

CHECKPOINT_FORMAT = "hompg-checkpoint/1"


def flatten_modules(modules: Dict[str, object]) -> Dict[str, np.ndarray]:
    """{"actor": Mlp, ...} -> {"actor.layers.0.weight": array, ...}"""
    flat = {}
    for prefix, module in modules.items():
        for name, values in module.state_dict().items():
            flat[f"{prefix}.{name}"] = values
    return flat


def save_checkpoint(path, modules: Dict[str, object]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = {
        name: {"shape": list(values.shape), "values": values.ravel().tolist()}
        for name, values in flatten_modules(modules).items()
    }
    with open(path, "w") as f:
        json.dump({"format": CHECKPOINT_FORMAT, "parameters": params}, f)
    return path


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    with open(path, "r") as f:
        raw = json.load(f)
    if raw.get("format") != CHECKPOINT_FORMAT or "parameters" not in raw:
        raise SchemaError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    params = {}
    for name, entry in raw["parameters"].items():
        try:
            params[name] = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        except (KeyError, ValueError) as err:
            raise SchemaError(f"{path}: bad parameter entry {name!r}: {err}") from err
    return params


def restore_modules(modules: Dict[str, object], params: Dict[str, np.ndarray]):
    """Load a flat parameter map back into named modules."""
    for prefix, module in modules.items():
        head = f"{prefix}."
        module.load_state_dict({k[len(head):]: v for k, v in params.items() if k.startswith(head)})

"""
Run Tracker - one directory per command run, with a manifest, a step log and an event log.
Every CLI command that writes artifacts goes through this.
"""

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from src import __version__

MANIFEST_SCHEMA = "hompg-manifest/1"
DEFAULT_OUTPUT_ROOT = "runs"


def output_root(override: Optional[str] = None) -> Path:
    """--out wins, then HOMPG_OUTPUT_ROOT (from the environment or .env), then runs/."""
    return Path(override or os.getenv("HOMPG_OUTPUT_ROOT") or DEFAULT_OUTPUT_ROOT)


def run_dir_name(command: str, seed: Optional[int] = None, **tags) -> str:
    """
    Deterministic directory name built from the command and its identifying options,
    e.g. train-pendulum-dhpg_summed-seed3. No dates, so reruns land in the same place.
    """
    parts = [command] + [str(v) for _, v in sorted(tags.items()) if v is not None]
    if seed is not None:
        parts.append(f"seed{seed}")
    return "-".join(parts)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: Optional[int]
    code_version: str = __version__
    outputs: List[str] = field(default_factory=list)
    schema: str = MANIFEST_SCHEMA


class RunTracker:
    """Owns a run directory and everything written into it."""

    def __init__(self, run_dir, command: str, config: Optional[dict] = None,
                 seed: Optional[int] = None, log_fields: Optional[List[str]] = None):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command=command, config=dict(config or {}), seed=seed)
        self.events: List[dict] = []
        self.rows_logged = 0
        self._started = time.perf_counter()
        # printed by print_run_summary, never persisted
        self.elapsed_seconds: Optional[float] = None
        self._log_file = None
        self._writer = None
        if log_fields:
            self._log_file = open(self.run_dir / "log.csv", "w", newline="")
            self._writer = csv.DictWriter(self._log_file, fieldnames=log_fields, lineterminator="\n")
            self._writer.writeheader()
            self._add_output("log.csv")

    def _add_output(self, name: str):
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def log_step(self, row: Dict[str, str]):
        """Append one row to log.csv. Values should already be formatted as strings."""
        if self._writer is None:
            raise RuntimeError("this tracker was created without log fields")
        self._writer.writerow(row)
        self.rows_logged += 1

    def log_event(self, kind: str, **fields):
        self.events.append({"kind": kind, **fields})

    def write_json(self, name: str, payload) -> Path:
        path = self.run_dir / name
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        self._add_output(name)
        return path

    def register_output(self, name: str) -> Path:
        """Record a file some other writer put into the run directory."""
        self._add_output(name)
        return self.run_dir / name

    def finish(self) -> RunManifest:
        """Close the step log and write events.json and manifest.json."""
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = self._writer = None
        self.write_json("events.json", self.events)
        self.elapsed_seconds = time.perf_counter() - self._started
        with open(self.run_dir / "manifest.json", "w") as f:
            json.dump(asdict(self.manifest), f, indent=2, sort_keys=True)
        return self.manifest

    def print_run_summary(self, result: Optional[dict] = None):
        """Print what this run produced"""
        print("\n" + "=" * 60)
        print(f"RUN SUMMARY: {self.manifest.command}")
        print("=" * 60)
        print(f"Directory: {self.run_dir}")
        if self.manifest.seed is not None:
            print(f"Seed: {self.manifest.seed}")
        if self.rows_logged:
            print(f"Log rows: {self.rows_logged:,}")
        print(f"Events: {len(self.events)}")
        if self.elapsed_seconds is not None:
            print(f"Elapsed: {self.elapsed_seconds:.1f}s")
        print("=" * 60)

        if result:
            print("\nResults:")
            for key, value in result.items():
                if isinstance(value, float):
                    print(f"  {key}: {value:.6g}")
                else:
                    print(f"  {key}: {value}")

        print("\nFiles:")
        for name in self.manifest.outputs + ["manifest.json"]:
            print(f"  {name}")
        print("=" * 60 + "\n")

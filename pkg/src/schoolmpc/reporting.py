"""CSV and manifest emission.

CSV files open with a single `# generated <timestamp>` comment line; the rows
below it are byte-stable for a fixed seed and configuration, so two runs can
be compared after stripping that first line. The one exemption is wall-clock
measurement columns (solve_time and friends), which report what was measured,
not what was computed.
"""
from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: str | Path, fieldnames: list[str], rows: list[dict]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return p


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_manifest(
    path: str | Path,
    command: str,
    scenario: dict,
    seed,
    extras: dict | None = None,
) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "version": __version__,
        "scenario": scenario,
        "config_hash": config_hash(scenario),
        "seed": seed,
        "generated": datetime.now(timezone.utc).isoformat(),
    }
    if extras:
        payload.update(extras)
    with open(p, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return p


def write_trajectory(path: str | Path, states: list) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w") as fh:
        json.dump([s.to_dict() for s in states], fh)
        fh.write("\n")
    return p

"""Deterministic replica scheduling and artifact writing."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from .catalog import scaling_constants
from .config import ExperimentConfig
from .registry import get_experiment

CSV_COLUMNS = ["experiment", "n", "count", "mean", "stderr", "q05", "q50", "q95"]


def encode(obj) -> str:
    """JSON text with every float written to 17 significant digits.

    Non-finite floats become ``null``.
    """
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return "%.17g" % x if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def plan(cfg: ExperimentConfig) -> list[tuple]:
    """Chunks ``(group, lo, hi)`` in output order; independent of worker count."""
    spec = get_experiment(cfg.experiment)
    chunks = []
    for group, count in spec.groups(cfg):
        for lo in range(0, count, cfg.chunk):
            chunks.append((group, lo, min(count, lo + cfg.chunk)))
    return chunks


def _run_chunk(payload) -> list[dict]:
    cfg_data, group, lo, hi = payload
    cfg = ExperimentConfig(**cfg_data)
    return get_experiment(cfg.experiment).replicas(cfg, group, lo, hi)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("CRTCOVER_WORKERS")
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def execute(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """All replica records, merged in (group, replica) order."""
    workers = resolve_workers(workers)
    data = cfg.model_dump()
    payloads = [(data, g, lo, hi) for g, lo, hi in plan(cfg)]
    if workers == 1 or len(payloads) <= 1:
        parts = [_run_chunk(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, payloads))
    return [rec for part in parts for rec in part]


def derived_parameters(cfg: ExperimentConfig) -> dict:
    law = cfg.offspring_law()
    out = {"law": law.to_spec(), "sigma": law.sigma, "sigma2": law.variance,
           "mode": {"kind": cfg.walk_mode().kind.value, "measure": cfg.walk_mode().measure.value}}
    scales = []
    for n in cfg.sizes:
        c = scaling_constants(law.sigma, n)
        c["check_a_n_b_n_C"] = math.isclose(c["a_n_b_n_C"], c["n32_over_sigma"], rel_tol=1e-12)
        scales.append(c)
    out["scaling"] = scales
    return out


@dataclass(frozen=True)
class RunResult:
    out_dir: Path
    records: list
    summary: dict
    rows: list


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None,
        workers: int | None = None) -> RunResult:
    """Execute ``cfg`` and write records.jsonl, summary.json, table.csv, manifest.json."""
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    spec = get_experiment(cfg.experiment)
    records = execute(cfg, workers)
    summary, rows = spec.summarize(cfg, records)
    out = Path(out_dir or cfg.out or f"runs/{cfg.experiment}-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(encode(rec) + "\n")
    (out / "summary.json").write_text(
        encode({"experiment": cfg.experiment, "seed": cfg.seed, "summary": summary}) + "\n")
    with open(out / "table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(["" if row[c] is None else
                             ("%.17g" % row[c] if isinstance(row[c], float) else row[c])
                             for c in CSV_COLUMNS])
    manifest = {
        "config": cfg.model_dump(),
        "tool": "crtcover",
        "version": __version__,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "master_seed": cfg.seed,
        "workers": resolve_workers(workers),
        "derived": derived_parameters(cfg),
        "records": len(records),
    }
    (out / "manifest.json").write_text(encode(manifest) + "\n")
    return RunResult(out, records, summary, rows)

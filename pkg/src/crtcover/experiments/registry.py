"""Name -> experiment table."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from . import catalog


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    groups: Callable
    replicas: Callable
    summarize: Callable
    defaults: dict = field(default_factory=dict)
    smoke: dict = field(default_factory=dict)


_COVER_SIZES = [500, 1000, 2000, 4000]

_EXPERIMENTS = [
    Experiment(
        "cover-scaling",
        "laws of sigma n^-3/2 tau_cov along a size ladder, KS between neighbours",
        catalog.cover_groups, catalog.cover_replicas, catalog.cover_scaling_summary,
        {"sizes": _COVER_SIZES, "replicas": 10_000},
        {"sizes": [20, 40], "replicas": 40},
    ),
    Experiment(
        "aldous-probe",
        "mean of n^-3/2 tau_cov^+ from the root against 6 sqrt(2 pi)",
        catalog.cover_groups, catalog.cover_replicas, catalog.aldous_summary,
        {"sizes": [4000], "replicas": 10_000},
        {"sizes": [30], "replicas": 40},
    ),
    Experiment(
        "cover-return-moments",
        "p-th moments (p = 1, 2, 4) of rescaled cover and cover-and-return times",
        catalog.cover_groups, catalog.cover_replicas, catalog.moments_summary,
        {"sizes": _COVER_SIZES, "replicas": 10_000},
        {"sizes": [20, 40], "replicas": 40},
    ),
    Experiment(
        "rayknight-mgf",
        "determinant formula for local-time MGFs against the Feynman-Kac solve",
        catalog.rayknight_groups, catalog.rayknight_replicas, catalog.rayknight_summary,
        {"sizes": list(range(2, 9)), "params": {"exhaustive": True, "configs": 5, "lambdas": 5}},
        {"sizes": [2, 3, 4, 5]},
    ),
    Experiment(
        "isomorphism",
        "moments of local time plus squared field increments against squared fields",
        catalog.isomorphism_groups, catalog.isomorphism_replicas, catalog.isomorphism_summary,
        {"sizes": [20], "replicas": 100_000, "mode": "csrw", "params": {"configs": 10}},
        {"sizes": [8], "replicas": 10_000, "params": {"configs": 2}},
    ),
    Experiment(
        "besq-validate",
        "exact BESQ transition: absorption, mean, variance, and KS against Euler-Maruyama",
        catalog.besq_groups, catalog.besq_replicas, catalog.besq_summary,
        {"replicas": 100_000, "params": {"em_paths": 10_000, "em_step": 1e-4}},
        {"replicas": 2000, "params": {"em_paths": 500, "em_step": 1e-2}},
    ),
    Experiment(
        "williams-stats",
        "spine atom counts and truncated sums of squared heights",
        catalog.williams_groups, catalog.williams_replicas, catalog.williams_summary,
        {"replicas": 100_000, "params": {"h": 1.0, "a": 0.1, "delta": 1e-3}},
        {"replicas": 200},
    ),
    Experiment(
        "component-poisson",
        "band counts of small components along a Williams skeleton",
        catalog.component_groups, catalog.component_replicas, catalog.component_summary,
        {"replicas": 2000, "params": {"h": 1.0, "eps": 0.05,
                                      "bands": [0.005, 0.01, 0.02, 0.05]}},
        {"replicas": 20},
    ),
    Experiment(
        "snake-integral",
        "integral of the BESQ snake zero-hitting probability against 2 sqrt(2 pi)",
        catalog.snake_groups, catalog.snake_replicas, catalog.snake_summary,
        {"replicas": 20_000, "grid": 2**14},
        {"replicas": 20, "grid": 256},
    ),
    Experiment(
        "covering-bound",
        "chaining functional from covering numbers against estimated cover times",
        catalog.covering_groups, catalog.covering_replicas, catalog.covering_summary,
        {"sizes": [2**k for k in range(7, 13)], "replicas": 20,
         "params": {"walks": 10, "sandwich_sizes": [6, 8, 10, 12], "sandwich_trees": 5}},
        {"sizes": [16, 32], "replicas": 3,
         "params": {"walks": 3, "sandwich_sizes": [5], "sandwich_trees": 2}},
    ),
    Experiment(
        "concentration-tail",
        "survival tail of tau_cov / mean on one quenched tree",
        catalog.cover_groups, catalog.cover_replicas, catalog.concentration_summary,
        {"sizes": [2000], "replicas": 100_000, "quenched": True, "chunk": 1000,
         "params": {"return": False}},
        {"sizes": [30], "replicas": 2000, "quenched": True, "chunk": 500,
         "params": {"return": False}},
    ),
    Experiment(
        "small-oracle-crosscheck",
        "Monte Carlo cover times against the exact subset oracle; commute identity",
        catalog.oracle_groups, catalog.oracle_replicas, catalog.oracle_summary,
        {"replicas": 100_000, "params": {"exhaustive_max": 8, "random_trees": 20,
                                         "random_max": 12, "commute_trees": 50}},
        {"replicas": 2000, "params": {"exhaustive_max": 4, "random_trees": 2,
                                      "random_max": 6, "commute_trees": 2,
                                      "commute_max": 30}},
    ),
]

_BY_NAME = {e.name: e for e in _EXPERIMENTS}


def registry() -> list[str]:
    return [e.name for e in _EXPERIMENTS]


def get_experiment(name: str) -> Experiment:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise KeyError(f"unknown experiment {name!r}; choose from {registry()}") from None

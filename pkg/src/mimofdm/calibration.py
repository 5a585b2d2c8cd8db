"""Grid search over heuristic detector parameters."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .harness import ScenarioConfig, run_trial


@dataclass
class CalibrationResult:
    best: dict
    surface: list  # (params dict, mean BER)

    def write_csv(self, path) -> None:
        keys = sorted({k for p, _ in self.surface for k in p})
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(keys + ["mean_ber"])
            for p, ber in self.surface:
                out.writerow([p.get(k, "") for k in keys] + [repr(ber)])


def expand_grid(grid: dict) -> list:
    """Cartesian product of ``{name: values}`` as a list of dicts."""
    if not grid:
        raise ValueError("grid must be nonempty")
    names = list(grid)
    values = [list(np.atleast_1d(grid[n])) for n in names]
    if any(len(v) == 0 for v in values):
        raise ValueError("every grid axis needs at least one value")
    return [dict(zip(names, (v.item() if hasattr(v, "item") else v for v in combo)))
            for combo in itertools.product(*values)]


def _size(params: dict) -> int:
    return params.get("n_pop", params.get("n_ind", 0))


def calibrate(grid: dict, scenario: ScenarioConfig, trials: int, seed: int | None = None) -> CalibrationResult:
    """Mean BER of every grid point over ``trials`` Monte-Carlo runs.

    Each grid point sees the same channels, bits and noise (the scenario
    seed), and only the first Eb/N0 value of the scenario is used.  The
    argmin is returned; ties go to the smaller population.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if seed is not None:
        scenario = scenario.replace(seed=seed)
    surface = []
    for params in expand_grid(grid):
        cfg = scenario.replace(detector_params={**scenario.detector_params, **params})
        errors = bits = 0
        for t in range(trials):
            e, b = run_trial(cfg, 0, t)
            errors += e
            bits += b
        surface.append((params, errors / bits))
    best = min(range(len(surface)), key=lambda i: (surface[i][1], _size(surface[i][0]), i))
    return CalibrationResult(surface[best][0], surface)

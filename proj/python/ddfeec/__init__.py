"""Mortar domain decomposition for Darcy flow with FEM and trained Whitney-form subdomains."""

import json

from . import _core
from ._core import (
    ConvergenceFailure,
    Error,
    InvalidInput,
    OutOfDomain,
    TrainingError,
    UnisolvencyWarning,
    default_data_dir,
    fitted_rate,
    pou_values,
    realize_knots,
    set_threads,
    study_ids,
)

__all__ = [
    "ConvergenceFailure",
    "Error",
    "InvalidInput",
    "OutOfDomain",
    "TrainingError",
    "UnisolvencyWarning",
    "default_data_dir",
    "fitted_rate",
    "pou_values",
    "realize_knots",
    "run_study",
    "set_threads",
    "solve",
    "study_ids",
]


def solve(config, base_dir="."):
    """Solve a config given as a file path or a dict; returns the report as a dict."""
    if isinstance(config, dict):
        return json.loads(_core.solve_text(json.dumps(config), str(base_dir)))
    return json.loads(_core.solve_file(str(config)))


def run_study(study_id, levels=(), data_dir="", out_dir="", retrain=False, epochs=0):
    """Run a named study. Returns (csv text, report dict)."""
    r = _core.study(study_id, list(levels), str(data_dir), str(out_dir), retrain, epochs)
    return r["csv"], json.loads(r["report"])

"""Numerical laboratory for List's extended Ricci flow on periodic charts.

Every variation formula and evolution identity is paired with an independent
finite-difference oracle; the harness reports term-by-term residuals,
convergence orders and a verdict per identity.
"""

from .config import ExperimentConfig, load_config, parse_config
from .flow import FlowConfig, FlowState, make_state, step_rk4
from .grid import Grid, make_grid
from .harness import emit_plots, refine_sweep, run
from .metric import Metric

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "FlowConfig",
    "FlowState",
    "Grid",
    "Metric",
    "emit_plots",
    "load_config",
    "make_grid",
    "make_state",
    "parse_config",
    "refine_sweep",
    "run",
    "step_rk4",
]

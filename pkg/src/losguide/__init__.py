"""Line-of-sight guidance for a 6-DoF quadrotor by successive convexification.

Two formulations share one pipeline: ``ct`` enforces the view-cone and
other path constraints between nodes through an integrated violation
state, ``dt`` linearizes them at the nodes only.
"""

from losguide.config import DEFAULT_WEIGHT_SETS, Tolerances, Weights
from losguide.proxlinear import SolveOptions, initial_reference, solve
from losguide.scenarios import Scenario, cinematography_default, load_scenario, relative_nav_default, save_scenario

__all__ = [
    "DEFAULT_WEIGHT_SETS",
    "Scenario",
    "SolveOptions",
    "Tolerances",
    "Weights",
    "cinematography_default",
    "initial_reference",
    "load_scenario",
    "relative_nav_default",
    "save_scenario",
    "solve",
]

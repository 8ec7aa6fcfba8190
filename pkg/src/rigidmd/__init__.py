"""Molecular dynamics of rigid multi-site molecules with Massieu-derivative
sampling, Green-Kubo transport coefficients and structure analysis."""

__version__ = "0.1.0"

from .engine import ResultsBundle, Simulation, SimulationPlan, run  # noqa: E402,F401
from .model import SystemComposition, build_species, lj_atom, load_species, parse_species  # noqa: E402,F401
from .parallel import Electrostatics, ForceEvaluator  # noqa: E402,F401

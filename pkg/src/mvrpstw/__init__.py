"""Multi-vehicle routing with soft time windows: cost model, exact and heuristic
solvers, and an attention-based construction policy trained with REINFORCE."""

from .heuristics import GA1, GA2, ILS1, ILS2, GaConfig, IlsConfig, nearest_neighbor, solve_ga, solve_ils
from .instances import GenConfig, PRESETS, generate, preset, read_instances, write_instances
from .model import MAAM, ModelConfig
from .oracle import solve_exact
from .problem import (CostBreakdown, Customer, Instance, Solution, ValidationError, evaluate_solution,
                      validate_routes)
from .trainer import TrainConfig, train

__version__ = "0.1.0"

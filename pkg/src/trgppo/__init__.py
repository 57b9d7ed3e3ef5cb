"""KL-derived adaptive clipping ranges for PPO-style policy optimization."""

__version__ = "0.1.0"

from .clip_solver import (ClipRange, ConstraintPoint, SolverFailure, TruncatedClipRange,
                          adaptive_delta, batch_adaptive_delta, eval_g, gaussian_clip_range,
                          solve_clip_range, solve_clip_ranges, truncate_range)
from .clip_table import ClipTable, ClipTableSpec, TableCache, build_table, load_or_build
from .envs import make_env
from .ppo_trainer import MethodVariant, TrainerConfig, run_training, variant

__all__ = [
    "ClipRange", "ConstraintPoint", "SolverFailure", "TruncatedClipRange", "adaptive_delta",
    "batch_adaptive_delta", "eval_g", "gaussian_clip_range", "solve_clip_range",
    "solve_clip_ranges", "truncate_range", "ClipTable", "ClipTableSpec", "TableCache",
    "build_table", "load_or_build", "make_env", "MethodVariant", "TrainerConfig",
    "run_training", "variant",
]

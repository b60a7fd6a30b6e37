"""Random k-SAT laboratory: Walksat plus the revelation process that shadows it."""

from ._rng import RNG_NAME, derive_seed, make_rng
from .formula import (
    Assignment,
    DimacsError,
    Formula,
    Literal,
    count_all_negative,
    generate_uniform,
    is_s_negative,
    parse_dimacs,
    unsat_indices,
    write_dimacs,
)
from .walksat import RunResult, SolverTracker, flip, init_tracker, run, run_with_restarts

__version__ = "0.1.0"

TRACE_SCHEMA = "walksat-lab-trace/1"
SWEEP_SCHEMA = "walksat-lab-sweep/1"

__all__ = [
    "Assignment",
    "DimacsError",
    "Formula",
    "Literal",
    "RNG_NAME",
    "RunResult",
    "SWEEP_SCHEMA",
    "SolverTracker",
    "TRACE_SCHEMA",
    "count_all_negative",
    "derive_seed",
    "flip",
    "generate_uniform",
    "init_tracker",
    "is_s_negative",
    "make_rng",
    "parse_dimacs",
    "run",
    "run_with_restarts",
    "unsat_indices",
    "write_dimacs",
]

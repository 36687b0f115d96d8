"""Message-passing networks that predict MaxSAT assignments, with an exact
oracle and a one-round local approximation algorithm for comparison."""
from .cnf import CnfFormula, DimacsError, FormulaError, eval_assignment, parse_dimacs, read_dimacs, write_dimacs
from .dla import PickPolicy, run_dla, verify_half_bound
from .generator import GenSpec, generate_dataset, generate_instance, load_manifest
from .model import Checkpoint, ModelConfig, load_checkpoint, save_checkpoint
from .solver import OptResult, label_dataset, load_labels, solve_branch_bound, solve_exhaustive

__version__ = "0.1.0"

__all__ = [
    "CnfFormula", "DimacsError", "FormulaError", "eval_assignment", "parse_dimacs", "read_dimacs",
    "write_dimacs", "PickPolicy", "run_dla", "verify_half_bound", "GenSpec", "generate_dataset",
    "generate_instance", "load_manifest", "Checkpoint", "ModelConfig", "load_checkpoint",
    "save_checkpoint", "OptResult", "label_dataset", "load_labels", "solve_branch_bound",
    "solve_exhaustive",
]

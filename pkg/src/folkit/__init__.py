"""folkit: first-order logic toolkit for NL-FOL translation pipelines.

Parsing and validation of a quantifier-prefix FOL dialect, truth-table
logical-equivalence and FOL-BLEU scoring, reversible rule perturbations with
correction steps, training-record forging, an NL-FOL collection pipeline,
and an iterative-correction session harness.
"""

from .fol import Atom, BinaryOp, FolRule, Group, Literal, Negation, atoms, print_canonical
from .metrics import RewardConfig, fol_bleu, fol_tokenize, le_score, reward
from .parser import FolSyntaxError, parse, validate
from .perturb import EditStep, PerturbConfig, apply_step, sample_perturbation

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "BinaryOp",
    "EditStep",
    "FolRule",
    "FolSyntaxError",
    "Group",
    "Literal",
    "Negation",
    "PerturbConfig",
    "RewardConfig",
    "apply_step",
    "atoms",
    "fol_bleu",
    "fol_tokenize",
    "le_score",
    "parse",
    "print_canonical",
    "reward",
    "sample_perturbation",
    "validate",
]

"""Recovery of private images from sparse absolute-value mixtures of Gaussian images."""

from .errors import MTPRError
from .floral import FloralAssignment, find_floral_submatrix, identify_family, verify_floral
from .gram import gram_extract, psi, psi_inv
from .model import ModelParams, OverlapMatrix, SyntheticDataset, generate_instance
from .pipeline import AttackReport, evaluate_recovery, learn_private_images
from .public import learn_public
from .signs import SignedSystem, solve_signed_system

__all__ = [
    "AttackReport",
    "FloralAssignment",
    "MTPRError",
    "ModelParams",
    "OverlapMatrix",
    "SignedSystem",
    "SyntheticDataset",
    "evaluate_recovery",
    "find_floral_submatrix",
    "generate_instance",
    "gram_extract",
    "identify_family",
    "learn_private_images",
    "learn_public",
    "psi",
    "psi_inv",
    "solve_signed_system",
    "verify_floral",
]

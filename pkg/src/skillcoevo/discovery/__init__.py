"""Skill discovery: boundary proposal, segmentation, contract learning and bank upkeep."""

from .boundaries import BoundaryWeights, CandidateBoundary, flip_scale, propose_boundaries
from .contracts import consensus_effects, learn_contract, verify_contract
from .maintenance import maintain_bank, rule_approves
from .params import MaintenanceParams
from .segmentation import (NEW, LabeledSegment, infer_segmentation, load_segments,
                           save_segments)

__all__ = [
    "NEW", "BoundaryWeights", "CandidateBoundary", "LabeledSegment", "MaintenanceParams",
    "consensus_effects", "flip_scale", "infer_segmentation", "learn_contract", "load_segments",
    "maintain_bank", "propose_boundaries", "rule_approves", "save_segments", "verify_contract",
]

"""Registration and fusion of evidential occupancy grid maps from two vehicles."""

from .evidence import (
    EvidenceCell,
    MassCell,
    NonFiniteEvidence,
    TotalConflict,
    dempster_combine,
    evidence_to_mass,
    pignistic_p_occupied,
)
from .fusion import FusionReport, build_label, fuse_baseline
from .grid import EvidentialGrid, GeometryMismatch, GridGeometry, Pose2, relative_transform, resample

__version__ = "0.1.0"

"""Key-rate calculator for round-robin differential-phase-shift QKD.

Weak coherent pulses and heralded single-photon sources, without decoys,
with ideal (infinite) decoys, and with two, three or four decoy intensities.
"""
from .channel import ChannelParams, gain_qber
from .decoy import DecoyObservation, YieldBounds, estimate_bounds
from .errors import (
    DegenerateInputError,
    DomainError,
    InsufficientObservationsError,
    InvalidBoundsError,
    OrderingError,
    RRDPSError,
)
from .optimize import SearchSpec, max_positive_distance, optimize_point, sweep_distance
from .rates import DecoyTier, ProtocolParams, RateResult, key_rate
from .sources import SourceKind, SourceModel

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "DecoyObservation",
    "DecoyTier",
    "DegenerateInputError",
    "DomainError",
    "InsufficientObservationsError",
    "InvalidBoundsError",
    "OrderingError",
    "ProtocolParams",
    "RRDPSError",
    "RateResult",
    "SearchSpec",
    "SourceKind",
    "SourceModel",
    "YieldBounds",
    "estimate_bounds",
    "gain_qber",
    "key_rate",
    "max_positive_distance",
    "optimize_point",
    "sweep_distance",
]

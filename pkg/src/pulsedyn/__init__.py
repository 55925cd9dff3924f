"""Geometry-driven pulse dynamics for bulk-surface wave-pinning models."""
from .errors import PulseDynError
from .geometry import ConformalDomain, DomainKind, DomainSpec, build_domain
from .greens import PotentialField
from .kinetics import MassRelation, ReactionKinetics

__version__ = "0.1.0"

__all__ = [
    "PulseDynError", "ConformalDomain", "DomainKind", "DomainSpec", "build_domain",
    "PotentialField", "ReactionKinetics", "MassRelation", "__version__",
]

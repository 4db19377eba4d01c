"""
Error hierarchy for cutlocus
"""

from typing import Any, Optional, Tuple


class CutLocusError(Exception):
    """Base class for all errors raised by cutlocus"""


class ConfigError(CutLocusError, ValueError):
    """Invalid job description or configuration value"""


class DomainError(CutLocusError):
    """Point or parameter outside the admissible domain"""


class UnsupportedError(CutLocusError):
    """Operation not available for this manifold"""


class DualityError(CutLocusError):
    """Finsler duality undefined (zero vector)"""


class MultipleMinimizersError(CutLocusError):
    """More than one minimizing geodesic at chart scale"""


class IntegrationError(CutLocusError):
    """Geodesic integration failed"""

    def __init__(self, message: str, last_state: Optional[Any] = None):
        super().__init__(message)
        self.last_state = last_state


class CompatibilityError(CutLocusError):
    """Boundary data violates the compatibility condition"""

    def __init__(self, message: str, margin: Optional[float] = None):
        super().__init__(message)
        self.margin = margin


class DegenerateRayError(CutLocusError):
    """det dF vanishes identically over an interval of a ray"""

    def __init__(self, message: str, interval: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.interval = interval


class DegenerateDistributionError(CutLocusError):
    """Conjugate distribution undefined at this point"""


class ReductionError(CutLocusError):
    """Backward characteristics cross before the required depth"""

    def __init__(self, message: str, depth: Optional[float] = None):
        super().__init__(message)
        self.depth = depth


class RetortError(CutLocusError):
    """Retort lift failed"""

    def __init__(self, message: str, last_sample: Optional[Any] = None):
        super().__init__(message)
        self.last_sample = last_sample


class OrientationError(CutLocusError):
    """Sheet components cannot be oriented"""

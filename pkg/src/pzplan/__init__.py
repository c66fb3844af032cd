"""Probabilistic-zonotope reachability and chance-constrained planning for a UAV flying on GNSS in urban canyons."""

from .zonotope import ProbabilisticZonotope, Zonotope

__version__ = "0.1.0"

__all__ = ["ProbabilisticZonotope", "Zonotope", "__version__"]

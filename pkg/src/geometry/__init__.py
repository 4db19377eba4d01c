"""
Manifolds, metrics and distance oracles
"""

import numpy as np

from .loader import MANIFOLD_REGISTRY, load_manifold
from .manifolds import (BoundaryComponent, ChartedManifold, Ellipsoid, EuclideanDomain,
                        FlatTorus, MinkowskiPlane, RoundSphere, circle_component)
from .metrics import (EmbeddedMetric, EuclideanMetric, MetricField, RandersMetric,
                      RiemannianMetric, check_convexity, check_homogeneity, covector_to_vector,
                      inverse_dual, sphere_directions)


def finsler_norm(manifold: ChartedManifold, p, v) -> float:
    """phi_p(v); raises DomainError outside the chart domain"""
    p = manifold.check_point(p)
    return float(manifold.metric.norm(p, np.asarray(v, dtype=float)))


def dual_one_form(manifold: ChartedManifold, p, v) -> np.ndarray:
    """The one-form w with w(v) = phi(v)^2 annihilating the orthogonal hyperplane"""
    p = manifold.check_point(p)
    return manifold.metric.dual(p, np.asarray(v, dtype=float))


def v_p_q(manifold: ChartedManifold, p, q) -> np.ndarray:
    """Unit initial speed of the minimizing geodesic from p to q"""
    return manifold.minimizing_direction(p, q)


def distance_oracle(manifold: ChartedManifold, p, q) -> float:
    """Exact global distance d(p, q) on the registered analytic manifolds"""
    return manifold.distance(manifold.check_point(p), manifold.check_point(q))


__all__ = [
    'BoundaryComponent', 'ChartedManifold', 'Ellipsoid', 'EuclideanDomain', 'FlatTorus',
    'MinkowskiPlane', 'RoundSphere', 'circle_component', 'EmbeddedMetric', 'EuclideanMetric',
    'MetricField', 'RandersMetric', 'RiemannianMetric', 'check_convexity', 'check_homogeneity',
    'covector_to_vector', 'inverse_dual', 'sphere_directions', 'MANIFOLD_REGISTRY', 'load_manifold', 'finsler_norm',
    'dual_one_form', 'v_p_q', 'distance_oracle',
]

"""
Manifold registry: builds a ChartedManifold from its JSON description
"""

import logging
from typing import Any, Callable, Dict

import numpy as np

from ..errors import ConfigError, DomainError
from .manifolds import (ChartedManifold, Ellipsoid, EuclideanDomain, FlatTorus,
                        MinkowskiPlane, RoundSphere)

logger = logging.getLogger(__name__)


def _flat_torus(doc):
    return FlatTorus(periods=doc.get('periods', [1.0, 1.0]))


def _annulus(doc):
    return EuclideanDomain('annulus', r_inner=doc.get('r_inner', 1.0),
                           r_outer=doc.get('r_outer', 2.0), center=doc.get('center', [0.0, 0.0]))


def _disk(doc):
    return EuclideanDomain('disk', radius=doc.get('radius', 1.0), center=doc.get('center', [0.0, 0.0]))


def _half_plane(doc):
    return EuclideanDomain('half_plane', extent=doc.get('extent', 2.0))


def _euclidean(doc):
    return EuclideanDomain('plane', extent=doc.get('extent', 2.0))


def _sphere(doc):
    return RoundSphere(radius=doc.get('radius', 1.0), cap=doc.get('cap'))


def _ellipsoid(doc):
    if 'semiaxes' not in doc:
        raise ConfigError("ellipsoid requires 'semiaxes'")
    return Ellipsoid(doc['semiaxes'])


def _minkowski_plane(doc):
    if 'randers_drift' not in doc:
        raise ConfigError("minkowski_plane requires 'randers_drift'")
    domain = doc.get('domain')
    if domain is not None:
        domain = dict(domain)
        if domain.pop('kind', None) not in (None, 'disk', 'euclidean', 'half_plane'):
            raise ConfigError("minkowski_plane domain must be a disk, half_plane or euclidean")
    return MinkowskiPlane(doc['randers_drift'], domain)


# kind -> (builder, allowed keys besides 'kind')
MANIFOLD_REGISTRY: Dict[str, Any] = {
    'flat_torus': (_flat_torus, {'periods'}),
    'annulus': (_annulus, {'r_inner', 'r_outer', 'center'}),
    'disk': (_disk, {'radius', 'center'}),
    'half_plane': (_half_plane, {'extent'}),
    'euclidean': (_euclidean, {'extent'}),
    'sphere': (_sphere, {'radius', 'cap'}),
    'ellipsoid': (_ellipsoid, {'semiaxes'}),
    'minkowski_plane': (_minkowski_plane, {'randers_drift', 'domain'}),
}


def verify_inner_normals(manifold: ChartedManifold, samples: int = 16, step: float = 1e-3) -> None:
    """Check that a short step along every inner normal hint stays in the domain"""
    for component in manifold.boundary_components:
        s = component.parameters(samples)
        if not component.closed:
            s = s[1:-1]
        points = component.point(s) + step * component.inward(s)
        points = manifold.project(points)
        if np.any(manifold.boundary_distance(points) <= 0):
            raise ConfigError(f"inner normal of boundary component {component.id} points outside")


def load_manifold(doc: Dict[str, Any]) -> ChartedManifold:
    """
    Build a manifold from a JSON document

    Args:
        doc: Mapping with a 'kind' key and the kind's fields

    Returns:
        The constructed manifold
    """
    if not isinstance(doc, dict) or 'kind' not in doc:
        raise ConfigError("manifold document must be an object with a 'kind'")
    kind = doc['kind']
    if kind not in MANIFOLD_REGISTRY:
        raise ConfigError(f"unknown manifold kind '{kind}'; available: {sorted(MANIFOLD_REGISTRY)}")
    builder, allowed = MANIFOLD_REGISTRY[kind]
    unknown = set(doc) - allowed - {'kind'}
    if unknown:
        raise ConfigError(f"unknown keys for {kind}: {sorted(unknown)}")
    try:
        manifold = builder(doc)
    except (ValueError, TypeError, DomainError) as e:
        raise ConfigError(f"invalid {kind} description: {e}") from e
    verify_inner_normals(manifold)
    logger.debug("Loaded manifold %s", kind)
    return manifold

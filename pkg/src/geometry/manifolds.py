"""
Charted manifolds with boundary and their distance oracles
"""

import logging
from abc import ABC
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DomainError, MultipleMinimizersError, UnsupportedError
from .metrics import EmbeddedMetric, EuclideanMetric, MetricField, RandersMetric

logger = logging.getLogger(__name__)

TIE_TOL = 1e-9


@dataclass
class BoundaryComponent:
    """A connected boundary curve given by a parametrization s -> point.

    Closed components are periodic in s with the given period; open ones
    (the half-plane edge) are sampled over param_range.
    """
    id: int
    curve: Callable[[np.ndarray], np.ndarray]
    period: Optional[float]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inner_normal_hint: Optional[Callable[[np.ndarray], np.ndarray]] = None
    param_range: Optional[Tuple[float, float]] = None

    @property
    def closed(self) -> bool:
        return self.period is not None

    def point(self, s):
        return self.curve(np.asarray(s, dtype=float))

    def tangent(self, s):
        s = np.asarray(s, dtype=float)
        if self.derivative is not None:
            return self.derivative(s)
        h = 1e-6 * (self.period or 1.0)
        return (self.curve(s + h) - self.curve(s - h)) / (2 * h)

    def inward(self, s):
        if self.inner_normal_hint is None:
            raise UnsupportedError(f"boundary component {self.id} has no inner normal hint")
        return self.inner_normal_hint(np.asarray(s, dtype=float))

    def parameters(self, count: int) -> np.ndarray:
        if self.closed:
            return self.period * np.arange(count) / count
        lo, hi = self.param_range
        return np.linspace(lo, hi, count)

    def wrap_param(self, s):
        return np.mod(s, self.period) if self.closed else s

    def param_gap(self, s1, s2):
        """Distance between parameters, periodic for closed components"""
        d = np.abs(np.asarray(s1) - np.asarray(s2))
        if self.closed:
            d = np.mod(d, self.period)
            d = np.minimum(d, self.period - d)
        return d


def circle_component(cid: int, center, radius: float, inward_sign: float) -> BoundaryComponent:
    """Counterclockwise circle; inward_sign=+1 when M lies outside the circle"""
    c = np.asarray(center, dtype=float)

    def curve(s):
        return c + radius * np.stack([np.cos(s), np.sin(s)], axis=-1)

    def derivative(s):
        return radius * np.stack([-np.sin(s), np.cos(s)], axis=-1)

    def hint(s):
        return inward_sign * np.stack([np.cos(s), np.sin(s)], axis=-1)

    return BoundaryComponent(cid, curve, 2 * np.pi, derivative, hint)


class ChartedManifold(ABC):
    """A manifold with boundary described by one global chart.

    Points live in ambient chart coordinates (ambient_dim); tangent vectors
    have the same arity. Embedded surfaces use R^3 with dim 2.
    """

    kind = 'manifold'

    def __init__(self, metric: MetricField, boundary_components: Sequence[BoundaryComponent] = (),
                 dim: int = 2, ambient_dim: int = 2, periods: Optional[Sequence[float]] = None):
        self.metric = metric
        self.boundary_components: List[BoundaryComponent] = list(boundary_components)
        self.dim = dim
        self.ambient_dim = ambient_dim
        self.periods = None if periods is None else np.asarray(periods, dtype=float)

    # Domain --------------------------------------------------------------

    def boundary_distance(self, x) -> np.ndarray:
        """Signed distance to the boundary inside the chart, positive inside"""
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], np.inf)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.boundary_distance(x) >= -tol))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim or not np.all(np.isfinite(x)) or not self.contains(x):
            raise DomainError(f"point {x} lies outside the chart domain of {self.kind}")
        return x

    def chart_bounds(self) -> Optional[np.ndarray]:
        return None

    def tangent_basis(self, x) -> np.ndarray:
        return np.eye(self.ambient_dim)

    def frame_along(self, x, v) -> np.ndarray:
        """Orthonormal tangent frame (ambient x dim) used to measure det dF along a ray.

        Broadcasts over leading axes of x and v.
        """
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.ambient_dim), x.shape[:-1] + (self.ambient_dim, self.ambient_dim))

    def project(self, x):
        return np.asarray(x, dtype=float)

    def wrap(self, x):
        x = np.asarray(x, dtype=float)
        if self.periods is None:
            return x
        return np.mod(x, self.periods)

    def chart_difference(self, p, q):
        """q - p, reduced to the nearest translate on periodic charts"""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        if self.periods is not None:
            d = d - self.periods * np.round(d / self.periods)
        return d

    @property
    def translates(self) -> np.ndarray:
        return np.zeros((1, self.ambient_dim))

    def unit_direction(self, x, theta) -> np.ndarray:
        """Unit (phi = 1) tangent vector at x with angle theta in the tangent basis"""
        E = self.tangent_basis(x)
        u = E @ np.array([np.cos(theta), np.sin(theta)])
        return u / float(self.metric.norm(x, u))

    # Oracles --------------------------------------------------------------

    @property
    def has_oracle(self) -> bool:
        return False

    def pair_distance(self, a, b) -> np.ndarray:
        """Length of the minimizing path a -> b on the covering chart (broadcast)"""
        raise UnsupportedError(f"no distance oracle for manifold kind '{self.kind}'")

    def distance(self, p, q) -> float:
        """Exact global distance d(p, q) on oracle manifolds"""
        if not self.has_oracle:
            raise UnsupportedError(f"no distance oracle for manifold kind '{self.kind}'")
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return float(np.min(self.pair_distance(p[None, :] + self.translates, q[None, :])))

    def distance_matrix(self, P, Q) -> np.ndarray:
        """d(P_i, Q_j) minimized over lattice translates of P"""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if not self.has_oracle:
            raise UnsupportedError(f"no distance oracle for manifold kind '{self.kind}'")
        best = np.full((len(P), len(Q)), np.inf)
        for shift in self.translates:
            lengths = self.pair_distance((P + shift)[:, None, :], Q[None, :, :])
            best = np.minimum(best, lengths)
        return best

    def arrival_vector(self, a, b) -> np.ndarray:
        """Unit velocity at b of the minimizing geodesic a -> b on the covering chart"""
        raise UnsupportedError(f"no arrival vectors for manifold kind '{self.kind}'")

    def minimizing_direction(self, p, q) -> np.ndarray:
        """v_p(q): unit initial speed of the minimizing geodesic from p to q"""
        p = self.check_point(p)
        q = self.check_point(q)
        if np.allclose(p, q, atol=1e-14):
            raise DomainError("v_p(q) is undefined for p = q")
        if not self.has_oracle:
            raise UnsupportedError(f"no minimizing directions for manifold kind '{self.kind}'")
        sources = p[None, :] + self.translates
        lengths = self.pair_distance(sources, q[None, :])
        order = np.argsort(lengths)
        if len(order) > 1 and lengths[order[1]] - lengths[order[0]] < TIE_TOL:
            raise MultipleMinimizersError("several minimizing geodesics join p and q")
        return self._departure_vector(sources[order[0]], q)

    def _departure_vector(self, a, b) -> np.ndarray:
        raise UnsupportedError(f"no minimizing directions for manifold kind '{self.kind}'")


class EuclideanDomain(ChartedManifold):
    """Convex flat domains (plane, disk, half-plane) and the round annulus"""

    kind = 'euclidean'

    def __init__(self, shape: str = 'plane', radius: float = 1.0, center=(0.0, 0.0),
                 r_inner: float = 1.0, r_outer: float = 2.0, extent: float = 2.0,
                 metric: Optional[MetricField] = None):
        self.shape = shape
        self.center = np.asarray(center, dtype=float)
        self.radius = radius
        self.r_inner = r_inner
        self.r_outer = r_outer
        self.extent = extent
        if shape == 'disk':
            components = [circle_component(0, self.center, radius, -1.0)]
        elif shape == 'annulus':
            if not 0 < r_inner < r_outer:
                raise DomainError("annulus radii must satisfy 0 < r_inner < r_outer")
            components = [circle_component(0, self.center, r_inner, 1.0),
                          circle_component(1, self.center, r_outer, -1.0)]
        elif shape == 'half_plane':
            components = [BoundaryComponent(
                0,
                lambda s: np.stack([s, np.zeros_like(s)], axis=-1),
                None,
                lambda s: np.stack([np.ones_like(s), np.zeros_like(s)], axis=-1),
                lambda s: np.stack([np.zeros_like(s), np.ones_like(s)], axis=-1),
                param_range=(-extent, extent))]
        elif shape == 'plane':
            components = []
        else:
            raise DomainError(f"unknown flat domain shape '{shape}'")
        super().__init__(metric or EuclideanMetric(), components)
        if shape == 'annulus':
            self.kind = 'annulus'

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=float)
        if self.shape == 'plane':
            return np.full(x.shape[:-1], np.inf)
        if self.shape == 'half_plane':
            return x[..., 1]
        r = np.linalg.norm(x - self.center, axis=-1)
        if self.shape == 'disk':
            return self.radius - r
        return np.minimum(r - self.r_inner, self.r_outer - r)

    def chart_bounds(self):
        if self.shape == 'disk':
            return np.array([self.center - self.radius, self.center + self.radius]).T
        if self.shape == 'annulus':
            return np.array([self.center - self.r_outer, self.center + self.r_outer]).T
        if self.shape == 'half_plane':
            return np.array([[-self.extent, self.extent], [0.0, 2 * self.extent]])
        return np.array([[-self.extent, self.extent], [-self.extent, self.extent]])

    @property
    def has_oracle(self) -> bool:
        return True

    def _blocked(self, a, b):
        """True where the segment a -> b crosses the open inner disk of the annulus"""
        a = a - self.center
        b = b - self.center
        d = b - a
        dd = np.maximum(np.einsum('...i,...i->...', d, d), 1e-300)
        lam = np.clip(-np.einsum('...i,...i->...', a, d) / dd, 0.0, 1.0)
        closest = a + lam[..., None] * d
        return np.linalg.norm(closest, axis=-1) < self.r_inner - 1e-12

    def _wrap_geometry(self, a, b):
        """Tangent lengths, arc and tangent points of the shorter way around the hole"""
        a = a - self.center
        b = b - self.center
        r = self.r_inner
        ra = np.linalg.norm(a, axis=-1)
        rb = np.linalg.norm(b, axis=-1)
        ta = np.arctan2(a[..., 1], a[..., 0])
        tb = np.arctan2(b[..., 1], b[..., 0])
        alpha_a = np.arccos(np.clip(r / ra, -1, 1))
        alpha_b = np.arccos(np.clip(r / rb, -1, 1))
        ccw = np.mod((tb - alpha_b) - (ta + alpha_a), 2 * np.pi)
        cw = np.mod((ta - alpha_a) - (tb + alpha_b), 2 * np.pi)
        use_ccw = ccw <= cw
        arc = np.where(use_ccw, ccw, cw)
        tangent_b = np.where(use_ccw, tb - alpha_b, tb + alpha_b)
        straight = np.sqrt(np.maximum(ra ** 2 - r ** 2, 0)) + np.sqrt(np.maximum(rb ** 2 - r ** 2, 0))
        point_b = self.center + r * np.stack([np.cos(tangent_b), np.sin(tangent_b)], axis=-1)
        return straight + r * arc, point_b

    def pair_distance(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a, b = np.broadcast_arrays(a, b)
        length = self.metric.norm(None, b - a)
        if self.shape == 'annulus':
            blocked = self._blocked(a, b)
            if np.any(blocked):
                wrap_len, _ = self._wrap_geometry(a, b)
                length = np.where(blocked, wrap_len, length)
        return length

    def arrival_vector(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a, b = np.broadcast_arrays(a, b)
        start = a
        if self.shape == 'annulus':
            blocked = self._blocked(a, b)
            if np.any(blocked):
                _, tangent_point = self._wrap_geometry(a, b)
                start = np.where(blocked[..., None], tangent_point, a)
        d = b - start
        return d / self.metric.norm(None, d)[..., None]

    def _departure_vector(self, a, b):
        if self.shape == 'annulus' and self._blocked(a, b):
            # reverse the arrival geometry: tangent point seen from a
            _, tangent_point = self._wrap_geometry(b, a)
            d = tangent_point - a
        else:
            d = b - a
        return d / float(self.metric.norm(a, d))


class MinkowskiPlane(EuclideanDomain):
    """Flat plane (or disk) with the constant Randers norm |v| + <b, v>"""

    kind = 'minkowski_plane'

    def __init__(self, randers_drift, domain: Optional[dict] = None):
        domain = dict(domain or {'shape': 'plane'})
        shape = domain.pop('shape', 'plane')
        super().__init__(shape=shape, metric=RandersMetric(randers_drift), **domain)
        self.kind = 'minkowski_plane'


class FlatTorus(ChartedManifold):
    """R^2 modulo the lattice spanned by the periods"""

    kind = 'flat_torus'

    def __init__(self, periods=(1.0, 1.0), lattice_range: int = 2):
        super().__init__(EuclideanMetric(), [], periods=periods)
        r = np.arange(-lattice_range, lattice_range + 1)
        mm, nn = np.meshgrid(r, r, indexing='ij')
        self.lattice = np.stack([mm.ravel(), nn.ravel()], axis=1)

    @property
    def translates(self):
        return self.lattice * self.periods

    def chart_bounds(self):
        return np.array([[0.0, self.periods[0]], [0.0, self.periods[1]]])

    @property
    def has_oracle(self) -> bool:
        return True

    def pair_distance(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        return np.linalg.norm(b - a, axis=-1)

    def arrival_vector(self, a, b):
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        return d / np.linalg.norm(d, axis=-1)[..., None]

    def _departure_vector(self, a, b):
        return self.arrival_vector(a, b)


class _Quadric(ChartedManifold):
    """Surfaces sum(x_i^2/a_i^2) = 1 in R^3"""

    def __init__(self, semiaxes, components=()):
        super().__init__(EmbeddedMetric(semiaxes), components, dim=2, ambient_dim=3)
        self.semiaxes = np.asarray(semiaxes, dtype=float)

    def normal(self, x):
        g = 2 * np.asarray(x, dtype=float) / self.semiaxes ** 2
        return g / np.linalg.norm(g, axis=-1)[..., None]

    def project(self, x):
        x = np.asarray(x, dtype=float)
        scale = np.sqrt(np.sum(x ** 2 / self.semiaxes ** 2, axis=-1))
        return x / scale[..., None]

    def check_point(self, x):
        x = super().check_point(x)
        if abs(float(np.sum(x ** 2 / self.semiaxes ** 2)) - 1.0) > 1e-6:
            raise DomainError(f"point {x} is not on the surface")
        return x

    def tangent_basis(self, x):
        n = self.normal(x)
        axis = np.eye(3)[int(np.argmin(np.abs(n)))]
        e1 = axis - (axis @ n) * n
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        return np.stack([e1, e2], axis=1)

    def frame_along(self, x, v):
        # [v, n x v] keeps det dF continuous along a ray
        n = self.normal(x)
        v = np.asarray(v, dtype=float)
        e1 = v - np.einsum("...i,...i->...", v, n)[..., None] * n
        e1 = e1 / np.linalg.norm(e1, axis=-1)[..., None]
        return np.stack([e1, np.cross(n, e1)], axis=-1)

    def latlong(self, colatitude, longitude):
        a = self.semiaxes
        return np.stack([a[0] * np.sin(colatitude) * np.cos(longitude),
                         a[1] * np.sin(colatitude) * np.sin(longitude),
                         a[2] * np.cos(colatitude)], axis=-1)


class RoundSphere(_Quadric):
    """Round sphere, optionally with a spherical cap {colatitude < cap} removed"""

    kind = 'sphere'

    def __init__(self, radius: float = 1.0, cap: Optional[float] = None):
        self.radius = radius
        self.cap = cap
        components = []
        if cap is not None:
            st, ct = np.sin(cap), np.cos(cap)

            def curve(s):
                return radius * np.stack([st * np.cos(s), st * np.sin(s), ct * np.ones_like(s)], axis=-1)

            def derivative(s):
                return radius * np.stack([-st * np.sin(s), st * np.cos(s), np.zeros_like(s)], axis=-1)

            def hint(s):
                return np.stack([ct * np.cos(s), ct * np.sin(s), -st * np.ones_like(s)], axis=-1)

            components.append(BoundaryComponent(0, curve, 2 * np.pi, derivative, hint))
        super().__init__([radius] * 3, components)

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=float)
        if self.cap is None:
            return np.full(x.shape[:-1], np.inf)
        colat = np.arccos(np.clip(x[..., 2] / np.linalg.norm(x, axis=-1), -1, 1))
        return self.radius * (colat - self.cap)

    @property
    def has_oracle(self) -> bool:
        return True

    def pair_distance(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        c = np.einsum('...i,...i->...', a, b) / self.radius ** 2
        return self.radius * np.arccos(np.clip(c, -1.0, 1.0))

    def arrival_vector(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        bh = b / np.linalg.norm(b, axis=-1)[..., None]
        away = -(a - np.einsum('...i,...i->...', a, bh)[..., None] * bh)
        return away / np.linalg.norm(away, axis=-1)[..., None]

    def _departure_vector(self, a, b):
        if self.pair_distance(a, b) > np.pi * self.radius - 1e-9:
            raise MultipleMinimizersError("antipodal points are joined by a circle of geodesics")
        ah = a / np.linalg.norm(a)
        d = b - (b @ ah) * ah
        return d / np.linalg.norm(d)


class Ellipsoid(_Quadric):
    """Tri-axial ellipsoid; no closed-form distance"""

    kind = 'ellipsoid'

    def __init__(self, semiaxes):
        if len(semiaxes) != 3 or min(semiaxes) <= 0:
            raise DomainError("ellipsoid needs three positive semiaxes")
        super().__init__(semiaxes)

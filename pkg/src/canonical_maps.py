"""
Canonical Lagrangian singularity maps used as model exponential maps
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Dict, Optional, Type

import numpy as np

from .errors import ConfigError
from .geodesic_flow import RayFamily, RayPath

logger = logging.getLogger(__name__)


class CanonicalMap(ABC):
    """A polynomial map e: R^n -> R^n with analytic first and second derivatives"""

    name = 'model'
    dim = 2

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """e(x), broadcasting over leading axes"""

    @abstractmethod
    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """De(x), shape (..., n, n)"""

    @abstractmethod
    def second(self, x: np.ndarray) -> np.ndarray:
        """D2e(x) with [i, j, k] = d2 e_i / dx_j dx_k"""

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    def det(self, x) -> np.ndarray:
        return np.linalg.det(self.jacobian(np.asarray(x, dtype=float)))

    def det_gradient(self, x) -> np.ndarray:
        """Gradient of det De by Jacobi's formula"""
        x = np.asarray(x, dtype=float)
        J = self.jacobian(x)
        D2 = self.second(x)
        return np.einsum("ji,ijk->k", _adjugate(J), D2)


def _adjugate(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    adj = np.empty_like(M)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(M, i, axis=0), j, axis=1)
            adj[j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


def _stack(*cols):
    return np.stack(cols, axis=-1)


class FoldMap(CanonicalMap):
    """A2: (x1^2, x2)"""

    name = 'A2'

    def evaluate(self, x):
        return _stack(x[..., 0] ** 2, x[..., 1])

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = 2 * x[..., 0]
        J[..., 1, 1] = 1.0
        return J

    def second(self, x):
        D = np.zeros((2, 2, 2))
        D[0, 0, 0] = 2.0
        return D


class CuspMap(CanonicalMap):
    """A3: (x1^3 - x1 x2, x2); conjugate curve x2 = 3 x1^2"""

    name = 'A3'

    def evaluate(self, x):
        return _stack(x[..., 0] ** 3 - x[..., 0] * x[..., 1], x[..., 1])

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = 3 * x[..., 0] ** 2 - x[..., 1]
        J[..., 0, 1] = -x[..., 0]
        J[..., 1, 1] = 1.0
        return J

    def second(self, x):
        D = np.zeros((2, 2, 2))
        D[0, 0, 0] = 6 * x[0]
        D[0, 0, 1] = D[0, 1, 0] = -1.0
        return D


class SwallowtailMap(CanonicalMap):
    """A4: (x1^4 + x1^2 x2 + x1 x3, x2, x3)"""

    name = 'A4'
    dim = 3

    def evaluate(self, x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return _stack(x1 ** 4 + x1 ** 2 * x2 + x1 * x3, x2, x3)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 0] = 4 * x1 ** 3 + 2 * x1 * x2 + x3
        J[..., 0, 1] = x1 ** 2
        J[..., 0, 2] = x1
        J[..., 1, 1] = 1.0
        J[..., 2, 2] = 1.0
        return J

    def second(self, x):
        x1, x2 = x[0], x[1]
        D = np.zeros((3, 3, 3))
        D[0, 0, 0] = 12 * x1 ** 2 + 2 * x2
        D[0, 0, 1] = D[0, 1, 0] = 2 * x1
        D[0, 0, 2] = D[0, 2, 0] = 1.0
        return D


class EllipticUmbilicMap(CanonicalMap):
    """D4-: (x1^2/2 - x2^2/2 + x1 x3, -x1 x2 + x2 x3, x3); det = x3^2 - x1^2 - x2^2"""

    name = 'D4_minus'
    dim = 3

    def evaluate(self, x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return _stack(0.5 * x1 ** 2 - 0.5 * x2 ** 2 + x1 * x3, -x1 * x2 + x2 * x3, x3)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 0] = x1 + x3
        J[..., 0, 1] = -x2
        J[..., 0, 2] = x1
        J[..., 1, 0] = -x2
        J[..., 1, 1] = -x1 + x3
        J[..., 1, 2] = x2
        J[..., 2, 2] = 1.0
        return J

    def second(self, x):
        D = np.zeros((3, 3, 3))
        D[0, 0, 0] = 1.0
        D[0, 1, 1] = -1.0
        D[0, 0, 2] = D[0, 2, 0] = 1.0
        D[1, 0, 1] = D[1, 1, 0] = -1.0
        D[1, 1, 2] = D[1, 2, 1] = 1.0
        return D


class HyperbolicUmbilicMap(CanonicalMap):
    """D4+: (x1^2/2 + x2 x3, x2^2/2 + x1 x3, x3); det = x1 x2 - x3^2"""

    name = 'D4_plus'
    dim = 3

    def evaluate(self, x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return _stack(0.5 * x1 ** 2 + x2 * x3, 0.5 * x2 ** 2 + x1 * x3, x3)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 0] = x1
        J[..., 0, 1] = x3
        J[..., 0, 2] = x2
        J[..., 1, 0] = x3
        J[..., 1, 1] = x2
        J[..., 1, 2] = x1
        J[..., 2, 2] = 1.0
        return J

    def second(self, x):
        D = np.zeros((3, 3, 3))
        D[0, 0, 0] = 1.0
        D[0, 1, 2] = D[0, 2, 1] = 1.0
        D[1, 1, 1] = 1.0
        D[1, 0, 2] = D[1, 2, 0] = 1.0
        return D


class PerturbedMap(CanonicalMap):
    """e composed with the near-identity map x -> x + amplitude * w(x)"""

    def __init__(self, base: CanonicalMap, amplitude: float = 1e-3,
                 warp: Optional[Callable] = None, warp_jacobian: Optional[Callable] = None):
        self.base = base
        self.name = base.name
        self.dim = base.dim
        self.amplitude = amplitude
        if warp is None:
            n = base.dim
            rng = np.random.default_rng(7)
            Q = rng.standard_normal((n, n, n))
            Q = 0.5 * (Q + Q.transpose(0, 2, 1))
            L = rng.standard_normal((n, n))
            warp = lambda x: np.einsum('ij,...j->...i', L, x) + np.einsum('ijk,...j,...k->...i', Q, x, x)
            warp_jacobian = lambda x: L + 2 * np.einsum('ijk,...k->...ij', Q, x)
            self._warp_second = 2 * Q
        else:
            self._warp_second = None
        self.warp = warp
        self.warp_jacobian = warp_jacobian

    def _inner(self, x):
        return x + self.amplitude * self.warp(x)

    def _inner_jacobian(self, x):
        return np.eye(self.dim) + self.amplitude * self.warp_jacobian(x)

    def evaluate(self, x):
        return self.base.evaluate(self._inner(x))

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return self.base.jacobian(self._inner(x)) @ self._inner_jacobian(x)

    def second(self, x):
        x = np.asarray(x, dtype=float)
        if self._warp_second is None:
            h = 1e-6
            out = np.empty((self.dim,) * 3)
            for k in range(self.dim):
                e = np.zeros(self.dim)
                e[k] = h
                out[:, :, k] = (self.jacobian(x + e) - self.jacobian(x - e)) / (2 * h)
            return out
        y = self._inner(x)
        Wj = self._inner_jacobian(x)
        out = np.einsum("iab,aj,bk->ijk", self.base.second(y), Wj, Wj)
        return out + self.amplitude * np.einsum("ia,ajk->ijk", self.base.jacobian(y), self._warp_second)


MAP_REGISTRY: Dict[str, Type[CanonicalMap]] = {
    'A2': FoldMap,
    'A3': CuspMap,
    'A4': SwallowtailMap,
    'D4_plus': HyperbolicUmbilicMap,
    'D4_minus': EllipticUmbilicMap,
}


def canonical_form_maps(cls: str) -> CanonicalMap:
    """Model exponential map for a singularity class"""
    if cls not in MAP_REGISTRY:
        raise ConfigError(f"unknown canonical class '{cls}'; available: {sorted(MAP_REGISTRY)}")
    return MAP_REGISTRY[cls]()


def complement_basis(r: np.ndarray) -> np.ndarray:
    """Orthonormal basis B of r-perp with det[r_hat, B] = +1"""
    r = r / np.linalg.norm(r)
    n = len(r)
    q, _ = np.linalg.qr(np.column_stack([r, np.eye(n)]))
    B = q[:, 1:n].copy()
    if np.linalg.det(np.column_stack([r, B])) < 0:
        B[:, -1] = -B[:, -1]
    return B


class ModelRay(RayPath):
    """t -> e(base(z) + (t - t_offset) r) with dF = De [r, B]"""

    def __init__(self, family: 'ModelRayFamily', z, t_max: float):
        super().__init__(z, t_max, False)
        self.family = family

    def points(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return self.family.v_to_x(ts[:, None], self.z[None, :])

    def positions(self, ts):
        return self.family.map.evaluate(self.points(ts))

    def velocities(self, ts):
        return self.family.map.jacobian(self.points(ts)) @ self.family.r

    def column_stack(self, ts):
        return self.family.map.jacobian(self.points(ts)) @ self.family.frame

    def frame_jacobians(self, ts):
        return self.column_stack(ts)


class ModelRayFamily(RayFamily):
    """Rays along a constant radial vector r through the domain of a canonical map.

    V coordinates (t, z) correspond to x = z B + (t - t_offset) r, so the
    origin of the model sits at t = t_offset, z = 0.
    """

    def __init__(self, model: CanonicalMap, radial, t_offset: float = 1.0):
        super().__init__(None)
        self.map = model
        r = np.asarray(radial, dtype=float)
        if len(r) != model.dim or not np.any(r):
            raise ConfigError("radial vector must be nonzero with the dimension of the map")
        self.r = r / np.linalg.norm(r)
        self.B = complement_basis(self.r)
        self.frame = np.column_stack([self.r, self.B])
        self.t_offset = t_offset
        self.z_dim = model.dim - 1

    def v_to_x(self, t, z) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        return z @ self.B.T + (t - self.t_offset) * self.r

    def x_to_v(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        coords = np.linalg.solve(self.frame, x.T).T
        return np.concatenate([coords[..., :1] + self.t_offset, coords[..., 1:]], axis=-1)

    def initial(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        x0 = self.v_to_x(0.0, z)
        J = self.map.jacobian(x0)
        return self.map.evaluate(x0), J @ self.r, J @ self.B, np.zeros_like(J @ self.B)

    def trace(self, z, t_max: float) -> ModelRay:
        return ModelRay(self, z, t_max)

    def exponential(self, t: float, z) -> np.ndarray:
        return self.map.evaluate(self.v_to_x(t, np.atleast_1d(z)))

    def adapted_radial(self, event=None) -> Optional[np.ndarray]:
        """Radial vector in the model coordinates; None once the map is perturbed"""
        if isinstance(self.map, PerturbedMap):
            return None
        return self.r.copy()

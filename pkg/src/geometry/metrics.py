"""
Metric fields: Finsler norms, their duality and the geodesic spray
"""

from abc import ABC, abstractmethod
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import minimize, root

from ..errors import DualityError


def _fd_step(v: np.ndarray) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(v)))


def sphere_directions(dim: int, count: Optional[int] = None) -> np.ndarray:
    """Evenly spread unit directions: 72 on the circle, 266 on the 2-sphere."""
    if dim == 2:
        count = count or 72
        angles = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    count = count or 266
    # Fibonacci lattice
    k = np.arange(count) + 0.5
    polar = np.arccos(1 - 2 * k / count)
    azimuth = np.pi * (1 + 5 ** 0.5) * k
    return np.stack([np.cos(azimuth) * np.sin(polar),
                     np.sin(azimuth) * np.sin(polar),
                     np.cos(polar)], axis=1)


class MetricField(ABC):
    """A smooth field of strictly convex norms phi_p on tangent spaces"""

    kind = 'finsler'
    flat = False

    @abstractmethod
    def norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """phi_x(v), vectorized over the leading axes of v"""

    def gradient_in_v(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Covector d(phi)/dv by central differences"""
        v = np.asarray(v, dtype=float)
        h = _fd_step(v)
        grad = np.empty_like(v)
        for j in range(v.shape[-1]):
            e = np.zeros_like(v)
            e[j] = h
            grad[j] = (self.norm(x, v + e) - self.norm(x, v - e)) / (2 * h)
        return grad

    def dual(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """The unique one-form w with w(v) = phi(v)^2 annihilating the orthogonal hyperplane"""
        v = np.asarray(v, dtype=float)
        phi = float(self.norm(x, v))
        if phi == 0.0:
            raise DualityError("duality is undefined for the zero vector")
        return phi * self.gradient_in_v(x, v)

    def lagrangian_gradients(self, x: np.ndarray, v: np.ndarray):
        """Return (L_x, L_vv, L_vx) of L = phi^2/2 by finite differences"""
        n = len(x)
        h = _fd_step(x)
        L = lambda xx, vv: 0.5 * float(self.norm(xx, vv)) ** 2
        L_x = np.empty(n)
        L_vx = np.empty((n, n))
        L_vv = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            L_x[j] = (L(x + e, v) - L(x - e, v)) / (2 * h)
            L_vx[:, j] = (self.dual(x + e, v) - self.dual(x - e, v)) / (2 * h)
            hv = _fd_step(v)
            ev = np.zeros(n)
            ev[j] = hv
            L_vv[:, j] = (self.dual(x, v + ev) - self.dual(x, v - ev)) / (2 * hv)
        return L_x, 0.5 * (L_vv + L_vv.T), L_vx

    def spray(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Geodesic acceleration from the Euler-Lagrange equations of phi^2/2"""
        if self.flat:
            return np.zeros_like(v)
        L_x, L_vv, L_vx = self.lagrangian_gradients(x, v)
        return np.linalg.solve(L_vv, L_x - L_vx @ v)

    def spray_jacobian(self, x: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(d spray/dx, d spray/dv) by central differences"""
        n = len(x)
        if self.flat:
            return np.zeros((n, n)), np.zeros((n, n))
        A_x = np.empty((n, n))
        A_v = np.empty((n, n))
        hx, hv = _fd_step(x), _fd_step(v)
        for j in range(n):
            e = np.zeros(n)
            e[j] = hx
            A_x[:, j] = (self.spray(x + e, v) - self.spray(x - e, v)) / (2 * hx)
            e[j] = hv
            A_v[:, j] = (self.spray(x, v + e) - self.spray(x, v - e)) / (2 * hv)
        return A_x, A_v


class EuclideanMetric(MetricField):
    kind = 'riemannian'
    flat = True

    def norm(self, x, v):
        return np.linalg.norm(v, axis=-1)

    def gradient_in_v(self, x, v):
        v = np.asarray(v, dtype=float)
        return v / np.linalg.norm(v)

    def dual(self, x, v):
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            raise DualityError("duality is undefined for the zero vector")
        return v.copy()


class RandersMetric(MetricField):
    """phi(v) = sqrt(v^T A v) + <b, v> with constant coefficients (|b|_A < 1)"""

    flat = True

    def __init__(self, drift, quadratic=None):
        self.b = np.asarray(drift, dtype=float)
        n = len(self.b)
        self.A = np.eye(n) if quadratic is None else np.asarray(quadratic, dtype=float)
        if self.b @ np.linalg.solve(self.A, self.b) >= 1.0:
            raise ValueError("Randers drift must satisfy |b| < 1 in the dual norm of A")
        self.kind = 'riemannian' if not np.any(self.b) else 'finsler'

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        quad = np.sqrt(np.einsum('...i,ij,...j->...', v, self.A, v))
        return quad + v @ self.b

    def gradient_in_v(self, x, v):
        v = np.asarray(v, dtype=float)
        Av = self.A @ v
        return Av / np.sqrt(v @ Av) + self.b


class RiemannianMetric(MetricField):
    """phi(v) = sqrt(v^T g(x) v) with Christoffel symbols from finite differences of g"""

    kind = 'riemannian'

    def __init__(self, tensor: Callable[[np.ndarray], np.ndarray],
                 tensor_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        self.tensor = tensor
        self._tensor_derivative = tensor_derivative

    def tensor_derivative(self, x):
        """Array D with D[k] = dg/dx_k"""
        if self._tensor_derivative is not None:
            return self._tensor_derivative(x)
        h = _fd_step(x)
        n = len(x)
        out = np.empty((n, n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            out[k] = (self.tensor(x + e) - self.tensor(x - e)) / (2 * h)
        return out

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        g = self.tensor(np.asarray(x, dtype=float))
        return np.sqrt(np.einsum('...i,ij,...j->...', v, g, v))

    def gradient_in_v(self, x, v):
        v = np.asarray(v, dtype=float)
        gv = self.tensor(np.asarray(x, dtype=float)) @ v
        return gv / np.sqrt(v @ gv)

    def spray(self, x, v):
        g = self.tensor(x)
        dg = self.tensor_derivative(x)
        first = np.einsum('i,ijk,j->k', v, dg, v)
        second = 0.5 * np.einsum('i,kij,j->k', v, dg, v)
        return -np.linalg.solve(g, first - second)


class EmbeddedMetric(MetricField):
    """Induced metric on a quadric level set f(x) = sum(x_i^2 / a_i^2) = 1 in R^3"""

    kind = 'riemannian'

    def __init__(self, semiaxes):
        self.semiaxes = np.asarray(semiaxes, dtype=float)
        self.h = 2.0 / self.semiaxes ** 2

    def norm(self, x, v):
        return np.linalg.norm(v, axis=-1)

    def gradient_in_v(self, x, v):
        v = np.asarray(v, dtype=float)
        return v / np.linalg.norm(v)

    def dual(self, x, v):
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            raise DualityError("duality is undefined for the zero vector")
        return v.copy()

    def spray(self, x, v):
        g = self.h * x
        return -((self.h * v) @ v / (g @ g)) * g

    def spray_jacobian(self, x, v):
        g = self.h * x
        n2 = g @ g
        s = (self.h * v) @ v
        A_v = -np.outer(g, 2 * self.h * v) / n2
        A_x = -s * (np.diag(self.h) / n2 - 2 * np.outer(g, self.h * g) / n2 ** 2)
        return A_x, A_v


def inverse_dual(metric: MetricField, x: np.ndarray, w: np.ndarray,
                 basis: Optional[np.ndarray] = None) -> np.ndarray:
    """Maximize w over the indicatrix; returns the unit vector attaining the maximum.

    basis: orthonormal tangent basis (ambient x dim) for embedded manifolds.
    """
    w = np.asarray(w, dtype=float)
    E = np.eye(len(w)) if basis is None else basis
    dim = E.shape[1]

    def unit(params):
        if dim == 2:
            d = np.array([np.cos(params[0]), np.sin(params[0])])
        else:
            a, b = params
            d = np.array([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)])
        u = E @ d
        return u / metric.norm(x, u)

    candidates = sphere_directions(dim)
    values = []
    for d in candidates:
        u = E @ d
        values.append(w @ u / metric.norm(x, u))
    best = candidates[int(np.argmax(values))]
    if dim == 2:
        start = [np.arctan2(best[1], best[0])]
    else:
        start = [np.arccos(np.clip(best[2], -1, 1)), np.arctan2(best[1], best[0])]
    res = minimize(lambda p: -(w @ unit(p)), start, method='Nelder-Mead',
                   options={'xatol': 1e-12, 'fatol': 1e-15, 'maxiter': 2000})
    return unit(res.x)


def covector_to_vector(metric: MetricField, x: np.ndarray, w: np.ndarray,
                       basis: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Inverse of MetricField.dual: the vector v with dual(x, v) = w

    Args:
        metric: Metric field
        x: Base point
        w: Nonzero covector (ambient components for embedded manifolds)
        basis: Orthonormal tangent basis (ambient x dim) for embedded manifolds

    Returns:
        v = w(u) u for the indicatrix maximiser u, polished by a root solve on dual(v) = w

    Raises:
        DualityError: For the zero covector
    """
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        raise DualityError("duality is undefined for the zero covector")
    E = np.eye(len(w)) if basis is None else basis
    u = inverse_dual(metric, x, w, basis)
    c0 = E.T @ (float(w @ u) * u)
    sol = root(lambda c: E.T @ (metric.dual(x, E @ c) - w), c0, method='hybr', options={'xtol': 1e-14})
    c = sol.x if sol.success else c0
    return E @ c


def check_homogeneity(metric: MetricField, x, v, factors=(0.5, 2.0, 7.0)) -> float:
    """Largest relative error of phi(lambda v) = lambda phi(v)"""
    base = float(metric.norm(x, v))
    return max(abs(float(metric.norm(x, lam * np.asarray(v))) - lam * base) / (lam * base)
               for lam in factors)


def check_convexity(metric: MetricField, x, basis: Optional[np.ndarray] = None) -> float:
    """Largest phi(midpoint) - 1 over chords of the sampled indicatrix.

    Negative values mean the sampled unit ball is strictly convex.
    """
    x = np.asarray(x, dtype=float)
    E = np.eye(len(x)) if basis is None else basis
    dirs = sphere_directions(E.shape[1]) @ E.T
    units = dirs / metric.norm(x, dirs)[:, None]
    if E.shape[1] == 2:
        pairs = [(i, (i + j) % len(units)) for i in range(len(units)) for j in (1, 9, 36)]
    else:
        rng = np.random.default_rng(0)
        pairs = [tuple(rng.choice(len(units), 2, replace=False)) for _ in range(1000)]
    worst = -np.inf
    for i, j in pairs:
        mid = 0.5 * (units[i] + units[j])
        worst = max(worst, float(metric.norm(x, mid)) - 1.0)
    return worst

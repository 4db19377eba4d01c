"""
Geodesic flow, exponential maps and Jacobi propagation along rays
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .config import Config
from .errors import CompatibilityError, DomainError, IntegrationError
from .geometry.manifolds import BoundaryComponent, ChartedManifold
from .utils.worker_pool import WorkerPool

logger = logging.getLogger(__name__)

ATOL_RATIO = 1e-2


@dataclass
class PhaseState:
    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0


@dataclass
class JacobiBundle:
    """Columns of dF along a ray; the first column is dF(r), the geodesic velocity"""
    base: PhaseState
    columns: np.ndarray
    derivative_columns: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    states: List[PhaseState]
    exited: bool
    exit_time: Optional[float]
    energy_drift: float


def _as_z(z) -> np.ndarray:
    return np.atleast_1d(np.asarray(z, dtype=float))


class RayPath(ABC):
    """A ray t -> F(t, z) with the frame of dF along it.

    Subclasses provide vectorized states; det, singular values and bundles
    are derived here.
    """

    def __init__(self, z, t_end: float, exited: bool = False):
        self.z = _as_z(z)
        self.t_end = float(t_end)
        self.exited = exited

    @property
    def exit_time(self) -> Optional[float]:
        return self.t_end if self.exited else None

    @property
    def step_times(self) -> np.ndarray:
        """Times of the underlying integrator steps (sets the scan resolution)"""
        return np.linspace(0.0, self.t_end, 51)

    @abstractmethod
    def positions(self, ts: np.ndarray) -> np.ndarray:
        """F(t, z) for an array of times, shape (len(ts), ambient)"""

    @abstractmethod
    def velocities(self, ts: np.ndarray) -> np.ndarray:
        """dF(r) for an array of times"""

    @abstractmethod
    def column_stack(self, ts: np.ndarray) -> np.ndarray:
        """Columns [dF(r), dF(dz_1), ...], shape (len(ts), ambient, 1 + z_dim)"""

    @abstractmethod
    def frame_jacobians(self, ts: np.ndarray) -> np.ndarray:
        """Square matrices of dF in an orthonormal tangent frame, shape (len(ts), dim, dim)"""

    def position(self, t: float) -> np.ndarray:
        return self.positions(np.array([t]))[0]

    def velocity(self, t: float) -> np.ndarray:
        return self.velocities(np.array([t]))[0]

    def columns(self, t: float) -> np.ndarray:
        return self.column_stack(np.array([t]))[0]

    def frame_jacobian(self, t: float) -> np.ndarray:
        return self.frame_jacobians(np.array([t]))[0]

    def dets(self, ts) -> np.ndarray:
        return np.linalg.det(self.frame_jacobians(np.asarray(ts, dtype=float)))

    def det(self, t: float) -> float:
        return float(self.dets(np.array([t]))[0])

    def singular_values(self, ts) -> np.ndarray:
        return np.linalg.svd(self.frame_jacobians(np.asarray(ts, dtype=float)), compute_uv=False)

    def normalized_dets(self, ts) -> np.ndarray:
        """det dF / sigma_max^dim, scale-free"""
        M = self.frame_jacobians(np.asarray(ts, dtype=float))
        smax = np.linalg.svd(M, compute_uv=False)[:, 0]
        return np.linalg.det(M) / np.maximum(smax, 1e-300) ** M.shape[-1]

    def bundle(self, t: float) -> JacobiBundle:
        return JacobiBundle(PhaseState(self.position(t), self.velocity(t), t), self.columns(t))


class RaySolution(RayPath):
    """A traced geodesic with dense output for position, velocity and Jacobi fields"""

    def __init__(self, manifold: ChartedManifold, z, sol, t_end: float, exited: bool,
                 step_times: np.ndarray):
        super().__init__(z, t_end, exited)
        self.manifold = manifold
        self.sol = sol
        self.n = manifold.ambient_dim
        self._steps = np.asarray(step_times)

    @property
    def step_times(self) -> np.ndarray:
        return self._steps

    def _states(self, ts):
        ts = np.clip(np.atleast_1d(np.asarray(ts, dtype=float)), 0.0, self.t_end)
        return self.sol(ts).T

    def positions(self, ts):
        return self._states(ts)[:, :self.n]

    def velocities(self, ts):
        return self._states(ts)[:, self.n:2 * self.n]

    def column_stack(self, ts):
        Y = self._states(ts)
        n = self.n
        k = (Y.shape[1] - 2 * n) // (2 * n)
        J = Y[:, 2 * n:2 * n + n * k].reshape(len(Y), n, k)
        return np.concatenate([Y[:, n:2 * n, None], J], axis=2)

    def derivative_columns(self, t: float) -> np.ndarray:
        y = self._states([t])[0]
        n = self.n
        k = (len(y) - 2 * n) // (2 * n)
        return y[2 * n + n * k:].reshape(n, k)

    def frame_jacobians(self, ts):
        Y = self._states(ts)
        n = self.n
        C = self.column_stack(ts)
        E = self.manifold.frame_along(Y[:, :n], Y[:, n:2 * n])
        return np.einsum('...ai,...aj->...ij', E, C)

    def bundle(self, t: float) -> JacobiBundle:
        return JacobiBundle(PhaseState(self.position(t), self.velocity(t), t), self.columns(t),
                            self.derivative_columns(t))


def _geodesic_rhs(manifold: ChartedManifold, k: int) -> Callable:
    metric = manifold.metric
    n = manifold.ambient_dim

    def rhs(t, y):
        x = y[:n]
        v = y[n:2 * n]
        out = np.empty_like(y)
        out[:n] = v
        out[n:2 * n] = metric.spray(x, v)
        if k:
            J = y[2 * n:2 * n + n * k].reshape(n, k)
            Jd = y[2 * n + n * k:].reshape(n, k)
            A_x, A_v = metric.spray_jacobian(x, v)
            out[2 * n:2 * n + n * k] = Jd.ravel()
            out[2 * n + n * k:] = (A_x @ J + A_v @ Jd).ravel()
        return out

    return rhs


def _exit_event(manifold: ChartedManifold):
    n = manifold.ambient_dim

    def event(t, y):
        return float(manifold.boundary_distance(y[:n]))

    event.terminal = True
    event.direction = -1
    return event


def flow(manifold: ChartedManifold, x0, v0, t_max: float, dx0=None, dv0=None,
         tol: Optional[float] = None, z=0.0) -> RaySolution:
    """
    Integrate the geodesic and its variational equations

    Args:
        manifold: Manifold carrying the metric
        x0, v0: Initial phase point
        t_max: Final time
        dx0, dv0: Initial Jacobi data (ambient x k), or None for a bare geodesic
        tol: Relative tolerance (Config.TOL when None)
        z: Ray coordinate stored on the result

    Returns:
        RaySolution with dense output on [0, t_end]
    """
    tol = tol or Config.TOL
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = manifold.ambient_dim
    k = 0 if dx0 is None else np.asarray(dx0).reshape(n, -1).shape[1]
    y0 = [x0, v0]
    if k:
        y0 += [np.asarray(dx0, dtype=float).reshape(n, k).ravel(),
               np.asarray(dv0, dtype=float).reshape(n, k).ravel()]
    y0 = np.concatenate(y0)

    events = None
    if manifold.boundary_components:
        events = [_exit_event(manifold)]

    sol = solve_ivp(_geodesic_rhs(manifold, k), (0.0, t_max), y0, method='DOP853',
                    rtol=tol, atol=tol * ATOL_RATIO, dense_output=True, events=events)
    if sol.status == -1:
        raise IntegrationError(f"geodesic integration failed: {sol.message}",
                               last_state=PhaseState(sol.y[:n, -1], sol.y[n:2 * n, -1], float(sol.t[-1])))
    exited = sol.status == 1
    t_end = float(sol.t[-1])
    if exited:
        logger.debug("Ray z=%s left the domain at t=%.6g", z, t_end)
    return RaySolution(manifold, z, sol.sol, t_end, exited, sol.t)


def integrate_geodesic(manifold: ChartedManifold, start: PhaseState, t_end: float,
                       tol: Optional[float] = None, samples: int = 101) -> Trajectory:
    """Sampled geodesic from start; stops early with the exit flag when the domain is left"""
    tol = tol or Config.TOL
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    x0 = manifold.check_point(start.position)
    v0 = np.asarray(start.velocity, dtype=float)
    ray = flow(manifold, x0, v0, t_end, tol=tol)
    ts = np.linspace(0.0, ray.t_end, samples)
    X = ray.positions(ts)
    V = ray.velocities(ts)
    speed0 = float(manifold.metric.norm(x0, v0))
    speeds = np.array([float(manifold.metric.norm(x, v)) for x, v in zip(X, V)])
    states = [PhaseState(x, v, start.time + t) for x, v, t in zip(X, V, ts)]
    return Trajectory(states, ray.exited, ray.exit_time, float(np.max(np.abs(speeds - speed0))))


class RayFamily(ABC):
    """A family of unit-speed geodesics parametrized by z (the ray coordinate)"""

    z_dim = 1

    def __init__(self, manifold: ChartedManifold, tol: Optional[float] = None):
        self.manifold = manifold
        self.tol = tol or Config.TOL

    @property
    def z_period(self) -> Optional[float]:
        return None

    @abstractmethod
    def initial(self, z) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(x0, v0, dx0/dz, dv0/dz) with derivatives of shape (ambient, z_dim)"""

    def trace(self, z, t_max: float) -> RayPath:
        x0, v0, dx0, dv0 = self.initial(z)
        return flow(self.manifold, x0, v0, t_max, dx0, dv0, tol=self.tol, z=z)

    def exponential(self, t: float, z) -> np.ndarray:
        """F(t, z)"""
        return self.trace(z, t).position(t)

    def initial_value(self, z) -> float:
        """Boundary value g(z) carried by the ray (0 for point sources)"""
        return 0.0


class BoundaryRayFamily(RayFamily):
    """Characteristics leaving a boundary component with initial speed Gamma(s)"""

    def __init__(self, manifold: ChartedManifold, component: BoundaryComponent,
                 g: Optional[Callable] = None, g_derivative: Optional[Callable] = None,
                 tol: Optional[float] = None):
        super().__init__(manifold, tol)
        self.component = component
        self.g = g or (lambda s: 0.0 * np.asarray(s, dtype=float))
        self.g_derivative = g_derivative

    @property
    def z_period(self):
        return self.component.period

    def initial_value(self, z) -> float:
        return float(self.g(float(_as_z(z)[0])))

    def dg(self, s: float) -> float:
        if self.g_derivative is not None:
            return float(self.g_derivative(s))
        h = 1e-6 * (1.0 + abs(s))
        return float((self.g(s + h) - self.g(s - h)) / (2 * h))

    def _plane(self, s: float):
        """Boundary point, unit tangent and inward unit normal in the tangent plane"""
        x = self.component.point(s)
        c = self.component.tangent(s)
        E = self.manifold.tangent_basis(x)
        c = E @ (E.T @ c)
        tau = c / np.linalg.norm(c)
        hint = E @ (E.T @ self.component.inward(s))
        nu = hint - (hint @ tau) * tau
        return x, c, tau, nu / np.linalg.norm(nu)

    def characteristic(self, s: float) -> np.ndarray:
        """Gamma(s): the unit inward X whose dual restricts to dg on the boundary"""
        metric = self.manifold.metric
        x, c, tau, nu = self._plane(s)
        target = self.dg(s)

        def unit(alpha):
            X = np.cos(alpha) * tau + np.sin(alpha) * nu
            return X / float(metric.norm(x, X))

        def residual(alpha):
            return float(metric.dual(x, unit(alpha)) @ c) - target

        lo, hi = 1e-9, np.pi - 1e-9
        r_lo, r_hi = residual(lo), residual(hi)
        if r_lo * r_hi > 0:
            raise CompatibilityError(
                f"|dg| = {abs(target):.6g} admits no inward unit characteristic at s={s:.6g}",
                margin=abs(target))
        alpha = brentq(residual, lo, hi, xtol=1e-14, rtol=1e-14)
        return unit(alpha)

    def characteristic_field(self) -> Callable[[float], np.ndarray]:
        return self.characteristic

    def initial(self, z):
        s = float(_as_z(z)[0])
        x0 = self.component.point(s)
        v0 = self.characteristic(s)
        h = 1e-5
        dx0 = self.component.tangent(s)
        dv0 = (self.characteristic(s + h) - self.characteristic(s - h)) / (2 * h)
        return x0, v0, dx0.reshape(-1, 1), dv0.reshape(-1, 1)


class PointRayFamily(RayFamily):
    """Geodesics leaving p with unit initial speed at angle theta"""

    def __init__(self, manifold: ChartedManifold, p, tol: Optional[float] = None):
        super().__init__(manifold, tol)
        self.p = manifold.check_point(p)

    @property
    def z_period(self):
        return 2 * np.pi

    def initial(self, z):
        theta = float(_as_z(z)[0])
        u = self.manifold.unit_direction(self.p, theta)
        h = 1e-5
        du = (self.manifold.unit_direction(self.p, theta + h)
              - self.manifold.unit_direction(self.p, theta - h)) / (2 * h)
        return self.p.copy(), u, np.zeros((len(u), 1)), du.reshape(-1, 1)


def characteristic_field(manifold: ChartedManifold, component: BoundaryComponent,
                         g: Optional[Callable] = None) -> Callable[[float], np.ndarray]:
    """s -> Gamma(s) for boundary data g on a component"""
    return BoundaryRayFamily(manifold, component, g).characteristic


def exponential_from_boundary(family: BoundaryRayFamily, t: float, z) -> np.ndarray:
    return family.exponential(t, z)


def flow_with_jacobi(family: RayFamily, t: float, z) -> JacobiBundle:
    return family.trace(z, t).bundle(t)


def exponential_from_point(manifold: ChartedManifold, p, v, tol: Optional[float] = None) -> np.ndarray:
    """exp_p(v) = gamma(1) for the geodesic with initial speed v"""
    p = manifold.check_point(p)
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return p.copy()
    ray = flow(manifold, p, v, 1.0, tol=tol)
    return ray.position(ray.t_end)


def point_source_component(manifold: ChartedManifold, p, epsilon: float,
                           tol: Optional[float] = None) -> BoundaryComponent:
    """The geodesic epsilon-sphere around p as a boundary component (M lies outside it)"""
    p = manifold.check_point(p)

    def direction(s):
        return manifold.unit_direction(p, float(s))

    def curve(s):
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s)
        if manifold.metric.flat:
            pts = np.array([p + epsilon * direction(si) for si in flat])
        else:
            pts = np.array([flow(manifold, p, direction(si), epsilon, tol=tol).position(epsilon)
                            for si in flat])
        return pts.reshape(s.shape + (manifold.ambient_dim,))

    def hint(s):
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s)
        if manifold.metric.flat:
            vs = np.array([direction(si) for si in flat])
        else:
            vs = np.array([flow(manifold, p, direction(si), epsilon, tol=tol).velocity(epsilon)
                           for si in flat])
        return vs.reshape(s.shape + (manifold.ambient_dim,))

    return BoundaryComponent(0, curve, 2 * np.pi, None, hint)


def sweep_rays(family: RayFamily, zs: Sequence, t_max: float,
               threads: Optional[int] = None) -> List[RayPath]:
    """Trace every z in parallel; results keep the order of zs"""
    pool = WorkerPool(threads=threads)
    return pool.map(list(zs), lambda z: family.trace(z, t_max), task_kind='ray', label='rays')


def gauss_pairing(manifold: ChartedManifold, ray: RayPath, t: float) -> np.ndarray:
    """<dual(dF(r)), dF(w)> for the transversal columns w at time t"""
    x = ray.position(t)
    cols = ray.columns(t)
    w = manifold.metric.dual(x, cols[:, 0])
    return w @ cols[:, 1:]


def trajectory_rows(ray: RayPath, samples: int = 201):
    """(header, rows) with columns t, x1..xn, v1..vn, det_dF"""
    ts = np.linspace(0.0, ray.t_end, samples)
    X = ray.positions(ts)
    V = ray.velocities(ts)
    D = ray.dets(ts)
    n = X.shape[1]
    header = ['t'] + [f'x{i + 1}' for i in range(n)] + [f'v{i + 1}' for i in range(n)] + ['det_dF']
    rows = [[t, *x, *v, d] for t, x, v, d in zip(ts, X, V, D)]
    return header, rows

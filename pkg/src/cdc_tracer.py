"""
Conjugate descending curves, retorts, A3 joins and D4 root analysis
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from .canonical_maps import EllipticUmbilicMap, ModelRayFamily, complement_basis
from .conjugate_analysis import ConjugateEvent, classify_singularity, events_on_ray
from .config import Config
from .errors import DegenerateDistributionError, DomainError, RetortError
from .geodesic_flow import RayFamily

logger = logging.getLogger(__name__)

SLACK_THRESHOLD = 1e-3
SLACK_REF = 0.5
NEWTON_TOL = 1e-12
LIFT_RESIDUAL = 1e-8
STOP_REASONS = ('A3', 'domain_exit', 'max_length', 'UNCLASSIFIED')


# Charts ---------------------------------------------------------------------


class ModelChart:
    """A canonical map in its own coordinates x, with radial field r"""

    def __init__(self, family: ModelRayFamily):
        self.family = family
        self.map = family.map
        self.radial = family.r
        self.dim = family.map.dim

    def evaluate(self, x):
        return self.map.evaluate(np.asarray(x, dtype=float))

    def columns(self, x):
        return self.map.jacobian(np.asarray(x, dtype=float))

    def square(self, x):
        return self.columns(x)

    def det(self, x) -> float:
        return float(self.map.det(x))

    def det_gradient(self, x):
        return self.map.det_gradient(np.asarray(x, dtype=float))

    def radius(self, x) -> float:
        return float(self.family.x_to_v(np.asarray(x, dtype=float))[0])

    def to_ray(self, x):
        return self.family.x_to_v(np.asarray(x, dtype=float))

    def admissible(self, x) -> bool:
        return True


class RayChart:
    """V coordinates (t, z) of a geodesic ray family; dF and det come from the Jacobi fields"""

    def __init__(self, family: RayFamily, fd_step: float = 1e-6):
        self.family = family
        self.dim = 1 + family.z_dim
        self.radial = np.eye(self.dim)[0]
        self.fd_step = fd_step

    def _ray(self, v):
        v = np.asarray(v, dtype=float)
        return self.family.trace(v[1:], max(v[0], 1e-9)), v[0]

    def evaluate(self, v):
        ray, t = self._ray(v)
        return ray.position(t)

    def columns(self, v):
        ray, t = self._ray(v)
        return ray.columns(t)

    def square(self, v):
        ray, t = self._ray(v)
        return ray.frame_jacobian(t)

    def det(self, v) -> float:
        return float(np.linalg.det(self.square(v)))

    def det_gradient(self, v):
        v = np.asarray(v, dtype=float)
        h = self.fd_step
        out = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            out[i] = (self.det(v + e) - self.det(v - e)) / (2 * h)
        return out

    def radius(self, v) -> float:
        return float(v[0])

    def to_ray(self, v):
        return np.asarray(v, dtype=float)

    def admissible(self, v) -> bool:
        return v[0] > 1e-6


def chart_for(family) -> 'ModelChart | RayChart':
    return ModelChart(family) if isinstance(family, ModelRayFamily) else RayChart(family)


# Distribution ---------------------------------------------------------------


def _kernel_vector(chart, x) -> np.ndarray:
    _, _, vt = np.linalg.svd(chart.square(x))
    return vt[-1]


def _normalized_det(chart, x) -> float:
    M = chart.square(x)
    s = np.linalg.svd(M, compute_uv=False)
    return float(np.linalg.det(M) / max(s[0], 1e-300) ** len(s))


def _raw_distribution(chart, x):
    """(D, kernel, grad det) with D = (grad.k) r - (grad.r) k"""
    g = chart.det_gradient(x)
    k = _kernel_vector(chart, x)
    r = chart.radial
    return (g @ k) * r - (g @ r) * k, k, g


def slack(chart, x) -> float:
    """Sine of the angle between D and ker dF; zero at A3 points"""
    D, k, _ = _raw_distribution(chart, x)
    n = np.linalg.norm(D)
    if n == 0:
        return 0.0
    c = float(abs(D @ k) / n)
    return float(np.sqrt(max(0.0, 1.0 - c * c)))


def radius_form(chart, x, w) -> float:
    """omega(w) = <De w, De r> / |De r|"""
    C = chart.columns(x)
    a = C @ np.asarray(w, dtype=float)
    b = C @ chart.radial
    return float(a @ b / np.linalg.norm(b))


def _project_to_conjugate(chart, x, iterations: int = 40):
    x = np.asarray(x, dtype=float).copy()
    for _ in range(iterations):
        d = chart.det(x)
        g = chart.det_gradient(x)
        gg = float(g @ g)
        if gg == 0:
            break
        x = x - d * g / gg
        if abs(d) < NEWTON_TOL:
            break
    return x


def conjugate_distribution(chart, x, slack_threshold: float = SLACK_THRESHOLD) -> np.ndarray:
    """
    Unit direction of D = (ker dF + <r>) cap T C at an order-1 conjugate point

    Args:
        chart: ModelChart or RayChart
        x: Conjugate point in chart coordinates
        slack_threshold: Smallest slack accepted (A2 points)

    Returns:
        Unit vector d with <d, r> < 0

    Raises:
        DegenerateDistributionError: If x is not conjugate or is too close to an A3 point
    """
    x = np.asarray(x, dtype=float)
    if not chart.admissible(x) or abs(_normalized_det(chart, x)) > 1e-6:
        raise DegenerateDistributionError(f"{x} is not a conjugate point")
    A = slack(chart, x)
    if A < slack_threshold:
        raise DegenerateDistributionError(f"slack {A:.3g} below threshold {slack_threshold:.3g} near an A3 point")
    D, _, _ = _raw_distribution(chart, x)
    d = D / np.linalg.norm(D)
    return -d if d @ chart.radial > 0 else d


def _velocity(chart, x, acdc_c: Optional[float] = None):
    """gamma' along D with omega(gamma') = -1, optionally rotated by c A^3"""
    D, k, g = _raw_distribution(chart, x)
    w = radius_form(chart, x, D)
    if np.linalg.norm(D) < 1e-14 or abs(w) < 1e-14:
        return None
    v = -D / w
    if acdc_c:
        A = slack(chart, x)
        theta = acdc_c * A ** 3
        d_hat = D / np.linalg.norm(D)
        basis = [d_hat]
        if chart.dim > 2:
            basis.append(g / np.linalg.norm(g))
        u = None
        for e in np.eye(chart.dim):
            cand = e - sum((e @ b) * b for b in basis)
            if np.linalg.norm(cand) > 1e-6:
                u = cand / np.linalg.norm(cand)
                break
        rotated = np.cos(theta) * d_hat + np.sin(theta) * u
        v = -rotated / radius_form(chart, x, rotated)
    return v


# Tracing --------------------------------------------------------------------


@dataclass
class CDCurve:
    points: np.ndarray
    s: np.ndarray
    radius: np.ndarray
    slack: np.ndarray
    images: np.ndarray
    ray_coords: np.ndarray
    stop_reason: str
    acdc: bool = False

    @property
    def image_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.images, axis=0), axis=1)))

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def radius_drop(self, chart) -> float:
        """-integral of omega along the polyline (midpoint rule)"""
        total = 0.0
        for a, b in zip(self.points[:-1], self.points[1:]):
            total -= radius_form(chart, 0.5 * (a + b), b - a)
        return total

    def unbeatable_error(self, chart) -> float:
        """|radius drop - image length| per unit length"""
        return abs(self.radius_drop(chart) - self.image_length) / max(1.0, self.length)


def _snap_a3(chart, x, iterations: int = 40):
    """Newton onto det = 0, grad det . k = 0 with a consistently signed kernel"""
    x = np.asarray(x, dtype=float).copy()
    k_ref = _kernel_vector(chart, x)

    def G(y):
        k = _kernel_vector(chart, y)
        if k @ k_ref < 0:
            k = -k
        return np.array([chart.det(y), chart.det_gradient(y) @ k])

    h = 1e-7
    for _ in range(iterations):
        val = G(x)
        if np.max(np.abs(val)) < 1e-11:
            return x, True
        Jg = np.empty((2, chart.dim))
        for i in range(chart.dim):
            e = np.zeros(chart.dim)
            e[i] = h
            Jg[:, i] = (G(x + e) - G(x - e)) / (2 * h)
        step, *_ = np.linalg.lstsq(Jg, -val, rcond=None)
        x = x + step
        k_new = _kernel_vector(chart, x)
        k_ref = k_new if k_new @ k_ref >= 0 else -k_new
    return x, bool(np.max(np.abs(G(x))) < 1e-8)


def _rk4_stages(chart, x, ds, acdc_c):
    stages = []
    for frac in (0.0, 0.5, 0.5, 1.0):
        y = x if not stages else x + frac * ds * stages[-1]
        k = _velocity(chart, y, acdc_c)
        if k is None:
            return None
        stages.append(k)
    return stages


def trace_cdc(family, x_start, max_length: float = 5.0, step: float = 1e-2,
              slack_threshold: float = SLACK_THRESHOLD, acdc_c: Optional[float] = None,
              domain_radius: float = 10.0, max_steps: int = 200000) -> CDCurve:
    """
    Follow the conjugate distribution in canonical parametrization (dR/ds = -1)

    Args:
        family: ModelRayFamily or a geodesic RayFamily (V coordinates (t, z))
        x_start: Start point, projected onto the conjugate set first
        max_length: Largest s
        step: Base step in s; shrinks with the slack near A3 points
        slack_threshold: Slack at which the curve is snapped onto the A3 set
        acdc_c: Rotate the direction by acdc_c * slack^3 (ACDC); None for a CDC
        domain_radius: Model charts stop beyond this distance from the origin

    Returns:
        CDCurve with its stop reason

    Raises:
        DegenerateDistributionError: If the start is not near a conjugate point or is below threshold
    """
    chart = chart_for(family)
    x = _project_to_conjugate(chart, x_start)
    if not chart.admissible(x) or abs(_normalized_det(chart, x)) > 1e-8:
        raise DegenerateDistributionError(f"no conjugate point near {list(np.asarray(x_start, dtype=float))}")
    A = slack(chart, x)
    if A < slack_threshold:
        raise DegenerateDistributionError(f"start slack {A:.3g} below threshold")

    R0 = chart.radius(x)
    points, ss, slacks = [x.copy()], [0.0], [A]
    s = 0.0
    reason = 'max_length'
    for _ in range(max_steps):
        if A < slack_threshold:
            snapped, ok = _snap_a3(chart, x)
            if ok:
                s += abs(radius_form(chart, 0.5 * (x + snapped), snapped - x))
                points.append(snapped)
                ss.append(s)
                slacks.append(0.0)
                reason = 'A3'
            else:
                reason = 'UNCLASSIFIED'
            break
        if s >= max_length:
            reason = 'max_length'
            break
        if isinstance(chart, ModelChart) and np.linalg.norm(x) > domain_radius:
            reason = 'domain_exit'
            break
        ds = min(step * min(1.0, A / SLACK_REF) ** 2, max_length - s)
        stages = _rk4_stages(chart, x, ds, acdc_c)
        if stages is None:
            reason = 'UNCLASSIFIED'
            break
        k1, k2, k3, k4 = stages
        x_new = _project_to_conjugate(chart, x + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), 6)
        if not chart.admissible(x_new):
            reason = 'domain_exit'
            break
        x = x_new
        s += ds
        A = slack(chart, x)
        points.append(x.copy())
        ss.append(s)
        slacks.append(A)

    P = np.array(points)
    S = np.array(ss)
    images = np.array([chart.evaluate(p) for p in P])
    rays = np.array([chart.to_ray(p) for p in P])
    logger.info("CDC from %s: %d samples, s=%.6g, stop=%s", np.round(P[0], 6).tolist(), len(P), S[-1], reason)
    return CDCurve(P, S, R0 - S, np.array(slacks), images, rays, reason, bool(acdc_c))


# Preimages, retorts and joins -------------------------------------------------


def _newton_lift(chart, y, x0, iterations: int = 50):
    x = np.asarray(x0, dtype=float).copy()
    scale = max(1.0, float(np.linalg.norm(y)))
    for _ in range(iterations):
        res = chart.evaluate(x) - y
        if np.linalg.norm(res) < 1e-13 * scale:
            break
        step, *_ = np.linalg.lstsq(chart.columns(x), -res, rcond=None)
        x = x + step
        if not np.all(np.isfinite(x)):
            return None
    if np.linalg.norm(chart.evaluate(x) - y) > LIFT_RESIDUAL * scale:
        return None
    return x


def find_preimages(family, y, near, starts: Optional[int] = None, spread: float = 1.0,
                   seed: Optional[int] = None) -> List[np.ndarray]:
    """
    Multi-start Newton search for e(x) = y around a point

    Returns:
        Distinct preimages sorted by distance to near
    """
    chart = chart_for(family)
    starts = starts or Config.SHOOTING_STARTS
    rng = np.random.default_rng(Config.SEED if seed is None else seed)
    near = np.asarray(near, dtype=float)
    y = np.asarray(y, dtype=float)
    found: List[np.ndarray] = []
    seeds = [near] + [near + spread * rng.standard_normal(chart.dim) for _ in range(starts - 1)]
    for x0 in seeds:
        x = _newton_lift(chart, y, x0)
        if x is None or not chart.admissible(x):
            continue
        if all(np.linalg.norm(x - f) > 1e-7 for f in found):
            found.append(x)
    return sorted(found, key=lambda p: float(np.linalg.norm(p - near)))


@dataclass
class JoinEvent:
    point: np.ndarray
    direction: np.ndarray
    frame_direction: np.ndarray
    subtype: str
    kernel: np.ndarray

    def to_dict(self) -> dict:
        return {'point': self.point.tolist(), 'direction': self.direction.tolist(),
                'frame_direction': self.frame_direction.tolist(), 'subtype': self.subtype}


@dataclass
class Retort:
    points: np.ndarray
    images: np.ndarray
    target_images: np.ndarray
    hit_conjugate: bool = False
    from_join: bool = False

    @property
    def image_mismatch(self) -> float:
        """max |e(beta_j) - e(alpha_{m-j})|"""
        n = len(self.points)
        return float(np.max(np.linalg.norm(self.images - self.target_images[:n], axis=1)))


def _a3_subtype(family: ModelRayFamily, x) -> str:
    v = family.x_to_v(x)
    ray = family.trace(v[1:], v[0] + 1.0)
    near = [e for e in events_on_ray(ray) if abs(e.t - v[0]) < 1e-4]
    if not near:
        k = family.frame.T @ _kernel_vector(ModelChart(family), x)
        event = ConjugateEvent(v[1:], float(v[0]), 1, [k], v[0] + 1.0)
    else:
        event = near[0]
    return classify_singularity(event, family)


def a3_join(family: ModelRayFamily, alpha: CDCurve, lifts: int = 4) -> JoinEvent:
    """
    Join point and initial retort direction at the A3 end of a CDC

    The direction is the derivative, with respect to the CDC parameter, of the
    non-conjugate preimage of e(alpha), expressed in the adapted frame whose
    first axis is the kernel at the join, oriented along the arrival of alpha.

    Raises:
        DomainError: If alpha did not stop at an A3 point, or the point is not terminal (A3_II)
    """
    if alpha.stop_reason != 'A3':
        raise DomainError(f"CDC stopped with reason '{alpha.stop_reason}', not at an A3 point")
    chart = chart_for(family)
    x_star = alpha.points[-1]
    subtype = _a3_subtype(family, x_star) if isinstance(family, ModelRayFamily) else 'A3_I'
    if subtype != 'A3_I':
        raise DomainError(f"join refused: the A3 end point is {subtype}, not terminal for the conjugate flow")

    k = _kernel_vector(chart, x_star)
    arrival = x_star - alpha.points[max(0, len(alpha.points) - 4)]
    if k @ arrival < 0:
        k = -k
    frame = np.column_stack([k, complement_basis(k)])
    directions = []
    for j in range(2, 2 + lifts):
        a = alpha.points[-1 - j]
        gap = float(np.linalg.norm(a - x_star))
        candidates = [p for p in find_preimages(family, chart.evaluate(a), x_star, spread=3 * gap)
                      if np.linalg.norm(p - a) > 0.5 * gap and np.linalg.norm(p - x_star) < 10 * gap]
        if not candidates:
            continue
        b = candidates[0]
        directions.append(-(b - x_star) / np.linalg.norm(b - x_star))
    if not directions:
        raise RetortError("no non-conjugate preimage near the A3 point", last_sample=x_star)
    d = np.mean(directions, axis=0)
    d /= np.linalg.norm(d)
    logger.info("A3 join at %s, direction %s", np.round(x_star, 8).tolist(), np.round(d, 6).tolist())
    return JoinEvent(x_star, d, frame.T @ d, subtype, k)


def build_retort(family, alpha: CDCurve, start=None, join: Optional[JoinEvent] = None,
                 conjugate_tol: float = 1e-6) -> Retort:
    """
    Lift the reversed image of alpha through the non-conjugate branch

    Args:
        family: Ray family (model or geodesic)
        alpha: A traced CDC
        start: Preimage of e(alpha(end)) to start from; searched when None
        join: A3 join event; the retort then starts at the A3 point itself
        conjugate_tol: Searched starts with |normalized det| below this are treated as conjugate

    Returns:
        Retort; hit_conjugate is set when det dF vanishes or changes sign on the way

    Raises:
        RetortError: When no start exists or continuation fails
    """
    chart = chart_for(family)
    targets = alpha.images[::-1]
    reversed_alpha = alpha.points[::-1]
    lifts = []
    if join is not None:
        lifts.append(join.point.copy())
        gap = float(np.linalg.norm(reversed_alpha[1] - join.point))
        candidates = [p for p in find_preimages(family, targets[1], join.point, spread=3 * gap)
                      if np.linalg.norm(p - reversed_alpha[1]) > 0.5 * gap
                      and (p - join.point) @ join.direction < 0]
        if not candidates:
            raise RetortError("no retort branch leaves the join point", last_sample=join.point)
        lifts.append(candidates[0])
    elif start is not None:
        start = np.asarray(start, dtype=float)
        if np.linalg.norm(chart.evaluate(start) - targets[0]) > LIFT_RESIDUAL * max(1.0, np.linalg.norm(targets[0])):
            raise RetortError("start does not map to the end of the CDC", last_sample=start)
        lifts.append(start)
    else:
        end = reversed_alpha[0]
        scale = max(float(np.linalg.norm(alpha.points[0] - end)), 1e-3)
        candidates = [p for p in find_preimages(family, targets[0], end, spread=2 * scale)
                      if np.linalg.norm(p - end) > 1e-6 * max(1.0, scale)
                      and abs(_normalized_det(chart, p)) > conjugate_tol]
        if not candidates:
            raise RetortError("e(alpha(end)) has no non-conjugate preimage besides alpha(end)", last_sample=end)
        lifts.append(candidates[0])

    previous = _normalized_det(chart, lifts[-1])
    sign = np.sign(previous)
    hit = False
    for j in range(len(lifts), len(targets)):
        guess = 2 * lifts[-1] - lifts[-2] if len(lifts) >= 2 else lifts[-1]
        x = _newton_lift(chart, targets[j], guess)
        if x is None:
            raise RetortError(f"continuation diverged at sample {j}", last_sample=lifts[-1])
        # small |det| only counts while it is still shrinking (a join starts near zero)
        nd = _normalized_det(chart, x)
        if np.sign(nd) != sign or (abs(nd) < conjugate_tol and abs(nd) < abs(previous)):
            hit = True
            break
        lifts.append(x)
        previous = nd

    points = np.array(lifts)
    images = np.array([chart.evaluate(p) for p in points])
    return Retort(points, images, targets, hit, join is not None)


@dataclass
class RetortGap:
    drop: float
    gain: float
    min_slack: float

    @property
    def gap(self) -> float:
        return self.drop - self.gain

    def to_dict(self) -> dict:
        return {'drop': self.drop, 'gain': self.gain, 'gap': self.gap, 'min_slack': self.min_slack}


def retort_gain_gap(family, alpha: CDCurve, retort: Retort) -> RetortGap:
    """Radius drop along alpha against the radius gained along the retort (both by omega)"""
    chart = chart_for(family)
    gain = 0.0
    for a, b in zip(retort.points[:-1], retort.points[1:]):
        gain += radius_form(chart, 0.5 * (a + b), b - a)
    interior = alpha.slack[1:-1] if len(alpha.slack) > 2 else alpha.slack
    return RetortGap(alpha.image_length, gain, float(np.min(interior)))


# D4 ---------------------------------------------------------------------------


@dataclass
class D4Generator:
    angle: float
    point: np.ndarray
    direction: np.ndarray
    alignment: float


def d4_minus_cdcs(family: Optional[ModelRayFamily] = None, radius: float = 0.1,
                  samples: int = 96) -> List[D4Generator]:
    """
    Generators of the lower nappe along which D is radial

    Samples x(a) = radius (cos a, sin a, -1) on a half-offset angle grid and
    finds the zeros of the angular component of the descending direction.
    """
    family = family or ModelRayFamily(EllipticUmbilicMap(), [0.0, 0.0, 1.0])
    chart = chart_for(family)

    def point(a):
        return radius * np.array([np.cos(a), np.sin(a), -1.0])

    def angular(a):
        D, _, _ = _raw_distribution(chart, point(a))
        d = D / np.linalg.norm(D)
        if d @ chart.radial > 0:
            d = -d
        return float(d @ np.array([-np.sin(a), np.cos(a), 0.0])), d

    grid = 2 * np.pi * (np.arange(samples) + 0.5) / samples
    values = np.array([angular(a)[0] for a in grid])
    out = []
    for i in range(samples):
        a0, a1 = grid[i], grid[(i + 1) % samples] + (2 * np.pi if i == samples - 1 else 0.0)
        f0, f1 = values[i], values[(i + 1) % samples]
        if f0 * f1 >= 0:
            continue
        root = brentq(lambda a: angular(a)[0], a0, a1, xtol=1e-13)
        value, d = angular(root)
        if abs(value) > 1e-8:
            continue
        x = point(root)
        generator = x / np.linalg.norm(x)
        out.append(D4Generator(float(np.mod(root, 2 * np.pi)), x, d, float(d @ generator)))
    out.sort(key=lambda g: g.angle)
    logger.info("D4- generators at angles %s", [round(g.angle, 6) for g in out])
    return out


@dataclass
class D4RootReport:
    kind: str
    a: float
    b: float
    roots: List[float]
    coefficients: List[float]
    discriminant: float
    intervals_ok: Optional[bool] = None
    positive: int = 0
    negative: int = 0
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'a': self.a, 'b': self.b, 'roots': self.roots,
                'coefficients': self.coefficients, 'discriminant': self.discriminant,
                'intervals_ok': self.intervals_ok, 'positive': self.positive, 'negative': self.negative}


def d4_root_analysis(a: float, b: float, kind: str) -> D4RootReport:
    """
    Real roots of the cubic governing CDCs near D4 points

    Args:
        a, b: Chamber parameters
        kind: 'minus' (needs a^2 + b^2 < 1) or 'plus' (needs ab > 1)

    Returns:
        D4RootReport

    Raises:
        DomainError: Outside the admissible chamber or for an unknown kind
    """
    a, b = float(a), float(b)
    if kind == 'minus':
        if a * a + b * b >= 1:
            raise DomainError(f"(a, b)=({a}, {b}) is outside the D4- chamber a^2 + b^2 < 1")
        coefficients = [-0.5 * (a - 1), 0.5 * b, -0.5 * (a + 3), 0.5 * b]
    elif kind == 'plus':
        if a * b <= 1:
            raise DomainError(f"(a, b)=({a}, {b}) is outside the D4+ chamber ab > 1")
        coefficients = [-1.0, -b, a, 1.0]
    else:
        raise DomainError(f"unknown D4 kind '{kind}'")

    roots = np.roots(coefficients)
    real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
    disc = -9 * a * a * b * b - 36 * a ** 3 - 36 * b ** 3 - 162 * a * b + 243
    report = D4RootReport(kind, a, b, [float(r) for r in real], coefficients, float(disc),
                          positive=int(np.sum(real > 0)), negative=int(np.sum(real < 0)))
    if kind == 'minus':
        edge = 1.0 / np.sqrt(3.0)
        report.intervals_ok = (len(real) == 3 and real[0] < -edge and -edge < real[1] < edge
                               and real[2] > edge)
    return report


# Export -----------------------------------------------------------------------


def cdc_rows(curve: CDCurve):
    """(header, rows): s, ray t, ray z..., R, slack"""
    nz = curve.ray_coords.shape[1] - 1
    header = ['s', 't'] + [f'z{i + 1}' for i in range(nz)] + ['R', 'slack']
    rows = [[s, *rc, R, A] for s, rc, R, A in zip(curve.s, curve.ray_coords, curve.radius, curve.slack)]
    return header, rows


def image_rows(curve: CDCurve, retort: Optional[Retort] = None):
    """(header, rows) of the image polyline, followed by the retort image when given"""
    n = curve.images.shape[1]
    header = ['segment', 'index'] + [f'y{i + 1}' for i in range(n)]
    rows = [['cdc', i, *y] for i, y in enumerate(curve.images)]
    if retort is not None:
        rows += [['retort', i, *y] for i, y in enumerate(retort.images)]
    return header, rows

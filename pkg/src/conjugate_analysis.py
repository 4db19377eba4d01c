"""
Conjugate events along rays, lambda_k profiles and singularity classification
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .config import Config
from .errors import DegenerateRayError
from .geodesic_flow import RayFamily, RayPath
from .utils.worker_pool import WorkerPool

logger = logging.getLogger(__name__)

CLASSES = ('A2', 'A3_I', 'A3_II', 'A4', 'D4_plus_I', 'D4_plus_II', 'D4_minus', 'UNCLASSIFIED')

SCAN_PER_STEP = 8
SCAN_FLOOR = 400
EVEN_ROOT_TOL = 1e-6
DEGENERATE_LEVEL = 1e-9
DEGENERATE_FRACTION = 0.05
F_RATIO = 10.0


@dataclass
class ConjugateEvent:
    """A root of det dF on the ray z, with the kernel of dF there"""
    z: np.ndarray
    t: float
    order: int
    kernel_basis: List[np.ndarray]
    t_max: float
    cls: str = 'UNCLASSIFIED'
    contact: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            't': self.t,
            'z': [float(v) for v in self.z],
            'order': self.order,
            'class': self.cls,
            'kernel_basis': [[float(c) for c in k] for k in self.kernel_basis],
        }


@dataclass
class LambdaProfile:
    """lambda_k(z_i) for k = 1..k_max; np.inf where the ray has fewer events"""
    zs: np.ndarray
    values: np.ndarray
    k_max: int
    period: Optional[float] = None

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k - 1]


def _scan_times(ray: RayPath) -> np.ndarray:
    count = max(SCAN_FLOOR, SCAN_PER_STEP * (len(ray.step_times) - 1))
    return np.linspace(0.0, ray.t_end, count + 1)


def _check_degenerate(ts: np.ndarray, nd: np.ndarray, t_span: float) -> None:
    small = np.abs(nd) < DEGENERATE_LEVEL
    start = None
    for i, flag in enumerate(np.append(small, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            lo, hi = ts[start], ts[min(i, len(ts) - 1)]
            if hi - lo >= DEGENERATE_FRACTION * t_span and hi > 0:
                raise DegenerateRayError(f"det dF vanishes on [{lo:.6g}, {hi:.6g}]", interval=(lo, hi))
            start = None


def _sv_ratio(ray: RayPath, t: float) -> float:
    s = np.linalg.svd(ray.frame_jacobian(t), compute_uv=False)
    return float(s[-1] / max(s[0], 1e-300))


def _kernel(ray: RayPath, t: float, rank_tol: float):
    M = ray.frame_jacobian(t)
    _, s, vt = np.linalg.svd(M)
    ratio = s / max(s[0], 1e-300)
    order = max(1, int(np.sum(ratio < rank_tol)))
    return order, [vt[-i - 1] for i in range(order)]


def conjugacy_order(ray: RayPath, t: float, threshold: Optional[float] = None) -> int:
    """Kernel dimension of dF at (t, z) when sigma_min / sigma_max falls below threshold, else 0

    The default threshold is Config.CONJUGACY_TOL. t is expected to be a bisected cut time,
    not a polished root of det dF.
    """
    threshold = threshold or Config.CONJUGACY_TOL
    if t <= 0 or _sv_ratio(ray, t) >= threshold:
        return 0
    return _kernel(ray, t, threshold)[0]


def events_on_ray(ray: RayPath, tol: float = 1e-10, rank_tol: Optional[float] = None,
                  t_min: float = 1e-8) -> List[ConjugateEvent]:
    """Roots of det dF along an already traced ray"""
    rank_tol = rank_tol or Config.RANK_TOL
    ts = _scan_times(ray)
    nd = ray.normalized_dets(ts)
    _check_degenerate(ts, nd, ray.t_end)

    roots = []
    for i in range(len(ts) - 1):
        a, b = nd[i], nd[i + 1]
        if a * b < 0:
            roots.append(brentq(ray.det, ts[i], ts[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps))
        elif b == 0 and 0 < i + 1 < len(ts) - 1:
            roots.append(ts[i + 1])

    # even-order roots: det touches zero without changing sign
    sv = ray.singular_values(ts)
    ratio = sv[:, -1] / np.maximum(sv[:, 0], 1e-300)
    for i in range(1, len(ts) - 1):
        if ratio[i] <= ratio[i - 1] and ratio[i] <= ratio[i + 1] and ratio[i] < 1e-2:
            if any(abs(r - ts[i]) < 2 * (ts[1] - ts[0]) for r in roots):
                continue
            res = minimize_scalar(
                lambda t: _sv_ratio(ray, t),
                bounds=(ts[i - 1], ts[i + 1]), method='bounded',
                options={'xatol': tol})
            if res.fun < EVEN_ROOT_TOL:
                roots.append(float(res.x))

    events = []
    for t in sorted(r for r in roots if r > t_min):
        order, basis = _kernel(ray, t, rank_tol)
        events.append(ConjugateEvent(ray.z.copy(), float(t), order, basis, ray.t_end))
    return events


def detect_conjugate_events(family: RayFamily, z, t_max: float, tol: float = 1e-10) -> List[ConjugateEvent]:
    """
    All conjugate events on the ray z in (0, t_max]

    Args:
        family: Ray family defining F
        z: Ray coordinate
        t_max: Integration horizon
        tol: Bisection tolerance in t

    Returns:
        Events sorted by t
    """
    return events_on_ray(family.trace(z, t_max), tol)


def lambda_k(family: RayFamily, z, k: int, t_max: float, tol: float = 1e-10) -> float:
    """t of the k-th conjugate event counting multiplicity; np.inf if there are fewer"""
    if k < 1:
        raise ValueError("k must be at least 1")
    count = 0
    for event in detect_conjugate_events(family, z, t_max, tol):
        count += event.order
        if count >= k:
            return event.t
    return np.inf


def lambda_profile(family: RayFamily, zs: Sequence, k_max: int, t_max: float,
                   threads: Optional[int] = None) -> LambdaProfile:
    """lambda_1..lambda_k_max over a grid of ray coordinates, in parallel"""

    def one(z):
        out = np.full(k_max, np.inf)
        count = 0
        for event in detect_conjugate_events(family, z, t_max):
            for _ in range(event.order):
                if count < k_max:
                    out[count] = event.t
                count += 1
        return out

    values = np.array(WorkerPool(threads=threads).map(list(zs), one, label='lambda rays'))
    return LambdaProfile(np.asarray(zs, dtype=float), values, k_max, family.z_period)


def lipschitz_of_samples(zs, values, period: Optional[float] = None) -> float:
    """Largest difference quotient over adjacent pairs where both values are finite"""
    zs = np.asarray(zs, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(zs)
    zs, values = zs[order], values[order]
    dz = np.diff(zs)
    dv = np.diff(values)
    if period is not None and len(zs) > 1:
        dz = np.append(dz, zs[0] + period - zs[-1])
        dv = np.append(dv, values[0] - values[-1])
    ok = np.isfinite(dv) & (dz > 0)
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(dv[ok]) / dz[ok]))


def lipschitz_estimate(profile: LambdaProfile, k: int = 1) -> float:
    """Empirical Lipschitz constant of lambda_k over the profile grid"""
    if profile.zs.ndim > 1:
        raise ValueError("lipschitz_estimate expects a one-parameter profile")
    return lipschitz_of_samples(profile.zs, profile.column(k), profile.period)


# Classification -----------------------------------------------------------


def _neighbour_offsets(z_dim: int) -> np.ndarray:
    if z_dim == 1:
        return np.arange(-20, 21, dtype=float)[:, None] / 20.0
    g = np.arange(-3, 4, dtype=float) / 3.0
    a, b = np.meshgrid(g, g, indexing='ij')
    return np.stack([a.ravel(), b.ravel()], axis=1)


def _monomials(dz: np.ndarray, degree: int) -> np.ndarray:
    if dz.shape[1] == 1:
        return np.stack([dz[:, 0] ** d for d in range(degree + 1)], axis=1)
    u, v = dz[:, 0], dz[:, 1]
    cols = [u ** i * v ** (d - i) for d in range(degree + 1) for i in range(d + 1)]
    return np.stack(cols, axis=1)


def _fit(dz, t, w, degree):
    A = _monomials(dz, degree) * w[:, None]
    coef, *_ = np.linalg.lstsq(A, t * w, rcond=None)
    resid = float(np.sum((A @ coef - t * w) ** 2))
    return coef, resid


def _tracked_events(family: RayFamily, event: ConjugateEvent, offsets: np.ndarray):
    """Follow the event onto neighbouring rays, from the centre outward"""
    order = np.argsort(np.linalg.norm(offsets, axis=1))
    found = {}
    for idx in order:
        z = event.z + offsets[idx]
        done = [j for j in found]
        if done:
            nearest = min(done, key=lambda j: np.linalg.norm(offsets[j] - offsets[idx]))
            guess = found[nearest]
        else:
            guess = event.t
        try:
            ts = [e.t for e in detect_conjugate_events(family, z, event.t_max)]
        except Exception as e:
            logger.debug("Neighbour ray %s skipped: %s", z, e)
            continue
        if ts:
            found[idx] = min(ts, key=lambda t: abs(t - guess))
    keys = sorted(found)
    return offsets[keys], np.array([found[k] for k in keys])


def _contact_coefficients(event: ConjugateEvent, coef: np.ndarray, degree: int, z_dim: int):
    k = event.kernel_basis[0]
    k = k / np.linalg.norm(k)
    k_t, k_z = k[0], k[1:]
    s = np.linspace(-1.0, 1.0, 7)
    along = _monomials(s[:, None] * k_z[None, :], degree) @ coef
    f_poly = np.polynomial.polynomial.polyfit(s, along, 3)
    f_poly = np.pad(f_poly, (0, 4 - len(f_poly)))
    c1 = k_t - f_poly[1]
    return np.array([c1, -f_poly[2], -f_poly[3]])


def classify_singularity(event: ConjugateEvent, family: RayFamily, radius: float = 0.05) -> str:
    """
    Classify a conjugate event against the canonical singularity list

    Args:
        event: Event from detect_conjugate_events
        family: The ray family that produced it
        radius: Half-width of the neighbourhood in ray coordinates

    Returns:
        One of CLASSES; UNCLASSIFIED when the local fit is ambiguous
    """
    if event.order == 1:
        cls = _classify_order_one(event, family, radius)
    elif event.order == 2:
        cls = _classify_order_two(event, family)
    else:
        cls = 'UNCLASSIFIED'
    event.cls = cls
    logger.debug("Event t=%.6g z=%s classified %s", event.t, event.z, cls)
    return cls


def _classify_order_one(event, family, radius):
    z_dim = len(event.z)
    offsets = _neighbour_offsets(z_dim) * radius
    dz, t = _tracked_events(family, event, offsets)
    n_params3 = _monomials(np.zeros((1, z_dim)), 3).shape[1]
    if len(t) < n_params3 + 2:
        return 'UNCLASSIFIED'

    w = np.exp(-np.sum((dz / radius) ** 2, axis=1))
    coef2, rss2 = _fit(dz, t, w, 2)
    coef3, rss3 = _fit(dz, t, w, 3)
    p2, p3 = len(coef2), len(coef3)
    dof = len(t) - p3
    scale = 1.0 + abs(event.t)
    noise_floor = (1e-9 * scale) ** 2 * np.sum(w ** 2)
    if rss2 <= noise_floor:
        coef, degree, rss = coef2, 2, rss2
    else:
        f_ratio = ((rss2 - rss3) / (p3 - p2)) / max(rss3 / dof, 1e-300)
        coef, degree, rss = (coef3, 3, rss3) if f_ratio > F_RATIO else (coef2, 2, rss2)

    rms = np.sqrt(rss / np.sum(w ** 2))
    if rms > 1e-4 * scale:
        return 'UNCLASSIFIED'

    c = _contact_coefficients(event, coef, degree, z_dim)
    threshold = max(1e-7 * scale, 20.0 * rms)
    k_z_norm = np.linalg.norm(event.kernel_basis[0][1:]) or 1.0
    span = radius / k_z_norm
    significant = [abs(c[j]) * span ** (j + 1) > threshold for j in range(3)]
    event.contact = {'c1': float(c[0]), 'c2': float(c[1]), 'c3': float(c[2]), 'rms': float(rms)}

    if significant[0]:
        return 'A2'
    if significant[1]:
        # lambda has a local minimum along the kernel when c2 < 0
        return 'A3_I' if c[1] < 0 else 'A3_II'
    if significant[2]:
        return 'A4'
    return 'UNCLASSIFIED'


def det_at(family: RayFamily, v: np.ndarray) -> float:
    """det dF at the point v = (t, z) of V"""
    t = float(v[0])
    ray = family.trace(v[1:], max(t, 1e-12) * 1.01 + 1e-6)
    return ray.det(t)


def _restricted_hessian(family, event, step=1e-3):
    v0 = np.concatenate([[event.t], event.z])
    K = [k / np.linalg.norm(k) for k in event.kernel_basis[:2]]
    H = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            a, b = K[i] * step, K[j] * step
            H[i, j] = (det_at(family, v0 + a + b) - det_at(family, v0 + a - b)
                       - det_at(family, v0 - a + b) + det_at(family, v0 - a - b)) / (4 * step ** 2)
    return 0.5 * (H + H.T), K


def _classify_order_two(event, family):
    H, K = _restricted_hessian(family, event)
    eig = np.linalg.eigvalsh(H)
    top = np.max(np.abs(eig))
    if top == 0 or np.min(np.abs(eig)) < 1e-3 * top:
        return 'UNCLASSIFIED'
    if eig[0] * eig[1] > 0:
        return 'D4_minus'
    r = family.adapted_radial(event) if hasattr(family, 'adapted_radial') else None
    if r is None:
        r = _fitted_frame_radial(family, event, H, K)
    if r is None:
        return 'UNCLASSIFIED'
    if r[0] < 0:
        r = -r
    return 'D4_plus_I' if r[2] > 0 else 'D4_plus_II'


def _fitted_frame_radial(family, event, H, K, step=1e-3):
    """Coordinates of the radial vector in a frame fitted to an indefinite D4 point.

    e1, e2 span the null lines of the restricted Hessian with H(e1, e2) > 0;
    e3 is orthogonal to the kernel, oriented by <d_e3 dF e1, d2F(e2, e2)> > 0.
    """
    eig, vec = np.linalg.eigh(H)
    ratio = np.sqrt(-eig[0] / eig[1])
    nulls = [vec[:, 1] + ratio * vec[:, 0], vec[:, 1] - ratio * vec[:, 0]]
    e1 = nulls[0][0] * K[0] + nulls[0][1] * K[1]
    e2 = nulls[1][0] * K[0] + nulls[1][1] * K[1]
    h12 = nulls[0] @ H @ nulls[1]
    if h12 < 0:
        e2 = -e2
    v0 = np.concatenate([[event.t], event.z])
    kern = np.stack(K, axis=1)
    q, _ = np.linalg.qr(np.concatenate([kern, np.eye(3)], axis=1))
    e3 = q[:, 2]

    def F(v):
        return family.trace(v[1:], max(v[0], 1e-12) * 1.01 + 1e-6).position(float(v[0]))

    def dF(v, w):
        return (F(v + step * w) - F(v - step * w)) / (2 * step)

    d_e3_dF_e1 = (dF(v0 + step * e3, e1) - dF(v0 - step * e3, e1)) / (2 * step)
    d2F_e2 = (F(v0 + step * e2) - 2 * F(v0) + F(v0 - step * e2)) / step ** 2
    if d_e3_dF_e1 @ d2F_e2 < 0:
        e3 = -e3
    radial = np.zeros(3)
    radial[0] = 1.0
    try:
        return np.linalg.solve(np.stack([e1, e2, e3], axis=1), radial)
    except np.linalg.LinAlgError:
        return None


def events_to_json(events: Sequence[ConjugateEvent]) -> List[dict]:
    return [e.to_dict() for e in events]

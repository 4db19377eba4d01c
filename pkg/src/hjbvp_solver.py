"""
Hamilton-Jacobi boundary value problems: Lax-Oleinik solutions, singular sets,
cut times and the reduction to zero boundary data
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, least_squares
from scipy.spatial import cKDTree

from .config import Config
from .conjugate_analysis import events_on_ray, lipschitz_of_samples
from .errors import ConfigError, ReductionError
from .geodesic_flow import BoundaryRayFamily, PointRayFamily, RayFamily, flow
from .geometry.manifolds import (BoundaryComponent, ChartedManifold, EuclideanDomain, RoundSphere,
                                 _Quadric)
from .utils.worker_pool import WorkerPool

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
CHUNK_ROWS = 256
TIE_ITERATIONS = 26
PREDICATE_SLACK = 1e-8
REASONS = ('multiple_minimizers', 'conjugate', 'domain_exit')

__all__ = [
    'BoundaryData', 'PointSource', 'MinimizerRecord', 'LaxOleinikSolver', 'SampleGrid',
    'ViscositySolution', 'SingularSet', 'CutRecord', 'CompatibilityReport', 'ReducedProblem',
    'check_compatibility', 'lax_oleinik_solve', 'characteristics_solution', 'cut_time',
    'cut_records', 'singular_set_extract', 'rho_S', 'extend_and_reduce', 'semiconcavity_check',
    'lipschitz_of_samples', 'solution_rows', 'singular_set_to_json', 'boundary_data_from_doc',
    'ray_family_for',
]


# Sources ------------------------------------------------------------------


@dataclass
class BoundaryData:
    """g on each boundary component plus constant offsets a.

    components overrides the manifold's boundary (used for reduced problems).
    """
    functions: Dict[int, Callable] = field(default_factory=dict)
    offsets: Dict[int, float] = field(default_factory=dict)
    derivatives: Dict[int, Callable] = field(default_factory=dict)
    components: Optional[List[BoundaryComponent]] = None

    def value(self, cid: int, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        g = self.functions.get(cid)
        base = np.zeros_like(s) if g is None else np.broadcast_to(g(s), s.shape).astype(float)
        return base + self.offsets.get(cid, 0.0)

    def derivative(self, cid: int, s: float) -> float:
        if cid in self.derivatives:
            return float(self.derivatives[cid](s))
        if cid not in self.functions:
            return 0.0
        h = 1e-6 * (1.0 + abs(s))
        return float((self.value(cid, s + h) - self.value(cid, s - h)) / (2 * h))

    def with_offsets(self, offsets: Dict[int, float]) -> 'BoundaryData':
        return BoundaryData(dict(self.functions), dict(offsets), dict(self.derivatives), self.components)

    def g_for(self, cid: int) -> Callable:
        return lambda s: self.value(cid, s)


@dataclass
class PointSource:
    """Distance from a point p; lattice_offset b adds <b, k> on the torus translate k"""
    p: np.ndarray
    lattice_offset: Optional[np.ndarray] = None
    epsilon: float = 1e-3


def _fourier(doc):
    a0 = float(doc.get('a0', 0.0))
    cos = np.asarray(doc.get('cos', []), dtype=float)
    sin = np.asarray(doc.get('sin', []), dtype=float)

    def g(s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, a0)
        for k, c in enumerate(cos, start=1):
            out = out + c * np.cos(k * s)
        for k, c in enumerate(sin, start=1):
            out = out + c * np.sin(k * s)
        return out

    return g


def _spline(doc, component: BoundaryComponent):
    s = np.asarray(doc['s'], dtype=float)
    v = np.asarray(doc['values'], dtype=float)
    if component.closed:
        s = np.append(s, s[0] + component.period)
        v = np.append(v, v[0])
        spline = CubicSpline(s, v, bc_type='periodic')
        return lambda x: spline(np.mod(x - s[0], component.period) + s[0])
    return CubicSpline(s, v)


def boundary_data_from_doc(manifold: ChartedManifold, doc: Optional[dict]) -> BoundaryData:
    """
    Build BoundaryData from a job document

    Args:
        manifold: Manifold whose components are referenced by id
        doc: {"g": {"<id>": {"type": constant|fourier|linear|spline, ...}}, "a": [a_0, a_1, ...]}

    Returns:
        BoundaryData
    """
    doc = doc or {}
    unknown = set(doc) - {'g', 'a'}
    if unknown:
        raise ConfigError(f"unknown boundary data keys: {sorted(unknown)}")
    ids = {c.id: c for c in manifold.boundary_components}
    functions = {}
    for key, spec in (doc.get('g') or {}).items():
        cid = int(key)
        if cid not in ids:
            raise ConfigError(f"no boundary component with id {cid}")
        kind = spec.get('type', 'constant')
        if kind == 'constant':
            value = float(spec.get('value', 0.0))
            functions[cid] = lambda s, value=value: np.full(np.shape(s), value)
        elif kind == 'fourier':
            functions[cid] = _fourier(spec)
        elif kind == 'linear':
            slope, intercept = float(spec.get('slope', 0.0)), float(spec.get('intercept', 0.0))
            functions[cid] = lambda s, m=slope, c=intercept: m * np.asarray(s, dtype=float) + c
        elif kind == 'spline':
            functions[cid] = _spline(spec, ids[cid])
        else:
            raise ConfigError(f"unknown boundary function type '{kind}'")
    offsets = {i: float(a) for i, a in enumerate(doc.get('a') or [])}
    if set(offsets) - set(ids):
        raise ConfigError("more offsets than boundary components")
    return BoundaryData(functions, offsets)


@dataclass
class MinimizerRecord:
    """One element of Q_p: where the minimizing characteristic starts and how it arrives"""
    component: int
    s: float
    translate: int
    t: float
    arrival: np.ndarray
    value: float

    @property
    def label(self) -> Tuple[int, int]:
        return (self.component, self.translate)

    def to_dict(self) -> dict:
        return {'component': self.component, 's': self.s, 'translate': self.translate,
                't': self.t, 'arrival': [float(v) for v in self.arrival], 'value': self.value}


# Lax-Oleinik ----------------------------------------------------------------


def _golden(f: Callable, lo: np.ndarray, hi: np.ndarray, iterations: int):
    """Vectorized golden-section minimization of f on [lo, hi] elementwise"""
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        c = hi - GOLDEN * (hi - lo)
        d = lo + GOLDEN * (hi - lo)
        fc, fd = f(c), f(d)
    x = np.where(fc < fd, c, d)
    return x, np.minimum(fc, fd), hi - lo


class ShootingDistance:
    """Distances from p on manifolds without an oracle, by multi-start Newton shooting"""

    def __init__(self, manifold: ChartedManifold, p, t_max: float, starts: Optional[int] = None,
                 samples_per_ray: int = 200):
        self.manifold = manifold
        self.family = PointRayFamily(manifold, p)
        self.t_max = t_max
        starts = starts or Config.SHOOTING_STARTS
        thetas = 2 * np.pi * np.arange(starts) / starts
        ts = np.linspace(0.0, t_max, samples_per_ray + 1)[1:]
        rays = [self.family.trace(th, t_max) for th in thetas]
        pts, seeds = [], []
        for th, ray in zip(thetas, rays):
            tt = ts[ts <= ray.t_end]
            pts.append(ray.positions(tt))
            seeds.extend((th, t) for t in tt)
        self.seeds = np.array(seeds)
        self.tree = cKDTree(np.concatenate(pts))

    def newton(self, theta: float, t: float, q: np.ndarray, iterations: int = 30):
        for _ in range(iterations):
            ray = self.family.trace(theta, max(t, 1e-9) * 1.001 + 1e-9)
            x = ray.position(t)
            r = x - q
            if np.linalg.norm(r) < 1e-11:
                return theta, t, ray
            step, *_ = np.linalg.lstsq(ray.columns(t), -r, rcond=None)
            t = t + step[0]
            theta = theta + step[1]
            if t <= 0:
                return None
        ray = self.family.trace(theta, max(t, 1e-9) * 1.001 + 1e-9)
        return (theta, t, ray) if np.linalg.norm(ray.position(t) - q) < 1e-8 else None

    def solutions(self, q: np.ndarray, seeds: int = 6):
        """Converged (theta, t, arrival) triples, shortest first"""
        _, idx = self.tree.query(q, k=min(seeds, len(self.seeds)))
        out = []
        for i in np.atleast_1d(idx):
            res = self.newton(*self.seeds[i], q)
            if res is None:
                continue
            theta, t, ray = res
            theta = float(np.mod(theta, 2 * np.pi))
            if all(abs(t - o[1]) > 1e-9 or _angle_gap(theta, o[0]) > 1e-6 for o in out):
                out.append((theta, float(t), ray.velocity(t)))
        return sorted(out, key=lambda o: o[1])


def _angle_gap(a, b):
    d = np.mod(abs(a - b), 2 * np.pi)
    return min(d, 2 * np.pi - d)


class LaxOleinikSolver:
    """u(p) = min over sources of d(source, p) + g, with minimizer records"""

    def __init__(self, manifold: ChartedManifold, source, samples: Optional[int] = None,
                 epsilon_min: Optional[float] = None, delta_sep: Optional[float] = None,
                 shooting_t_max: Optional[float] = None):
        self.manifold = manifold
        self.source = source
        self.samples = samples or Config.BOUNDARY_SAMPLES
        self.epsilon_min = epsilon_min or Config.EPSILON_MIN
        self.delta_sep = delta_sep or Config.DELTA_SEP
        self.shooting = None
        if isinstance(source, BoundaryData):
            self.components = source.components or manifold.boundary_components
            if not self.components:
                raise ConfigError(f"{manifold.kind} has no boundary components")
            self._samples = {c.id: c.parameters(self.samples) for c in self.components}
        else:
            self.components = []
            self.p = manifold.check_point(source.p)
            if not manifold.has_oracle:
                t_max = shooting_t_max or 4.0 * float(np.max(getattr(manifold, 'semiaxes', [1.0])))
                self.shooting = ShootingDistance(manifold, self.p, t_max)
            lattice = getattr(manifold, 'lattice', np.zeros((1, manifold.ambient_dim)))
            b = source.lattice_offset
            self.translate_offsets = (np.zeros(len(manifold.translates)) if b is None
                                      else lattice @ np.asarray(b, dtype=float))

    @property
    def is_point_source(self) -> bool:
        return not isinstance(self.source, BoundaryData)

    def component(self, cid: int) -> BoundaryComponent:
        return next(c for c in self.components if c.id == cid)

    # branch values -------------------------------------------------------

    def _clamp(self, comp, s):
        if comp.closed:
            return s
        lo, hi = comp.param_range
        return np.clip(s, lo, hi)

    def _boundary_values(self, comp, s, points):
        """d(b(s), p) + g(s), s and points broadcast together"""
        s = self._clamp(comp, s)
        return (self.manifold.pair_distance(comp.point(s), points)
                + self.source.value(comp.id, s))

    def branch_values(self, records: Sequence[MinimizerRecord], points: np.ndarray):
        """Value of each record's branch at the matching point, with the re-optimized parameter"""
        points = np.atleast_2d(points)
        s_out = np.array([r.s for r in records], dtype=float)
        if self.is_point_source:
            if self.shooting is not None:
                vals = []
                for r, q in zip(records, points):
                    sols = [o for o in self.shooting.solutions(q) if _angle_gap(o[0], r.s) < 0.5]
                    vals.append(sols[0][1] if sols else np.nan)
                return np.array(vals), s_out
            k = np.array([r.translate for r in records], dtype=int)
            vals = (self.manifold.pair_distance(self.p + self.manifold.translates[k], points)
                    + self.translate_offsets[k])
            return vals, s_out
        vals = np.empty(len(records))
        comps = np.array([r.component for r in records])
        for comp in self.components:
            sel = comps == comp.id
            if not np.any(sel):
                continue
            span = comp.period if comp.closed else comp.param_range[1] - comp.param_range[0]
            width = 8.0 * span / self.samples
            s0 = s_out[sel]
            s, v, _ = _golden(lambda x, c=comp, q=points[sel]: self._boundary_values(c, x, q),
                              s0 - width, s0 + width, 40)
            vals[sel] = v
            s_out[sel] = self._clamp(comp, s)
        return vals, s_out

    def branch_value(self, record: MinimizerRecord, points: np.ndarray):
        points = np.atleast_2d(points)
        return self.branch_values([record] * len(points), points)

    def param_gap(self, a: MinimizerRecord, b: MinimizerRecord) -> float:
        if a.label != b.label:
            return np.inf
        if self.is_point_source:
            return _angle_gap(a.s, b.s) if self.shooting is not None else 0.0
        return float(self.component(a.component).param_gap(a.s, b.s))

    def same_branch(self, a: MinimizerRecord, b: MinimizerRecord) -> bool:
        return self.param_gap(a, b) <= self.delta_sep

    # evaluation ----------------------------------------------------------

    def evaluate(self, points) -> Tuple[np.ndarray, List[List[MinimizerRecord]]]:
        """
        Evaluate u and the minimizer sets Q_p

        Args:
            points: (N, ambient) array

        Returns:
            (u, records) with records[i] sorted by value
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        u = np.empty(len(points))
        records: List[List[MinimizerRecord]] = []
        for start in range(0, len(points), CHUNK_ROWS):
            chunk = points[start:start + CHUNK_ROWS]
            if self.is_point_source:
                cu, cr = self._evaluate_point_source(chunk)
            else:
                cu, cr = self._evaluate_boundary(chunk)
            u[start:start + len(chunk)] = cu
            records.extend(cr)
        return u, records

    def value(self, point) -> float:
        return float(self.evaluate(np.atleast_2d(point))[0][0])

    def _point_record(self, k: int, q: np.ndarray, value: float) -> MinimizerRecord:
        m = self.manifold
        d = self.p + m.translates[k]
        if np.allclose(d, q):
            theta, arrival = 0.0, np.zeros(m.ambient_dim)
        else:
            E = m.tangent_basis(self.p)
            antipodal = isinstance(m, RoundSphere) and m.pair_distance(d, q) >= np.pi * m.radius - 1e-9
            dep = E[:, 0] if antipodal else m._departure_vector(d, q)
            theta = float(np.mod(np.arctan2(*(E.T @ dep)[::-1]), 2 * np.pi))
            arrival = m.arrival_vector(d, q)
        t = float(value - self.translate_offsets[k])
        return MinimizerRecord(-1, theta, int(k), t, arrival, float(value))

    def _shooting_records(self, q, sols) -> List[MinimizerRecord]:
        return [MinimizerRecord(-1, th, 0, t, X / np.linalg.norm(X), t) for th, t, X in sols]

    def _evaluate_point_source(self, P):
        m = self.manifold
        if self.shooting is not None:
            u = np.full(len(P), np.nan)
            recs = []
            for i, q in enumerate(P):
                sols = self.shooting.solutions(q)
                if not sols:
                    logger.warning("Shooting failed to reach %s; value left undefined", q)
                    recs.append([])
                    continue
                u[i] = sols[0][1]
                recs.append(self._shooting_records(q, [o for o in sols if o[1] <= u[i] + self.epsilon_min]))
            return u, recs

        T = m.translates
        vals = np.stack([m.pair_distance(self.p + T[k], P) + self.translate_offsets[k]
                         for k in range(len(T))], axis=1)
        u = vals.min(axis=1)
        recs = []
        for i, q in enumerate(P):
            close = [k for k in np.argsort(vals[i]) if vals[i, k] <= u[i] + self.epsilon_min]
            recs.append([self._point_record(k, q, vals[i, k]) for k in close])
        return u, recs

    def local_minima(self, point) -> List[MinimizerRecord]:
        """Every local minimum of the source functional at one point, best first.

        For point sources each lattice translate counts as one local minimum.
        """
        q = np.asarray(point, dtype=float)
        m = self.manifold
        if self.is_point_source:
            if self.shooting is not None:
                return self._shooting_records(q, self.shooting.solutions(q))
            vals = m.pair_distance(self.p + m.translates, q[None, :]) + self.translate_offsets
            return [self._point_record(k, q, vals[k]) for k in np.argsort(vals)]
        out = []
        for comp in self.components:
            S = self._samples[comp.id]
            vals = self._boundary_values(comp, S, q[None, :])
            if comp.closed:
                left, right = np.roll(vals, 1), np.roll(vals, -1)
            else:
                left = np.append(np.inf, vals[:-1])
                right = np.append(vals[1:], np.inf)
            idx = np.nonzero((vals <= left) & (vals <= right))[0]
            if not len(idx):
                continue
            step = S[1] - S[0]
            f = lambda x, c=comp: self._boundary_values(c, x, np.repeat(q[None, :], len(x), axis=0))
            s, v, _ = _golden(f, S[idx] - step, S[idx] + step, 40)
            for si, vi in zip(self._clamp(comp, s), v):
                rec = MinimizerRecord(comp.id, float(comp.wrap_param(si)), 0, 0.0, None, float(vi))
                if any(self.same_branch(rec, o) for o in out):
                    continue
                b = comp.point(rec.s)
                rec.t = float(m.pair_distance(b, q))
                rec.arrival = m.arrival_vector(b, q) if rec.t > 1e-12 else comp.inward(rec.s)
                out.append(rec)
        return sorted(out, key=lambda r: r.value)

    def source_point(self, record: MinimizerRecord) -> np.ndarray:
        """Where the characteristic of record starts, on the covering chart"""
        if self.is_point_source:
            return self.p + self.manifold.translates[record.translate]
        return self.component(record.component).point(record.s)

    def h_value(self, record: MinimizerRecord) -> float:
        """g(z) + t for the record, without the constant offset"""
        if self.is_point_source:
            return float(record.t)
        return float(record.value - self.source.offsets.get(record.component, 0.0))

    def _evaluate_boundary(self, P):
        m = self.manifold
        if not m.has_oracle:
            logger.warning("No distance oracle on %s; boundary values left undefined", m.kind)
            return np.full(len(P), np.nan), [[] for _ in P]

        cand_tol = 10 * self.epsilon_min + 1e-5
        cand_rows, cand_comp, cand_s, cand_lo, cand_hi = [], [], [], [], []
        best = np.full(len(P), np.inf)
        sampled = []
        for comp in self.components:
            S = self._samples[comp.id]
            B = comp.point(S)
            vals = m.pair_distance(B[None, :, :], P[:, None, :]) + self.source.value(comp.id, S)[None, :]
            sampled.append((comp, S, vals))
            best = np.minimum(best, vals.min(axis=1))
        for comp, S, vals in sampled:
            if comp.closed:
                left = np.roll(vals, 1, axis=1)
                right = np.roll(vals, -1, axis=1)
            else:
                left = np.concatenate([np.full((len(P), 1), np.inf), vals[:, :-1]], axis=1)
                right = np.concatenate([vals[:, 1:], np.full((len(P), 1), np.inf)], axis=1)
            is_min = (vals <= left) & (vals <= right) & (vals <= best[:, None] + cand_tol)
            rows, cols = np.nonzero(is_min)
            step = (S[1] - S[0])
            cand_rows.append(rows)
            cand_comp.append(np.full(len(rows), comp.id))
            cand_s.append(S[cols])
            cand_lo.append(S[cols] - step)
            cand_hi.append(S[cols] + step)

        rows = np.concatenate(cand_rows)
        comps = np.concatenate(cand_comp)
        s_star = np.concatenate(cand_s)
        lo = np.concatenate(cand_lo)
        hi = np.concatenate(cand_hi)
        v_star = np.empty(len(rows))
        for comp in self.components:
            sel = comps == comp.id
            if not np.any(sel):
                continue
            f = lambda x, sel=sel, comp=comp: self._boundary_values(comp, x, P[rows[sel]])
            s1, _, width = _golden(f, lo[sel], hi[sel], 25)
            s2, v2, _ = _golden(f, s1 - 2 * width, s1 + 2 * width, 25)
            s_star[sel] = self._clamp(comp, s2)
            v_star[sel] = v2

        u = np.full(len(P), np.inf)
        np.minimum.at(u, rows, v_star)
        records = [[] for _ in P]
        order = np.lexsort((v_star, rows))
        for j in order:
            i = rows[j]
            if v_star[j] > u[i] + self.epsilon_min:
                continue
            comp = self.component(int(comps[j]))
            rec = MinimizerRecord(comp.id, float(comp.wrap_param(s_star[j])), 0, 0.0, None, float(v_star[j]))
            if any(self.same_branch(rec, other) for other in records[i]):
                continue
            q = comp.point(rec.s)
            rec.t = float(m.pair_distance(q, P[i]))
            rec.arrival = m.arrival_vector(q, P[i]) if rec.t > 1e-12 else comp.inward(rec.s)
            records[i].append(rec)
        return u, records


# Grids and solutions ------------------------------------------------------


class SampleGrid:
    """A cell-centered structured grid in chart or longitude/colatitude coordinates"""

    def __init__(self, manifold: ChartedManifold, resolution: int, bounds: Optional[np.ndarray] = None):
        self.manifold = manifold
        self.resolution = resolution
        if isinstance(manifold, _Quadric):
            self.kind = 'latlong'
            bounds = np.array([[0.0, 2 * np.pi], [0.0, np.pi]])
            self.periodic = np.array([True, False])
        else:
            self.kind = 'chart'
            bounds = manifold.chart_bounds() if bounds is None else np.asarray(bounds, dtype=float)
            self.periodic = np.array([manifold.periods is not None] * 2)
        self.lo = bounds[:, 0]
        self.h = (bounds[:, 1] - bounds[:, 0]) / resolution
        idx = (np.arange(resolution) + 0.5)
        a, b = np.meshgrid(self.lo[0] + idx * self.h[0], self.lo[1] + idx * self.h[1], indexing='ij')
        self.shape = (resolution, resolution)
        self.coords = np.stack([a.ravel(), b.ravel()], axis=1)
        self.points = self.embed(self.coords)
        self.mask = manifold.boundary_distance(self.points) > 0

    @property
    def spacing(self) -> float:
        """Largest distance between neighbouring samples"""
        if self.kind == 'latlong':
            return float(np.max(self.manifold.semiaxes) * np.max(self.h))
        return float(np.max(self.h))

    def embed(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        if self.kind == 'latlong':
            return self.manifold.latlong(coords[..., 1], coords[..., 0])
        return coords.copy()

    def index(self, i, j):
        return i * self.resolution + j

    def edges(self):
        """(a, b, axis) index arrays of neighbouring in-domain samples; b = a + h e_axis"""
        n = self.resolution
        out = []
        for axis in (0, 1):
            i, j = np.meshgrid(np.arange(n), np.arange(n), indexing='ij')
            i2, j2 = (i + 1, j) if axis == 0 else (i, j + 1)
            if self.periodic[axis]:
                i2, j2 = i2 % n, j2 % n
                valid = np.ones_like(i, dtype=bool)
            else:
                valid = (i2 < n) & (j2 < n)
            a = self.index(i[valid], j[valid])
            b = self.index(i2[valid], j2[valid])
            keep = self.mask[a] & self.mask[b]
            out.append((a[keep], b[keep], np.full(int(keep.sum()), axis)))
        return tuple(np.concatenate(x) for x in zip(*out))

    def cells(self):
        """Corner index quadruples of in-domain cells"""
        n = self.resolution
        quads = []
        for i in range(n if self.periodic[0] else n - 1):
            for j in range(n if self.periodic[1] else n - 1):
                q = [self.index(i, j), self.index((i + 1) % n, j),
                     self.index(i, (j + 1) % n), self.index((i + 1) % n, (j + 1) % n)]
                if all(self.mask[q]):
                    quads.append(q)
        return np.array(quads, dtype=int).reshape(-1, 4)


@dataclass
class ViscositySolution:
    grid: SampleGrid
    u: np.ndarray
    records: List[List[MinimizerRecord]]
    solver: LaxOleinikSolver

    @property
    def n_minimizers(self) -> np.ndarray:
        return np.array([len(r) for r in self.records])

    @property
    def smooth(self) -> np.ndarray:
        return self.n_minimizers == 1

    def gradient(self, i: int) -> Optional[np.ndarray]:
        """du at a smooth sample: the dual of the arriving unit velocity"""
        if len(self.records[i]) != 1:
            return None
        x = self.grid.points[i]
        return self.solver.manifold.metric.dual(x, self.records[i][0].arrival)


def lax_oleinik_solve(manifold: ChartedManifold, source, grid: SampleGrid,
                      threads: Optional[int] = None, **solver_kwargs) -> ViscositySolution:
    """
    Sample the Lax-Oleinik solution on a grid

    Args:
        manifold: Manifold
        source: BoundaryData or PointSource
        grid: Sample grid; masked samples get NaN and no records
        threads: Worker threads (Config.THREADS when None)

    Returns:
        ViscositySolution
    """
    solver = LaxOleinikSolver(manifold, source, **solver_kwargs)
    inside = np.nonzero(grid.mask)[0]
    chunks = [inside[k:k + CHUNK_ROWS] for k in range(0, len(inside), CHUNK_ROWS)]
    results = WorkerPool(threads=threads).map(chunks, lambda idx: solver.evaluate(grid.points[idx]),
                                              task_kind='grid', label='grid chunks')
    u = np.full(len(grid.points), np.nan)
    records: List[List[MinimizerRecord]] = [[] for _ in grid.points]
    for idx, (cu, cr) in zip(chunks, results):
        u[idx] = cu
        for i, r in zip(idx, cr):
            records[i] = r
    logger.info("Lax-Oleinik solution on %d samples (%s source)", len(inside),
                'point' if solver.is_point_source else 'boundary')
    return ViscositySolution(grid, u, records, solver)


# Singular set -----------------------------------------------------------


@dataclass
class SingularSet:
    """Extracted singular points with their minimizer sets and side branches"""
    points: np.ndarray
    kinds: List[str]
    records: List[List[MinimizerRecord]]
    sides: List[Optional[Tuple[MinimizerRecord, MinimizerRecord]]]
    spacing: float
    coords: Optional[np.ndarray] = None
    solver: Optional[LaxOleinikSolver] = None

    def __len__(self):
        return len(self.points)

    def tree(self, manifold: ChartedManifold) -> cKDTree:
        if manifold.periods is not None:
            return cKDTree(manifold.wrap(self.points), boxsize=manifold.periods)
        return cKDTree(self.points)


def _unwrapped_best(solution: ViscositySolution, idx, coords) -> List[Optional[MinimizerRecord]]:
    """Best records at idx, re-evaluated where coords differ from the stored (wrapped) sample"""
    grid = solution.grid
    best = [solution.records[i][0] if solution.records[i] else None for i in idx]
    if grid.kind != 'chart' or not np.any(grid.periodic):
        return best
    moved = np.nonzero(np.any(np.abs(grid.coords[idx] - coords) > 1e-12, axis=1))[0]
    if len(moved):
        _, recs = solution.solver.evaluate(grid.embed(coords[moved]))
        for k, r in zip(moved, recs):
            best[k] = r[0] if r else None
    return best


def _branch_split(solver: LaxOleinikSolver, ra: Sequence, rb: Sequence) -> np.ndarray:
    """Vectorized not-same-branch test over paired best records"""
    out = np.zeros(len(ra), dtype=bool)
    for k, (x, y) in enumerate(zip(ra, rb)):
        if x is None or y is None:
            continue
        out[k] = x.label != y.label or solver.param_gap(x, y) > solver.delta_sep
    return out


def _edge_ties(solution: ViscositySolution, a, b, axis):
    """Bisect grid edges whose endpoint minimizers sit on different branches"""
    solver = solution.solver
    grid = solution.grid
    c0 = grid.coords[a]
    step = np.zeros((len(a), 2))
    step[np.arange(len(a)), axis] = grid.h[axis]
    branch_a = [solution.records[i][0] if solution.records[i] else None for i in a]
    branch_b = _unwrapped_best(solution, b, c0 + step)
    keep = np.nonzero(_branch_split(solver, branch_a, branch_b))[0]
    if not len(keep):
        return []
    c0, step = c0[keep], step[keep]
    branch_a = [branch_a[k] for k in keep]
    branch_b = [branch_b[k] for k in keep]

    def phi(lam):
        pts = grid.embed(c0 + lam[:, None] * step)
        return solver.branch_values(branch_a, pts)[0] - solver.branch_values(branch_b, pts)[0]

    lo = np.zeros(len(keep))
    hi = np.ones(len(keep))
    for _ in range(TIE_ITERATIONS):
        mid = 0.5 * (lo + hi)
        below = phi(mid) <= 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    lam = 0.5 * (lo + hi)
    coords = c0 + lam[:, None] * step
    pts = solver.manifold.wrap(grid.embed(coords))
    _, tie_recs = solver.evaluate(pts)
    out = []
    for k in range(len(keep)):
        if not any(not solver.same_branch(r, tie_recs[k][0]) for r in tie_recs[k][1:]):
            continue
        out.append((pts[k], coords[k], 'edge', tie_recs[k], (branch_a[k], branch_b[k])))
    return out


def _cell_vertices(solution: ViscositySolution):
    """Cells whose corners carry three or more branches; solved for the equidistant point"""
    solver = solution.solver
    grid = solution.grid
    offsets = np.array([[0, 0], [1, 0], [0, 1], [1, 1]]) * grid.h
    out = []
    found = []
    for quad in grid.cells():
        base = grid.coords[quad[0]]
        branches = []
        for r in _unwrapped_best(solution, quad, base + offsets):
            if r is not None and not any(solver.same_branch(r, o) for o in branches):
                branches.append(r)
        if len(branches) < 3:
            continue
        start = base + 0.5 * grid.h
        if any(np.max(np.abs(start - f) / grid.h) < 2.0 for f in found):
            continue
        trio = branches[:3]

        def residual(c):
            p = np.repeat(grid.embed(c)[None, :], 3, axis=0)
            v = solver.branch_values(trio, p)[0]
            return np.array([v[0] - v[1], v[0] - v[2]])

        res = least_squares(residual, start, xtol=1e-14, ftol=1e-14, gtol=1e-14,
                            bounds=(base - 0.5 * grid.h, base + 1.5 * grid.h))
        if np.max(np.abs(res.fun)) > 1e-7:
            continue
        point = solver.manifold.wrap(grid.embed(res.x))
        _, recs = solver.evaluate(point[None, :])
        if len(recs[0]) >= 3:
            found.append(start)
            out.append((point, res.x, 'vertex', recs[0], None))
    return out


def singular_set_extract(solution: ViscositySolution,
                         cut_records: Optional[Sequence['CutRecord']] = None) -> SingularSet:
    """
    Points where Q_p has at least two separated elements, plus conjugate cut points

    Args:
        solution: Sampled Lax-Oleinik solution
        cut_records: Optional cut-time records; conjugate-reason endpoints are added

    Returns:
        SingularSet
    """
    a, b, axis = solution.grid.edges()
    items = _edge_ties(solution, a, b, axis)
    items += _cell_vertices(solution)

    if cut_records:
        solver = solution.solver
        manifold = solver.manifold
        conj = [c for c in cut_records if c.reason == 'conjugate']
        clusters: List[List[CutRecord]] = []
        for c in conj:
            for cl in clusters:
                if np.linalg.norm(manifold.chart_difference(cl[0].point, c.point)) < 2 * solution.grid.spacing:
                    cl.append(c)
                    break
            else:
                clusters.append([c])
        for cl in clusters:
            point = np.mean([c.point for c in cl], axis=0)
            point = manifold.project(point)
            recs = [MinimizerRecord(-1 if solver.is_point_source else c.component, float(c.z), 0,
                                    c.t_cut, c.arrival, c.t_cut + c.g0) for c in cl]
            items.append((point, None, 'conjugate', recs, None))

    if not items:
        return SingularSet(np.zeros((0, solution.grid.manifold.ambient_dim)), [], [], [],
                           solution.grid.spacing, np.zeros((0, 2)), solution.solver)
    coords = np.array([it[1] if it[1] is not None else [np.nan, np.nan] for it in items])
    logger.info("Singular set: %d edge, %d vertex, %d conjugate points",
                sum(it[2] == 'edge' for it in items), sum(it[2] == 'vertex' for it in items),
                sum(it[2] == 'conjugate' for it in items))
    return SingularSet(np.array([it[0] for it in items]), [it[2] for it in items],
                       [it[3] for it in items], [it[4] for it in items], solution.grid.spacing, coords,
                       solution.solver)


# Rays, cut times and rho_S ------------------------------------------------


def ray_family_for(solver: LaxOleinikSolver, component: Optional[int] = None) -> RayFamily:
    """The characteristic family of a solver's source (one component for boundary data)"""
    if solver.is_point_source:
        return PointRayFamily(solver.manifold, solver.p)
    cid = solver.components[0].id if component is None else component
    comp = solver.component(cid)
    return BoundaryRayFamily(solver.manifold, comp, solver.source.g_for(cid),
                             lambda s: solver.source.derivative(cid, s))


@dataclass
class CutRecord:
    z: float
    t_cut: float
    reason: str
    point: np.ndarray
    arrival: np.ndarray
    lambda1: float
    component: int = -1
    g0: float = 0.0

    def to_dict(self) -> dict:
        return {'z': self.z, 't_cut': self.t_cut, 'reason': self.reason,
                'point': [float(v) for v in self.point], 'lambda1': self.lambda1,
                'component': self.component}


def cut_time(solver: LaxOleinikSolver, family: RayFamily, z, t_max: float,
             tol: float = 1e-7) -> CutRecord:
    """
    sup{t : u(F(t, z)) = g(z) + t}, capped at lambda_1 and the domain exit

    Args:
        solver: Lax-Oleinik solver evaluating u
        family: Characteristic family of the same source
        z: Ray coordinate
        t_max: Integration horizon
        tol: Bisection tolerance in t

    Returns:
        CutRecord with the terminal reason
    """
    ray = family.trace(z, t_max)
    lam = np.inf
    count = 0
    for event in events_on_ray(ray):
        count += event.order
        if count >= 1:
            lam = event.t
            break
    g0 = family.initial_value(z)
    t_hi = min(lam, ray.t_end)

    def holds(t):
        return solver.value(ray.position(t)) >= g0 + t - PREDICATE_SLACK * (1 + t)

    if holds(t_hi):
        t_cut = t_hi
        reason = 'conjugate' if np.isfinite(lam) and lam <= ray.t_end else 'domain_exit'
    else:
        lo, hi = 0.0, t_hi
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if holds(mid):
                lo = mid
            else:
                hi = mid
        t_cut = lo
        reason = 'conjugate' if t_cut >= lam - 10 * tol else 'multiple_minimizers'
    component = getattr(getattr(family, 'component', None), 'id', -1)
    return CutRecord(float(np.atleast_1d(z)[0]), float(t_cut), reason, ray.position(t_cut),
                     ray.velocity(t_cut), float(lam), component, float(g0))


def cut_records(solver: LaxOleinikSolver, family: RayFamily, zs: Sequence, t_max: float,
                threads: Optional[int] = None) -> List[CutRecord]:
    return WorkerPool(threads=threads).map(list(zs), lambda z: cut_time(solver, family, z, t_max),
                                           label='cut rays')


def _sheet_crossing(manifold, ray, S_points, hit_t, hit_x, delta, t_lo, t_hi):
    """Refine a delta-entry by intersecting the ray with a quadratic fit of the nearby sheet"""
    if manifold.ambient_dim != 2 or len(S_points) < 3:
        return hit_t
    d = manifold.chart_difference(hit_x[None, :], S_points)
    near = np.argsort(np.linalg.norm(d, axis=1))[:8]
    local = d[near]
    centre = local.mean(axis=0)
    _, _, vt = np.linalg.svd(local - centre)
    tau, nrm = vt[0], vt[1]
    s = (local - centre) @ tau
    h = (local - centre) @ nrm
    coef = np.polyfit(s, h, min(2, len(s) - 1))

    def signed(t):
        rel = manifold.chart_difference(hit_x, ray.position(t)) - centre
        return rel @ nrm - np.polyval(coef, rel @ tau)

    ts = np.linspace(t_lo, t_hi, 41)
    vals = np.array([signed(t) for t in ts])
    for i in range(len(ts) - 1):
        if vals[i] == 0:
            return float(ts[i])
        if vals[i] * vals[i + 1] < 0:
            return float(brentq(signed, ts[i], ts[i + 1], xtol=1e-12))
    return hit_t


def rho_S(family: RayFamily, z, S, t_max: float, delta: Optional[float] = None,
          solver: Optional[LaxOleinikSolver] = None) -> float:
    """
    First t where the ray z meets S; np.inf when it never does

    Args:
        family: Characteristic family
        z: Ray coordinate
        S: SingularSet or (M, ambient) point cloud
        t_max: Integration horizon
        delta: Proximity radius (2 grid spacings of S by default)
        solver: Solver whose cut predicate refines the entry; a SingularSet supplies its own

    Returns:
        rho_S(z)

    A SingularSet entry is refined by bisection on #Q_p >= 2 (cut_time); a bare
    point cloud falls back to a quadratic fit of the nearby sheet.
    """
    manifold = family.manifold
    if solver is None and isinstance(S, SingularSet):
        solver = S.solver
    points = S.points if isinstance(S, SingularSet) else np.asarray(S, dtype=float)
    if delta is None:
        delta = 2.0 * S.spacing if isinstance(S, SingularSet) else 1e-2
    if len(points) == 0:
        return np.inf
    if manifold.periods is not None:
        tree = cKDTree(manifold.wrap(points), boxsize=manifold.periods)
    else:
        tree = cKDTree(points)
    ray = family.trace(z, t_max)
    ts = np.linspace(0.0, ray.t_end, max(int(math.ceil(2 * ray.t_end / delta)) + 1, 50))
    X = ray.positions(ts)
    dist, _ = tree.query(manifold.wrap(X) if manifold.periods is not None else X)
    hit = np.nonzero(dist < delta)[0]
    hit = hit[ts[hit] > 0.5 * delta] if len(hit) else hit
    if not len(hit):
        return np.inf
    t_enter = ts[hit[0]]
    if solver is not None:
        return cut_time(solver, family, z, min(ray.t_end, t_enter + 3 * delta)).t_cut
    t_lo = max(0.0, t_enter - 2 * delta)
    t_hi = min(ray.t_end, t_enter + 2 * delta)
    return _sheet_crossing(manifold, ray, points, t_enter, ray.position(t_enter), delta, t_lo, t_hi)


def characteristics_solution(family: RayFamily, zs: Sequence, ts: Sequence,
                             S=None, t_max: Optional[float] = None):
    """
    u by characteristics: u(F(t, z)) = g(z) + t for t below rho_S(z)

    Returns:
        (points, values, z, t) arrays of the retained samples
    """
    ts = np.asarray(ts, dtype=float)
    t_max = t_max or float(ts.max())
    pts, vals, zz, tt = [], [], [], []
    for z in zs:
        limit = np.inf if S is None else rho_S(family, z, S, t_max)
        ray = family.trace(z, t_max)
        keep = ts[(ts < limit) & (ts <= ray.t_end)]
        if not len(keep):
            continue
        pts.append(ray.positions(keep))
        vals.append(family.initial_value(z) + keep)
        zz.append(np.full(len(keep), float(np.atleast_1d(z)[0])))
        tt.append(keep)
    if not pts:
        return np.zeros((0, family.manifold.ambient_dim)), np.zeros(0), np.zeros(0), np.zeros(0)
    return np.concatenate(pts), np.concatenate(vals), np.concatenate(zz), np.concatenate(tt)


# Compatibility, reduction and semiconcavity -----------------------------


@dataclass
class CompatibilityReport:
    ok: bool
    margin: float
    worst_pair: Optional[Tuple[Any, Any]] = None

    def to_dict(self) -> dict:
        return {'ok': self.ok, 'margin': self.margin}


def check_compatibility(manifold: ChartedManifold, data: BoundaryData, samples: int = 256) -> CompatibilityReport:
    """max |g(p) - g(q)| / d(p, q) over sampled boundary pairs; ok iff below 1 - 1e-6"""
    components = data.components or manifold.boundary_components
    pts, vals, tags = [], [], []
    for comp in components:
        s = comp.parameters(samples)
        pts.append(comp.point(s))
        vals.append(data.value(comp.id, s))
        tags.extend((comp.id, float(x)) for x in s)
    P = np.concatenate(pts)
    G = np.concatenate(vals)
    D = manifold.distance_matrix(P, P)
    dG = np.abs(G[:, None] - G[None, :])
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(D > 1e-12, dG / D, 0.0)
    k = int(np.argmax(ratio))
    i, j = divmod(k, len(P))
    margin = float(ratio[i, j])
    return CompatibilityReport(margin < 1.0 - 1e-6, margin, (tags[i], tags[j]))


@dataclass
class ReducedProblem:
    """Lambda curves and shift c with u + c = d(Lambda, .)"""
    curves: List[np.ndarray]
    shift: float
    depth: float
    solver: LaxOleinikSolver

    def distance(self, points) -> np.ndarray:
        return self.solver.evaluate(points)[0]

    def verify(self, solver: LaxOleinikSolver, points) -> float:
        """max |u + c - d(Lambda, .)| over points"""
        points = np.atleast_2d(points)
        u = solver.evaluate(points)[0]
        return float(np.nanmax(np.abs(u + self.shift - self.distance(points))))


def _extended(manifold: ChartedManifold) -> ChartedManifold:
    if isinstance(manifold, EuclideanDomain):
        return EuclideanDomain('plane', metric=manifold.metric)
    if isinstance(manifold, RoundSphere):
        return RoundSphere(manifold.radius)
    return manifold


def _orientation_flips(front: np.ndarray, reference: np.ndarray) -> bool:
    seg = np.roll(front, -1, axis=0) - front
    return bool(np.any(np.einsum('ij,ij->i', seg, reference) <= 0))


def extend_and_reduce(manifold: ChartedManifold, data: BoundaryData, samples: int = 512,
                      levels: int = 20) -> ReducedProblem:
    """
    Shift g to be nonnegative and trace backward characteristics to its zero level

    Args:
        manifold: Manifold with boundary
        data: Boundary data
        samples: Characteristics per component
        levels: Depth levels at which the backward front is checked for crossings

    Returns:
        ReducedProblem
    """
    components = manifold.boundary_components
    all_s = [c.parameters(samples) for c in components]
    g_all = np.concatenate([data.value(c.id, s) for c, s in zip(components, all_s)])
    g_min, g_max = float(g_all.min()), float(g_all.max())
    shift = max(0.0, -g_min)
    depth = g_max + shift + 0.1 * (g_max - g_min)
    extended = _extended(manifold)

    curves, new_components = [], []
    for comp, s in zip(components, all_s):
        family = BoundaryRayFamily(manifold, comp, data.g_for(comp.id), lambda x, c=comp.id: data.derivative(c, x))
        gt = data.value(comp.id, s) + shift
        rays = []
        for si in s:
            x0 = comp.point(si)
            v0 = family.characteristic(si)
            rays.append(flow(extended, x0, -v0, max(depth, 1e-9), z=si) if depth > 0 else None)
        reference = np.roll(comp.point(s), -1, axis=0) - comp.point(s)
        if depth > 0:
            for level in np.linspace(depth / levels, depth, levels):
                front = np.array([r.position(level) for r in rays])
                if comp.closed and _orientation_flips(front, reference):
                    raise ReductionError(f"backward characteristics of component {comp.id} cross",
                                         depth=float(level))
        lam = np.array([r.position(g) if r is not None and g > 0 else comp.point(si)
                        for r, g, si in zip(rays, gt, s)])
        curves.append(lam)
        if comp.closed:
            knots = np.append(s, s[0] + comp.period)
            spline = CubicSpline(knots, np.vstack([lam, lam[:1]]), bc_type='periodic')
            curve = lambda x, sp=spline, c=comp, k0=s[0]: sp(np.mod(np.asarray(x) - k0, c.period) + k0)
            new_components.append(BoundaryComponent(comp.id, curve, comp.period))
        else:
            spline = CubicSpline(s, lam)
            new_components.append(BoundaryComponent(comp.id, spline, None, param_range=comp.param_range))

    reduced = BoundaryData(components=new_components)
    solver = LaxOleinikSolver(extended, reduced)
    logger.info("Reduced problem: shift c=%.6g, checked depth %.6g", shift, depth)
    return ReducedProblem(curves, shift, depth, solver)


@dataclass
class SemiconcavityReport:
    max_defect: float
    constant: float


def semiconcavity_check(solver: LaxOleinikSolver, segments: Sequence[Tuple[Any, Any]],
                        lambdas: Optional[Sequence[float]] = None) -> SemiconcavityReport:
    """Largest defect lu(x)+(1-l)u(y)-u(lx+(1-l)y) and the smallest linear-modulus constant C"""
    lambdas = np.linspace(0.1, 0.9, 9) if lambdas is None else np.asarray(lambdas, dtype=float)
    worst, C = -np.inf, 0.0
    for x, y in segments:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        mids = np.array([lam * x + (1 - lam) * y for lam in lambdas])
        u = solver.evaluate(np.vstack([x, y, mids]))[0]
        defect = lambdas * u[0] + (1 - lambdas) * u[1] - u[2:]
        worst = max(worst, float(defect.max()))
        scale = lambdas * (1 - lambdas) * float(np.sum((x - y) ** 2))
        C = max(C, float(np.max(defect / scale)))
    return SemiconcavityReport(worst, max(0.0, C))


# Export -----------------------------------------------------------------


def solution_rows(solution: ViscositySolution):
    """(header, rows) with columns p1..pn, u, n_minimizers for in-domain samples"""
    n = solution.grid.points.shape[1]
    header = [f'p{i + 1}' for i in range(n)] + ['u', 'n_minimizers']
    rows = [[*solution.grid.points[i], solution.u[i], len(solution.records[i])]
            for i in np.nonzero(solution.grid.mask)[0]]
    return header, rows


def singular_set_to_json(S: SingularSet) -> dict:
    return {
        'spacing': S.spacing,
        'points': [{'p': [float(v) for v in p], 'kind': k,
                    'R_p': [[float(v) for v in r.arrival] for r in recs]}
                   for p, k, recs in zip(S.points, S.kinds, S.records)],
    }

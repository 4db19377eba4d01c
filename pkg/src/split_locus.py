"""
Balanced split loci: construction from boundary constants and torus offsets,
the split and balanced checks, point classes and the current T
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .conjugate_analysis import conjugacy_order
from .errors import CompatibilityError, OrientationError
from .geometry.manifolds import ChartedManifold, FlatTorus
from .hjbvp_solver import (BoundaryData, LaxOleinikSolver, MinimizerRecord, PointSource, SampleGrid,
                           SingularSet, check_compatibility, cut_records, lax_oleinik_solve,
                           ray_family_for, singular_set_extract)
from .utils.plotting import render_locus_svg
from .utils.worker_pool import WorkerPool

logger = logging.getLogger(__name__)

CLEAVE = 'CLEAVE'
EDGE = 'EDGE'
DEGENERATE_CLEAVE = 'DEGENERATE_CLEAVE'
CROSSING = 'CROSSING'
REMAINDER = 'REMAINDER'
POINT_CLASSES = (CLEAVE, EDGE, DEGENERATE_CLEAVE, CROSSING, REMAINDER)

CHAIN_ANGLE = math.radians(30.0)
FIT_NEIGHBOURS = 8
BALANCE_DELTA = 1e-3
BALANCE_TOL = 5e-3
FAN_DIRECTIONS = 16


@dataclass
class SplitSample:
    """A point of S with R_p, the h value carried by each vector and its conjugacy order"""
    point: np.ndarray
    arrivals: List[np.ndarray]
    h_values: List[float]
    conjugate_orders: List[int] = field(default_factory=list)
    labels: List[Tuple[int, int]] = field(default_factory=list)
    kind: str = 'edge'
    cls: str = REMAINDER

    @property
    def multiplicity(self) -> int:
        return len(self.arrivals)

    def side_key(self) -> frozenset:
        return frozenset(self.labels)

    def sides(self, normal: np.ndarray) -> Tuple[Optional[int], Optional[int]]:
        """Indices of the vectors crossing S along +normal and along -normal"""
        dots = np.array([X @ normal for X in self.arrivals])
        plus = int(np.argmax(dots)) if np.any(dots > 0) else None
        minus = int(np.argmin(dots)) if np.any(dots < 0) else None
        return plus, minus


@dataclass
class Chain:
    indices: List[int]
    closed: bool


@dataclass
class SplitLocusModel:
    parameter: Dict[str, List[float]]
    manifold: ChartedManifold
    solver: LaxOleinikSolver
    samples: List[SplitSample]
    spacing: float
    from_solver: bool = True
    components: List[Chain] = field(default_factory=list)

    @property
    def points(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, self.manifold.ambient_dim))
        return np.array([s.point for s in self.samples])

    def tree(self, points: Optional[np.ndarray] = None) -> cKDTree:
        pts = self.points if points is None else points
        if self.manifold.periods is not None:
            return cKDTree(self.manifold.wrap(pts), boxsize=self.manifold.periods)
        return cKDTree(pts)

    def histogram(self) -> Dict[str, int]:
        counts = {c: 0 for c in POINT_CLASSES}
        for s in self.samples:
            counts[s.cls] += 1
        return counts


# Construction -------------------------------------------------------------


def _conjugacy_orders(solver: LaxOleinikSolver, samples: List[SplitSample],
                      records: List[List[MinimizerRecord]], threads: Optional[int]) -> None:
    jobs = [(i, k, r) for i, recs in enumerate(records) for k, r in enumerate(recs) if r.t > 1e-9]

    def order(job):
        _, _, rec = job
        family = ray_family_for(solver, None if solver.is_point_source else rec.component)
        return conjugacy_order(family.trace(rec.s, rec.t), rec.t)

    orders = WorkerPool(threads=threads).map(jobs, order, task_kind='ray', label='conjugacy flags')
    for s in samples:
        s.conjugate_orders = [0] * s.multiplicity
    for (i, k, _), o in zip(jobs, orders):
        samples[i].conjugate_orders[k] = int(o)


def model_from_singular_set(parameter: dict, solver: LaxOleinikSolver, S: SingularSet,
                            conjugacy: bool = True, threads: Optional[int] = None) -> SplitLocusModel:
    """Attach R_p, h values and conjugacy orders to extracted singular points, then classify"""
    samples = []
    for point, kind, recs in zip(S.points, S.kinds, S.records):
        samples.append(SplitSample(np.asarray(point), [np.asarray(r.arrival) for r in recs],
                                   [solver.h_value(r) for r in recs], [0] * len(recs),
                                   [r.label for r in recs], kind))
    if conjugacy and samples:
        _conjugacy_orders(solver, samples, S.records, threads)
    for s in samples:
        if s.kind == 'conjugate':
            s.conjugate_orders = [max(1, o) for o in s.conjugate_orders]
    model = SplitLocusModel(parameter, solver.manifold, solver, samples, S.spacing)
    classify_points(model)
    model.components = chain_components(model)
    logger.info("Split locus %s: %d samples, %s", parameter, len(samples), model.histogram())
    return model


def build_split_locus_from_constants(manifold: ChartedManifold, data: BoundaryData, a: Sequence[float],
                                     resolution: int = 64, conjugacy: bool = True,
                                     threads: Optional[int] = None) -> SplitLocusModel:
    """
    Singular set of the boundary problem with data g + a

    Args:
        manifold: Manifold with boundary
        data: Boundary data g
        a: One constant per boundary component
        resolution: Sample grid resolution
        conjugacy: Compute conjugacy orders of every R_p vector
        threads: Worker threads

    Returns:
        SplitLocusModel

    Raises:
        CompatibilityError: If g + a is not compatible
    """
    shifted = data.with_offsets({c.id: float(v) for c, v in zip(manifold.boundary_components, a)})
    report = check_compatibility(manifold, shifted)
    if not report.ok:
        raise CompatibilityError(f"g + a is not compatible (margin {report.margin:.6g})", margin=report.margin)
    solution = lax_oleinik_solve(manifold, shifted, SampleGrid(manifold, resolution), threads=threads)
    S = singular_set_extract(solution)
    return model_from_singular_set({'a': [float(v) for v in a]}, solution.solver, S, conjugacy, threads)


def torus_margin(torus: FlatTorus, b) -> float:
    """max |<b, k - k'>| / |(k - k') * periods| over lattice translates; compatible below 1"""
    b = np.asarray(b, dtype=float)
    K = torus.lattice
    dk = (K[:, None, :] - K[None, :, :]).reshape(-1, 2)
    dk = dk[np.any(dk != 0, axis=1)]
    return float(np.max(np.abs(dk @ b) / np.linalg.norm(dk * torus.periods, axis=1)))


def build_torus_family(b, resolution: int = 64, p=(0.0, 0.0), periods=(1.0, 1.0),
                       conjugacy: bool = True, threads: Optional[int] = None) -> SplitLocusModel:
    """
    Split locus of the distance from p with per-translate offsets <b, (m, n)>

    Raises:
        CompatibilityError: If |b| is too large for compatibility on the cover
    """
    torus = FlatTorus(periods)
    margin = torus_margin(torus, b)
    if margin >= 1.0 - 1e-6:
        raise CompatibilityError(f"torus offset b={list(b)} is not compatible (margin {margin:.6g})",
                                 margin=margin)
    source = PointSource(np.asarray(p, dtype=float), np.asarray(b, dtype=float))
    solution = lax_oleinik_solve(torus, source, SampleGrid(torus, resolution), threads=threads)
    S = singular_set_extract(solution)
    return model_from_singular_set({'b': [float(v) for v in b]}, solution.solver, S, conjugacy, threads)


def build_point_source_locus(manifold: ChartedManifold, p, resolution: int = 64, rays: int = 64,
                             t_max: Optional[float] = None, conjugacy: bool = True,
                             threads: Optional[int] = None) -> SplitLocusModel:
    """Cut locus of a point, with conjugate cut points from a fan of rays"""
    solution = lax_oleinik_solve(manifold, PointSource(np.asarray(p, dtype=float)),
                                 SampleGrid(manifold, resolution), threads=threads)
    solver = solution.solver
    if t_max is None:
        semiaxes = getattr(manifold, 'semiaxes', None)
        t_max = (1.5 * np.pi * float(np.max(semiaxes)) if semiaxes is not None
                 else 2.0 * float(np.max(solution.grid.h)) * resolution)
    family = ray_family_for(solver)
    records = cut_records(solver, family, 2 * np.pi * np.arange(rays) / rays, t_max, threads)
    S = singular_set_extract(solution, records)
    return model_from_singular_set({'p': [float(v) for v in p]}, solver, S, conjugacy, threads)


def circle_locus(manifold: ChartedManifold, center, radius: float, data: BoundaryData,
                 count: int = 256, gap: Optional[Tuple[float, float]] = None) -> SplitLocusModel:
    """
    A circle S with R_p from the nearest characteristic of each boundary component

    Args:
        manifold: Manifold (the annulus)
        center: Circle center
        radius: Circle radius
        data: Boundary data used for R_p and h
        count: Samples on the circle
        gap: Optional angular interval (start, end) removed from the circle

    Returns:
        SplitLocusModel built from the constructed set
    """
    center = np.asarray(center, dtype=float)
    angles = 2 * np.pi * np.arange(count) / count
    if gap is not None:
        lo, hi = gap
        angles = angles[~((angles >= lo) & (angles <= hi))]
    solver = LaxOleinikSolver(manifold, data)
    samples = []
    for ang in angles:
        p = center + radius * np.array([np.cos(ang), np.sin(ang)])
        per_component = {}
        for rec in solver.local_minima(p):
            if rec.component not in per_component:
                per_component[rec.component] = rec
        recs = list(per_component.values())
        samples.append(SplitSample(p, [r.arrival for r in recs], [solver.h_value(r) for r in recs],
                                   [0] * len(recs), [r.label for r in recs]))
    model = SplitLocusModel({'center': list(map(float, center)), 'radius': [float(radius)]},
                            manifold, solver, samples, 2 * np.pi * radius / count, from_solver=False)
    classify_points(model)
    model.components = chain_components(model)
    return model


# Classification -----------------------------------------------------------


def _affine_rank(vectors: np.ndarray) -> int:
    if len(vectors) < 2:
        return 0
    return int(np.linalg.matrix_rank(vectors[1:] - vectors[0], tol=1e-6))


def classify_points(model: SplitLocusModel) -> Dict[str, int]:
    """Assign CLEAVE / EDGE / DEGENERATE_CLEAVE / CROSSING / REMAINDER and return the histogram"""
    metric = model.manifold.metric
    for s in model.samples:
        orders = s.conjugate_orders or [0] * s.multiplicity
        n = s.multiplicity
        if n == 2 and all(o == 0 for o in orders):
            s.cls = CLEAVE
        elif n == 1 and orders[0] == 1:
            s.cls = EDGE
        elif n == 2 and max(orders) == 1:
            s.cls = DEGENERATE_CLEAVE
        elif n >= 3 and all(o == 0 for o in orders):
            duals = np.array([metric.dual(s.point, X) for X in s.arrivals])
            s.cls = CROSSING if _affine_rank(duals) >= 2 else REMAINDER
        else:
            s.cls = REMAINDER
    return model.histogram()


# Geometry helpers -----------------------------------------------------------


def _local_frame(manifold: ChartedManifold, p: np.ndarray) -> np.ndarray:
    return manifold.tangent_basis(p)


def fitted_tangent(model: SplitLocusModel, index: int, tree: Optional[cKDTree] = None) -> Optional[np.ndarray]:
    """Unit tangent of S at a sample from a quadratic fit through its nearest samples"""
    pts = model.points
    if len(pts) < 3:
        return None
    tree = tree or model.tree()
    p = pts[index]
    query = model.manifold.wrap(p) if model.manifold.periods is not None else p
    _, idx = tree.query(query, k=min(FIT_NEIGHBOURS, len(pts)))
    E = _local_frame(model.manifold, p)
    local = model.manifold.chart_difference(p, pts[np.atleast_1d(idx)]) @ E
    centred = local - local.mean(axis=0)
    _, _, vt = np.linalg.svd(centred)
    t0, n0 = vt[0], vt[1]
    s = local @ t0
    h = local @ n0
    if np.ptp(s) < 1e-12:
        return None
    coef = np.polyfit(s, h, min(2, len(s) - 1))
    slope = np.polyval(np.polyder(coef), 0.0)
    tau = E @ (t0 + slope * n0)
    return tau / np.linalg.norm(tau)


def _normal_2d(tau: np.ndarray) -> np.ndarray:
    return np.array([tau[1], -tau[0]])


def _tangent_normal(model: SplitLocusModel, p: np.ndarray, tau: np.ndarray) -> np.ndarray:
    if model.manifold.ambient_dim == 2:
        return _normal_2d(tau)
    return np.cross(model.manifold.normal(p), tau)


# Chaining -------------------------------------------------------------------


def chain_components(model: SplitLocusModel, max_angle: float = CHAIN_ANGLE,
                     reach: float = 4.0) -> List[Chain]:
    """
    Order cleave samples into polylines by greedy nearest-neighbour chaining

    Args:
        model: Split locus model
        max_angle: Largest turn between consecutive segments
        reach: Neighbour radius in sample spacings

    Returns:
        Chains of sample indices; closed when the ends meet
    """
    members = [i for i, s in enumerate(model.samples) if s.cls in (CLEAVE, DEGENERATE_CLEAVE)]
    if len(members) < 2:
        return []
    m = model.manifold
    pts = model.points[members]
    keys = [model.samples[i].side_key() for i in members]
    tree = model.tree(pts)
    radius = reach * model.spacing
    near = 0.3 * model.spacing
    cos_gate = math.cos(max_angle)
    used = np.zeros(len(members), dtype=bool)

    def neighbours(k):
        q = m.wrap(pts[k]) if m.periods is not None else pts[k]
        return [j for j in tree.query_ball_point(q, radius) if not used[j] and keys[j] == keys[k]]

    def absorb(k):
        for j in neighbours(k):
            if np.linalg.norm(m.chart_difference(pts[k], pts[j])) < near:
                used[j] = True

    def heading(chain):
        back = chain[-min(len(chain), 3)]
        d = m.chart_difference(pts[back], pts[chain[-1]])
        n = np.linalg.norm(d)
        return d / n if n > 0 else None

    def grow(chain):
        while True:
            end = chain[-1]
            direction = heading(chain) if len(chain) > 1 else None
            best, best_dist = None, np.inf
            for j in neighbours(end):
                d = m.chart_difference(pts[end], pts[j])
                dist = float(np.linalg.norm(d))
                if dist < near:
                    continue
                if direction is not None and d @ direction < cos_gate * dist:
                    continue
                if dist < best_dist:
                    best, best_dist = j, dist
            if best is None:
                return
            used[best] = True
            chain.append(best)
            absorb(best)

    chains = []
    for start in range(len(members)):
        if used[start]:
            continue
        used[start] = True
        absorb(start)
        chain = [start]
        grow(chain)
        chain.reverse()
        grow(chain)
        closed = False
        if len(chain) >= 3:
            gap = m.chart_difference(pts[chain[-1]], pts[chain[0]])
            dist = float(np.linalg.norm(gap))
            direction = heading(chain)
            closed = dist <= radius and direction is not None and gap @ direction >= cos_gate * dist
        chains.append(Chain([members[k] for k in chain], closed))
    return [c for c in chains if len(c.indices) >= 2]


# Split and balanced checks ------------------------------------------------


@dataclass
class SplitReport:
    passed: bool
    checked: int
    failures: List[Tuple[List[float], int]]

    def to_dict(self) -> dict:
        return {'passed': self.passed, 'checked': self.checked,
                'failures': [{'p': p, 'rays': c} for p, c in self.failures]}


def _path_points(solver: LaxOleinikSolver, record: MinimizerRecord, q: np.ndarray, count: int = 200):
    m = solver.manifold
    if m.metric.flat:
        start = solver.source_point(record)
        lam = np.linspace(0.0, 1.0, count)[:, None]
        return start + lam * (q - start)
    family = ray_family_for(solver, None if solver.is_point_source else record.component)
    ray = family.trace(record.s, record.t)
    return ray.positions(np.linspace(0.0, record.t, count))


def verify_splits(model: SplitLocusModel, check_resolution: int = 16, S: Optional[np.ndarray] = None,
                  delta: Optional[float] = None) -> SplitReport:
    """
    Count the characteristics reaching each grid point of M minus S before they meet S

    Args:
        model: Split locus model (its solver supplies the characteristics)
        check_resolution: Resolution of the grid of checked points
        S: Optional explicit point cloud replacing the model samples
        delta: Proximity radius for meeting S (model spacing by default)

    Returns:
        SplitReport; passed when every grid point is reached exactly once
    """
    m = model.manifold
    S_points = model.points if S is None else np.asarray(S, dtype=float)
    delta = delta or model.spacing
    tree = model.tree(S_points)
    grid = SampleGrid(m, check_resolution)
    targets = grid.points[grid.mask]

    def wrapped(x):
        return m.wrap(x) if m.periods is not None else x

    far, _ = tree.query(wrapped(targets))
    targets = targets[far > 2 * delta]
    failures = []
    for q in targets:
        count = 0
        for rec in model.solver.local_minima(q):
            path = _path_points(model.solver, rec, q)
            d, _ = tree.query(wrapped(path))
            if np.all(d >= delta):
                count += 1
        if count != 1:
            failures.append(([float(v) for v in q], count))
    logger.info("Split check: %d points, %d failures", len(targets), len(failures))
    return SplitReport(not failures, len(targets), failures)


@dataclass
class BalancedReport:
    balanced: bool
    worst_defect: float
    quotient_error: Optional[float]
    inconclusive: bool
    defects: List[float]

    def to_dict(self) -> dict:
        return {'balanced': self.balanced, 'worst_defect': self.worst_defect,
                'quotient_error': self.quotient_error, 'inconclusive': self.inconclusive}


def _tangent_directions(m: ChartedManifold, p: np.ndarray, angles: np.ndarray, frame=None) -> np.ndarray:
    E = m.tangent_basis(p) if frame is None else frame
    return np.stack([E @ np.array([np.cos(a), np.sin(a)]) for a in angles])


def verify_balanced(model: SplitLocusModel, tol: float = BALANCE_TOL, delta: float = BALANCE_DELTA,
                    fan: int = FAN_DIRECTIONS) -> BalancedReport:
    """
    Discrete balanced check: w_inf(v) = max over duals w of R_p of w(v)

    Approach directions are the two fitted tangents and a half-fan on each
    side of S. Limit vectors come from the solver one step delta back along
    the approach, or from the side they cross S on for constructed sets.
    The difference quotient of u is compared with w_inf(v) for solver models.

    Returns:
        BalancedReport with the worst defect over all samples
    """
    m = model.manifold
    metric = m.metric
    tree = model.tree()
    defects, quotient = [], []
    inconclusive = False
    for index, s in enumerate(model.samples):
        if s.multiplicity < 2:
            continue
        p = s.point
        q = m.wrap(p) if m.periods is not None else p
        if len(tree.query_ball_point(q, 4 * model.spacing)) < 3:
            inconclusive = True
            continue
        duals = np.array([metric.dual(p, X) for X in s.arrivals])
        worst = 0.0
        tau = fitted_tangent(model, index, tree) if s.multiplicity == 2 else None
        if tau is not None:
            for v in (tau, -tau):
                values = duals @ v
                worst = max(worst, float(values.max() - values.min()))
            normal = _tangent_normal(model, p, tau)
            E = np.stack([normal, tau], axis=1)
            offsets = -np.pi / 2 + np.pi * (np.arange(fan) + 0.5) / fan
            approach = np.concatenate([_tangent_directions(m, p, offsets, E),
                                       _tangent_directions(m, p, offsets + np.pi, E)])
        elif model.from_solver:
            approach = _tangent_directions(m, p, 2 * np.pi * np.arange(2 * fan) / (2 * fan))
        else:
            inconclusive = True
            continue

        if model.from_solver:
            back = m.project(p[None, :] - delta * approach)
            u_back, recs = model.solver.evaluate(back)
            u_p = model.solver.value(p)
            for v, x_back, ub, r in zip(approach, back, u_back, recs):
                if not r:
                    continue
                w_inf = metric.dual(p, r[0].arrival)
                values = duals @ v
                worst = max(worst, float(values.max() - w_inf @ v))
                if m.has_oracle:
                    d = m.distance(x_back, p)
                    quotient.append(abs((u_p - ub) / d - float(w_inf @ v)))
        else:
            for v in approach:
                dots = np.array([X @ normal for X in s.arrivals])
                side = np.sign(v @ normal)
                match = np.nonzero(np.sign(dots) == side)[0]
                if not len(match):
                    continue
                w_inf = duals[match[0]]
                values = duals @ v
                worst = max(worst, float(values.max() - w_inf @ v))
        defects.append(worst)

    worst_defect = float(max(defects)) if defects else 0.0
    q_err = float(max(quotient)) if quotient else None
    balanced = worst_defect <= tol and (q_err is None or q_err <= tol)
    logger.info("Balanced check: worst defect %.3g over %d samples", worst_defect, len(defects))
    return BalancedReport(balanced, worst_defect, q_err, inconclusive, defects)


def kernel_alignment(model: SplitLocusModel) -> float:
    """Largest angle between fitted cleave tangents and ker(w1 - w2)"""
    tree = model.tree()
    worst = 0.0
    for i, s in enumerate(model.samples):
        if s.cls != CLEAVE:
            continue
        tau = fitted_tangent(model, i, tree)
        if tau is None:
            continue
        w = model.manifold.metric.dual(s.point, s.arrivals[0]) - model.manifold.metric.dual(s.point, s.arrivals[1])
        worst = max(worst, float(np.arcsin(min(1.0, abs(w @ tau) / np.linalg.norm(w)))))
    return worst


# Currents -------------------------------------------------------------------


def _segments(model: SplitLocusModel, chain: Chain):
    m = model.manifold
    idx = chain.indices + ([chain.indices[0]] if chain.closed else [])
    for i, j in zip(idx[:-1], idx[1:]):
        a, b = model.samples[i], model.samples[j]
        step = m.chart_difference(a.point, b.point)
        yield a, b, a.point + 0.5 * step, step


def _h_jump(sample: SplitSample, normal: np.ndarray) -> Optional[float]:
    plus, minus = sample.sides(normal)
    if plus is None or minus is None:
        return None
    return sample.h_values[plus] - sample.h_values[minus]


def current_T_eval(model: SplitLocusModel, phi: Callable[[np.ndarray], np.ndarray],
                   chains: Optional[List[Chain]] = None) -> float:
    """
    T(phi): sum over cleave polylines of (h+ - h-) phi(tau) ds

    The + side is where the crossing vector X has X . n > 0 with n = (tau_y, -tau_x),
    so the value does not depend on the chain direction.

    Raises:
        OrientationError: On surfaces in R^3 (no oriented polyline normal)
    """
    if model.manifold.ambient_dim != 2:
        raise OrientationError("the discrete current is only defined for polylines in the plane")
    chains = model.components if chains is None else chains
    total = 0.0
    for chain in chains:
        for a, b, mid, step in _segments(model, chain):
            length = float(np.linalg.norm(step))
            if length == 0:
                continue
            normal = _normal_2d(step / length)
            jumps = [j for j in (_h_jump(a, normal), _h_jump(b, normal)) if j is not None]
            if not jumps:
                raise OrientationError("a cleave segment has no vectors on one of its sides")
            total += float(np.mean(jumps)) * float(np.asarray(phi(mid)) @ step)
    return total


def boundary_residual(model: SplitLocusModel, sigma: Callable[[np.ndarray], float],
                      chains: Optional[List[Chain]] = None, h: float = 1e-6) -> float:
    """dT(sigma) = T(d sigma) with d sigma by central differences"""
    def d_sigma(x):
        x = np.asarray(x, dtype=float)
        e = np.eye(len(x)) * h
        return np.array([(sigma(x + e[i]) - sigma(x - e[i])) / (2 * h) for i in range(len(x))])

    return current_T_eval(model, d_sigma, chains)


def chain_h_jumps(model: SplitLocusModel) -> List[np.ndarray]:
    """h+ - h- at every sample of each chain, oriented by the chain"""
    out = []
    for chain in model.components:
        values = []
        for a, _, _, step in _segments(model, chain):
            n = float(np.linalg.norm(step))
            if n > 0:
                j = _h_jump(a, _normal_2d(step / n))
                if j is not None:
                    values.append(j)
        out.append(np.array(values))
    return out


def hyperbola_residual(model: SplitLocusModel) -> float:
    """Largest | |q-p-k| - |q-p-k'| - <b, k'-k> | over torus cleave samples"""
    solver = model.solver
    torus = model.manifold
    b = np.asarray(model.parameter['b'], dtype=float)
    worst = 0.0
    for s in model.samples:
        if s.cls != CLEAVE:
            continue
        (_, k1), (_, k2) = s.labels[:2]
        d1 = np.linalg.norm(s.point - solver.p - torus.translates[k1])
        d2 = np.linalg.norm(s.point - solver.p - torus.translates[k2])
        worst = max(worst, abs(d1 - d2 - float(b @ (torus.lattice[k2] - torus.lattice[k1]))))
    return worst


def mean_radius(model: SplitLocusModel, center=(0.0, 0.0)) -> float:
    pts = np.array([s.point for s in model.samples if s.cls == CLEAVE])
    return float(np.mean(np.linalg.norm(pts - np.asarray(center), axis=1)))


def hausdorff_distance(a: np.ndarray, b: np.ndarray, manifold: Optional[ChartedManifold] = None) -> float:
    """Symmetric Hausdorff distance between two sample clouds"""
    if manifold is not None and manifold.periods is not None:
        ta = cKDTree(manifold.wrap(a), boxsize=manifold.periods)
        tb = cKDTree(manifold.wrap(b), boxsize=manifold.periods)
        return float(max(tb.query(manifold.wrap(a))[0].max(), ta.query(manifold.wrap(b))[0].max()))
    return float(max(cKDTree(b).query(a)[0].max(), cKDTree(a).query(b)[0].max()))


# Export ---------------------------------------------------------------------


def model_to_json(model: SplitLocusModel) -> dict:
    return {
        'parameter': model.parameter,
        'histogram': model.histogram(),
        'samples': [{
            'p': [float(v) for v in s.point],
            'class': s.cls,
            'R_p': [[float(v) for v in X] for X in s.arrivals],
            'h_sides': [float(h) for h in s.h_values],
            'conjugate_orders': list(s.conjugate_orders),
        } for s in model.samples],
        'components': [{'indices': c.indices, 'closed': c.closed} for c in model.components],
    }


def render_model_svg(model: SplitLocusModel, path) -> None:
    polylines = []
    for chain in model.components:
        line = model.points[chain.indices]
        polylines.append(np.vstack([line, line[:1]]) if chain.closed else line)
    boundary = [c.point(c.parameters(256)) for c in model.manifold.boundary_components]
    render_locus_svg(path, model.points, [s.cls for s in model.samples], polylines, boundary,
                     title=f"split locus {model.parameter}")

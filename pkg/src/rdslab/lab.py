"""End-to-end experiments: Cesaro averages, stationarity residuals,
equidistribution traces, orbit classification and the filtered norm trace."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .admissible import AdmissibleMeasure, convolve, filtered_pipeline, project
from .dynamics import Constants, RandomSystem, enumerate_word_array, generator
from .seminorm import RESOLUTION_FACTOR, GridDensity, PointCloudMeasure, ac_diagnostic, ball_masses, midpoint_grid, rho_norm
from .torus import wrap_array

REBIN_OFFSETS = (0.31, 0.42)


def _as_cloud(nu, samples_per_unit_length=1000.0) -> PointCloudMeasure:
    if isinstance(nu, PointCloudMeasure):
        return nu
    if isinstance(nu, AdmissibleMeasure):
        return project(nu, samples_per_unit_length)
    if isinstance(nu, GridDensity):
        return nu.to_cloud()
    p = np.asarray(nu, dtype=float).reshape(1, 2)
    return PointCloudMeasure(p, [1.0])


def _apply_letters(diffeos, letters, pts):
    out = np.empty_like(pts)
    for i in np.unique(letters):
        sel = letters == i
        out[sel] = diffeos[i].lift_eval(pts[sel])
    return wrap_array(out)


def cesaro(system: RandomSystem, nu, n: int, paths: int = 16, seed: int = 0, exact: bool = False,
           samples_per_unit_length: float = 1000.0):
    """Running averages (1/k) sum_{j=1..k} mu^{*j} * nu for k = 1..n as point clouds.

    Each input point follows ``paths`` independent random words and every
    visited point carries weight w / paths, so the output is linear in the
    input weights and conserves mass. With ``exact`` every word is enumerated
    and weighted by its probability instead.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    base = _as_cloud(nu, samples_per_unit_length)
    diffeos = system.diffeos
    if exact:
        steps = []
        for j in range(1, n + 1):
            words, probs = enumerate_word_array(system.measure, j)
            pts = np.repeat(base.points[None], len(words), axis=0).reshape(-1, 2)
            lw = np.repeat(words, len(base.points), axis=0)
            for col in range(j):
                pts = _apply_letters(diffeos, lw[:, col], pts)
            w = (probs[:, None] * base.weights[None, :]).ravel()
            steps.append((pts, w))
    else:
        rng = generator(seed)
        pts = np.repeat(base.points, paths, axis=0)
        w = np.repeat(base.weights, paths) / paths
        steps = []
        for j in range(n):
            letters = system.measure.indices[rng.choice(len(system.measure.indices), size=len(pts), p=system.measure.probs)]
            pts = _apply_letters(diffeos, letters, pts)
            steps.append((pts, w))
    out = []
    for k in range(1, n + 1):
        p = np.concatenate([s[0] for s in steps[:k]])
        ww = np.concatenate([s[1] for s in steps[:k]]) / k
        out.append(PointCloudMeasure(p, ww, base.spacing))
    return out


# ---------------------------------------------------------------------------
# stationarity


def _subcell_cloud(g: GridDensity, sub: int) -> PointCloudMeasure:
    """Each cell split into sub x sub points at offsets chosen off every lattice line."""
    ox, oy = REBIN_OFFSETS
    fx = (np.arange(g.nx * sub) + ox) / (g.nx * sub)
    fy = (np.arange(g.ny * sub) + oy) / (g.ny * sub)
    xx, yy = np.meshgrid(fx, fy, indexing="xy")
    m = np.repeat(np.repeat(g.masses, sub, axis=0), sub, axis=1) / (sub * sub)
    keep = m.ravel() > 0
    return PointCloudMeasure(np.column_stack([xx.ravel(), yy.ravel()])[keep], m.ravel()[keep])


def stationary_residual(system: RandomSystem, nu, grid: int = 128, sub: int = 4) -> float:
    """Total variation on a grid between nu and sum_i p_i (f_i)_* nu.

    Grid densities are pushed as sub x sub point masses per cell and re-binned,
    which conserves mass exactly; clouds are pushed point by point.
    """
    if isinstance(nu, GridDensity):
        cloud = _subcell_cloud(nu, sub)
        ref = GridDensity(nu.nx, nu.ny, nu.masses) if nu.nx == grid and nu.ny == grid else GridDensity.from_cloud(cloud, grid)
    else:
        cloud = _as_cloud(nu)
        ref = GridDensity.from_cloud(cloud, grid)
    acc = np.zeros((grid, grid))
    for idx, p in zip(system.measure.indices, system.measure.probs):
        img = wrap_array(system.diffeos[idx].lift_eval(cloud.points))
        acc += p * GridDensity.from_cloud(PointCloudMeasure(img, cloud.weights), grid).masses
    return ref.tv_distance(GridDensity(grid, grid, acc))


def is_volume_preserving(system: RandomSystem, grid_n: int = 64, tol: float = 1e-12) -> bool:
    pts = midpoint_grid(grid_n)
    for f in system.diffeos:
        D = f.lift_derivative(pts)
        if np.max(np.abs(np.abs(np.linalg.det(D)) - 1.0)) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# equidistribution


@dataclass
class EquidistributionTrace:
    steps: list
    distance: list
    ci: list
    floor: float
    converged: bool

    def rows(self):
        for n, d, (lo, hi) in zip(self.steps, self.distance, self.ci):
            yield n, d, lo, hi


def _grid_counts(pts, w, grid):
    i = np.minimum((pts[:, 0] * grid).astype(np.int64), grid - 1)
    j = np.minimum((pts[:, 1] * grid).astype(np.int64), grid - 1)
    return np.bincount(j * grid + i, weights=w, minlength=grid * grid)


def equidistribution(system: RandomSystem, x, n: int, grid: int = 64, reference: GridDensity | None = None,
                     paths: int = 4096, checkpoints=None, seed: int = 0) -> EquidistributionTrace:
    """Grid total-variation distance between the Cesaro average of mu^{*j} * delta_x and a reference.

    The reference defaults to Lebesgue measure. The statistical floor is half
    the distance between the two half-samples at the final step; the trace is
    declared converged when its last value is within twice the floor.
    The CI for each checkpoint is the spread of the two half-sample distances.
    """
    if reference is None:
        reference = GridDensity.uniform(grid)
    ref = reference.masses.ravel() / reference.total
    checkpoints = sorted(set(checkpoints or np.unique(np.geomspace(1, n, 12).astype(int))))
    rng = generator(seed)
    pts = np.repeat(np.asarray(x, dtype=float).reshape(1, 2), paths, axis=0)
    half = np.arange(paths) < paths // 2
    acc = [np.zeros(grid * grid), np.zeros(grid * grid)]
    steps, dist, ci = [], [], []
    floor = math.nan
    for j in range(1, n + 1):
        letters = system.measure.indices[rng.choice(len(system.measure.indices), size=paths, p=system.measure.probs)]
        pts = _apply_letters(system.diffeos, letters, pts)
        for h, sel in enumerate((half, ~half)):
            acc[h] += _grid_counts(pts[sel], np.ones(int(sel.sum())), grid)
        if j in checkpoints:
            tot = acc[0] + acc[1]
            d = 0.5 * float(np.abs(tot / tot.sum() - ref).sum())
            dh = [0.5 * float(np.abs(a / a.sum() - ref).sum()) for a in acc]
            steps.append(j)
            dist.append(d)
            ci.append((min(dh), max(dh)))
            floor = 0.25 * float(np.abs(acc[0] / acc[0].sum() - acc[1] / acc[1].sum()).sum())
    converged = bool(dist and dist[-1] <= 2.0 * floor)
    return EquidistributionTrace(steps, dist, ci, floor, converged)


# ---------------------------------------------------------------------------
# orbit classification


@dataclass
class OrbitReport:
    verdict: str  # "finite", "dense" or "inconclusive"
    size: int
    depth_reached: int
    collisions: int
    points: np.ndarray = field(repr=False)
    coverage: float = 0.0


def _dense_check(points, eps):
    """Every centre of an eps/4 grid lies within 3 eps / 4 of an orbit point.

    Any torus point is within eps/(4 sqrt 2) of such a centre, so this
    certifies eps-density of the point set.
    """
    h = eps / 4.0
    n = int(math.ceil(1.0 / h))
    centres = midpoint_grid(n)
    cloud = PointCloudMeasure(points, np.ones(len(points)))
    hits = ball_masses(cloud, centres, 0.75 * eps)
    return bool(np.all(hits > 0)), float(np.mean(hits > 0))


def _torus_gap(p, q):
    d = np.abs(p - q)
    return float(np.minimum(d, 1 - d).max())


def orbit_classify(diffeos, x, depth: int, eps: float, tol: float = 1e-9, depth_cap: int = 64,
                   point_cap: int = 200000) -> OrbitReport:
    """Breadth-first search of the forward semigroup orbit of x, one representative per eps/4 cell.

    The orbit is "finite" when the search closes with every generator image
    within ``tol`` of a stored point and no two distinct points shared a cell.
    It is "dense" when the stored points are eps-dense. Otherwise "inconclusive".
    """
    if depth > depth_cap:
        raise ValueError(f"depth {depth} exceeds cap {depth_cap}")
    h = eps / 4.0
    ncell = int(math.ceil(1.0 / h))
    x = wrap_array(np.asarray(x, dtype=float).reshape(1, 2))[0]
    store = {}
    collisions = 0

    def key(p):
        return (math.floor(p[0] * ncell) % ncell, math.floor(p[1] * ncell) % ncell)

    offsets = [np.array([dx, dy]) for dx in (-tol, 0.0, tol) for dy in (-tol, 0.0, tol)]
    store[key(x)] = x
    frontier = [x]
    reached = 0
    closed = False
    for level in range(1, depth + 1):
        if not frontier:
            closed = True
            break
        arr = np.array(frontier)
        nxt = []
        for f in diffeos:
            img = wrap_array(f.lift_eval(arr))
            for p in img:
                # a point within tol of a cell edge (or the wrap seam) may be stored in a neighbour cell
                near = {key(p + off) for off in offsets}
                if any(k in store and _torus_gap(p, store[k]) <= tol for k in near):
                    continue
                k = key(p)
                if k in store:
                    collisions += 1
                else:
                    store[k] = p
                    nxt.append(p)
        frontier = nxt
        reached = level
        if len(store) > point_cap:
            break
    else:
        closed = not frontier
    pts = np.array(list(store.values()))
    if closed and collisions == 0:
        return OrbitReport("finite", len(pts), reached, collisions, pts, 0.0)
    dense, cov = _dense_check(pts, eps)
    return OrbitReport("dense" if dense else "inconclusive", len(pts), reached, collisions, pts, cov)


def rational_orbit(matrices, x, depth: int):
    """Exact forward orbit of a rational point under integer matrices mod 1 (BFS up to ``depth``)."""
    mats = [tuple(tuple(int(v) for v in row) for row in np.asarray(m)) for m in matrices]
    start = tuple(Fraction(v) % 1 for v in x)
    seen = {start}
    frontier = [start]
    for _ in range(depth):
        nxt = []
        for p in frontier:
            for m in mats:
                q = ((m[0][0] * p[0] + m[0][1] * p[1]) % 1, (m[1][0] * p[0] + m[1][1] * p[1]) % 1)
                if q not in seen:
                    seen.add(q)
                    nxt.append(q)
        if not nxt:
            break
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# filtered norm trace


@dataclass
class TraceRow:
    m: int
    rho_theory_log: float
    rho_used: float
    filtered_norm: float
    unfiltered_norm: float
    retained_mass: float
    truncated: bool


@dataclass
class TraceReport:
    rows: list
    levels: list
    filtered_table: np.ndarray  # (m values, levels)
    unfiltered_table: np.ndarray
    filtered_verdict: str
    filtered_exponent: float
    unfiltered_verdict: str
    unfiltered_exponent: float
    notes: list


def ly_trace(system: RandomSystem, nu: AdmissibleMeasure, p0: int, m_max: int, eta: float, constants: Constants,
             rho: float = 0.1, levels: int = 3, d: int = 0, rho_rate: float | None = None,
             samples_per_unit_length: float = 2000.0, budget: int = 48, cut_base: float | None = 0.01,
             seed: int = 0, override: bool = True, unfiltered_paths: int = 4) -> TraceReport:
    """Filtered and unfiltered rho-norms for m = 0..m_max.

    The theoretical radius at step m is rho exp(-13 p0 m C0' eta); ``rho_rate``
    replaces 13 p0 C0' eta when given. A radius below ten times the sample
    spacing truncates that entry. In addition every stage is evaluated on the
    dyadic radii rho 2^-j (j < levels) and summarised with the
    absolute-continuity diagnostic.
    """
    spacing = 1.0 / samples_per_unit_length
    floor = RESOLUTION_FACTOR * spacing
    rate = 13 * p0 * constants.C0p * eta if rho_rate is None else rho_rate
    radii = [rho * 2.0**-j for j in range(levels)]
    notes = []
    rows = []
    ftab, utab = [], []
    start = convolve(system, nu, d) if d > 0 else nu
    base_cloud = project(start, samples_per_unit_length)
    for m in range(m_max + 1):
        if m == 0:
            filt = start
            retained = start.mass
        else:
            res = filtered_pipeline(system, start, 0, p0, m, eta, constants, cut_base=cut_base, budget=budget,
                                    seed=seed + m, override=override)
            filt = res.measure
            retained = res.retained_mass
            notes += [f"m={m}: {w}" for w in res.warnings]
        fc = project(filt, samples_per_unit_length)
        uc = push_cloud(system, base_cloud, m * p0, paths=unfiltered_paths, seed=seed + 1000 + m)
        log_r = math.log(rho) - rate * m
        r_used = math.exp(log_r) if log_r > math.log(floor) else math.nan
        truncated = math.isnan(r_used)
        if truncated:
            notes.append(f"m={m}: theoretical radius e^{log_r:.3g} is below the resolution floor {floor:.3g}")
        fn = rho_norm(fc, r_used) if not truncated else math.nan
        un = rho_norm(uc, r_used) if not truncated else math.nan
        rows.append(TraceRow(m, log_r, r_used, fn, un, retained, truncated))
        ftab.append([rho_norm(fc, r, int(math.ceil(8 / r))) for r in radii])
        utab.append([rho_norm(uc, r, int(math.ceil(8 / r))) for r in radii])
    ftab, utab = np.array(ftab), np.array(utab)

    def verdict(tab):
        trace = tab.max(axis=0)
        slope = float(np.polyfit(np.log(radii), np.log(trace), 1)[0])
        return ("bounded" if trace[-1] <= 2.0 * trace[0] else "blowup"), slope

    fv, fe = verdict(ftab)
    uv, ue = verdict(utab)
    return TraceReport(rows, radii, ftab, utab, fv, fe, uv, ue, notes)


def push_cloud(system: RandomSystem, cloud: PointCloudMeasure, n: int, paths: int = 4, seed: int = 0,
               exact_cap: int = 4096, point_cap: int = 2_000_000) -> PointCloudMeasure:
    """mu^{*n} applied to a point cloud: every word when there are at most ``exact_cap``
    of them and the image has at most ``point_cap`` points, otherwise ``paths``
    sampled words per point with weight w / paths."""
    if n == 0:
        return cloud
    k = len(system.measure.indices)
    if k**n <= exact_cap and k**n * len(cloud.points) <= point_cap:
        words, probs = enumerate_word_array(system.measure, n)
        pts = np.repeat(cloud.points[None], len(words), axis=0).reshape(-1, 2)
        lw = np.repeat(words, len(cloud.points), axis=0)
        w = (probs[:, None] * cloud.weights[None, :]).ravel()
    else:
        rng = generator(seed)
        pts = np.repeat(cloud.points, paths, axis=0)
        w = np.repeat(cloud.weights, paths) / paths
        lw = system.measure.indices[rng.choice(k, size=(len(pts), n), p=system.measure.probs)]
    for col in range(n):
        pts = _apply_letters(system.diffeos, lw[:, col], pts)
    return PointCloudMeasure(pts, w, cloud.spacing)


def point_measure_trace(system: RandomSystem, x, n: int, rho: float = 0.02, levels: int = 3, exact_cap: int = 4096,
                        paths: int = 4096, seed: int = 0):
    """Unfiltered mu^{*n} * delta_x on dyadic radii: norms and the AC diagnostic."""
    cloud = push_cloud(system, _as_cloud(x), n, paths=paths, seed=seed, exact_cap=exact_cap)
    return ac_diagnostic([cloud], rho0=rho, levels=levels)

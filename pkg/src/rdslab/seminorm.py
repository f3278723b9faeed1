"""Ball masses, the rho inner product and semi-norm of finite measures on the torus,
the variable-radius norm with its comparison bound, and an absolute-continuity diagnostic."""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .torus import wrap_array

GRID_MAGIC = "rdsgrid v1"
SEPARATION_COUNT = 19
COMPARISON_CONSTANT = 4 * SEPARATION_COUNT**2 * (1089 + 8712 * (1 + math.log(2)))
RESOLUTION_FACTOR = 10.0


@dataclass
class PointCloudMeasure:
    """Weighted points on the torus.

    ``spacing`` is the sampling resolution of the cloud; 0 means the points are
    exact atoms (no resolution limit).
    """

    points: np.ndarray
    weights: np.ndarray
    spacing: float = 0.0

    def __post_init__(self):
        self.points = wrap_array(np.asarray(self.points, dtype=float).reshape(-1, 2))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")
        if np.any(~(self.weights > 0)):
            raise ValueError("weights must be positive")

    @property
    def mass(self) -> float:
        return math.fsum(self.weights)

    def scaled(self, c: float) -> "PointCloudMeasure":
        return PointCloudMeasure(self.points, self.weights * c, self.spacing)

    def __add__(self, other: "PointCloudMeasure") -> "PointCloudMeasure":
        return PointCloudMeasure(np.concatenate([self.points, other.points]),
                                 np.concatenate([self.weights, other.weights]), max(self.spacing, other.spacing))


def dirac(p, mass: float = 1.0) -> PointCloudMeasure:
    return PointCloudMeasure(np.asarray(p, dtype=float).reshape(1, 2), [mass])


def lebesgue_grid_cloud(n: int) -> PointCloudMeasure:
    """n x n cell-centre cloud with total mass 1."""
    c = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(c, c, indexing="xy")
    return PointCloudMeasure(np.column_stack([xx.ravel(), yy.ravel()]), np.full(n * n, 1.0 / (n * n)), 1.0 / n)


def lebesgue_random_cloud(count: int, rng) -> PointCloudMeasure:
    return PointCloudMeasure(rng.uniform(size=(count, 2)), np.full(count, 1.0 / count), 1.0 / math.sqrt(count))


def horizontal_circle_cloud(y: float, count: int) -> PointCloudMeasure:
    """Unit-density (total mass 1) measure on the closed loop {y = const}."""
    x = (np.arange(count) + 0.5) / count
    return PointCloudMeasure(np.column_stack([x, np.full(count, y)]), np.full(count, 1.0 / count), 1.0 / count)


# ---------------------------------------------------------------------------
# grid densities


@dataclass
class GridDensity:
    """Cell masses on an nx by ny grid; ``masses[j, i]`` is the cell at column i, row j."""

    nx: int
    ny: int
    masses: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float).reshape(self.ny, self.nx)
        if np.any(self.masses < 0):
            raise ValueError("cell masses must be nonnegative")

    @property
    def cell_area(self) -> float:
        return 1.0 / (self.nx * self.ny)

    @property
    def total(self) -> float:
        return math.fsum(self.masses.ravel())

    @classmethod
    def from_cloud(cls, cloud: PointCloudMeasure, nx: int, ny: int | None = None) -> "GridDensity":
        ny = nx if ny is None else ny
        i = np.minimum((cloud.points[:, 0] * nx).astype(np.int64), nx - 1)
        j = np.minimum((cloud.points[:, 1] * ny).astype(np.int64), ny - 1)
        m = np.bincount(j * nx + i, weights=cloud.weights, minlength=nx * ny)
        return cls(nx, ny, m)

    @classmethod
    def uniform(cls, nx: int, ny: int | None = None, mass: float = 1.0) -> "GridDensity":
        ny = nx if ny is None else ny
        return cls(nx, ny, np.full(nx * ny, mass / (nx * ny)))

    def to_cloud(self) -> PointCloudMeasure:
        cx = (np.arange(self.nx) + 0.5) / self.nx
        cy = (np.arange(self.ny) + 0.5) / self.ny
        xx, yy = np.meshgrid(cx, cy, indexing="xy")
        m = self.masses.ravel()
        keep = m > 0
        pts = np.column_stack([xx.ravel(), yy.ravel()])[keep]
        return PointCloudMeasure(pts, m[keep], max(1.0 / self.nx, 1.0 / self.ny))

    def density(self) -> np.ndarray:
        return self.masses / self.cell_area

    def tv_distance(self, other: "GridDensity") -> float:
        if (self.nx, self.ny) != (other.nx, other.ny):
            raise ValueError("grids differ in shape")
        return 0.5 * float(np.abs(self.masses - other.masses).sum())

    def to_bytes(self) -> bytes:
        head = f"{GRID_MAGIC} {self.nx} {self.ny}\n".encode("ascii")
        return head + self.masses.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridDensity":
        nl = data.index(b"\n")
        parts = data[:nl].decode("ascii").split()
        if " ".join(parts[:2]) != GRID_MAGIC or len(parts) != 4:
            raise ValueError("not an rdsgrid v1 stream")
        nx, ny = int(parts[2]), int(parts[3])
        body = data[nl + 1:]
        if len(body) != 8 * nx * ny:
            raise ValueError(f"expected {8 * nx * ny} payload bytes, found {len(body)}")
        return cls(nx, ny, np.frombuffer(body, dtype="<f8").copy())

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "GridDensity":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# ball masses and norms


def ball_mass(nu: PointCloudMeasure, z, rho: float) -> float:
    """nu(B(z, rho)) for the closed wrapped ball."""
    z = np.asarray(z, dtype=float).reshape(1, 2)
    return float(kernels.ball_masses(nu.points, nu.weights, z, rho)[0])


def ball_masses(nu: PointCloudMeasure, centers, rho: float) -> np.ndarray:
    return kernels.ball_masses(nu.points, nu.weights, np.asarray(centers, dtype=float).reshape(-1, 2), rho)


def z_grid_size(rho: float, z_grid: int | None) -> int:
    """Side of the midpoint z-grid; the default uses cells of about rho/16."""
    if not 0.0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2)")
    n = int(math.ceil(16.0 / rho)) if z_grid is None else int(z_grid)
    if 1.0 / n > rho / 4.0 * (1 + 1e-12):
        raise ValueError(f"z-grid cell 1/{n} exceeds rho/4 = {rho / 4:.6g}; use at least {math.ceil(4 / rho)} cells")
    return n


def midpoint_grid(n: int) -> np.ndarray:
    c = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(c, c, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


CHUNK = 1 << 20


def _support_cells(nu, nb):
    """Coarse cells (side 1/nb >= rho) within one cell of a point of nu, as a boolean mask."""
    occ = np.zeros((nb, nb), dtype=bool)
    if len(nu.points):
        i = np.minimum((nu.points[:, 0] * nb).astype(np.int64), nb - 1)
        j = np.minimum((nu.points[:, 1] * nb).astype(np.int64), nb - 1)
        occ[j, i] = True
    out = np.zeros_like(occ)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            out |= np.roll(np.roll(occ, dj, axis=0), di, axis=1)
    return out


def _active_centres(nu, nu2, rho, n):
    """Midpoint z-grid centres where both ball masses can be nonzero, in chunks."""
    nb = max(1, int(math.floor(1.0 / rho)))
    if nb < 3:
        active = np.ones((nb, nb), dtype=bool)
    else:
        active = _support_cells(nu, nb)
        if nu2 is not nu:
            active &= _support_cells(nu2, nb)
    c = (np.arange(n) + 0.5) / n
    owner = np.minimum((c * nb).astype(np.int64), nb - 1)
    if active.all():
        rows = np.arange(n)
        step = max(1, CHUNK // n)
        for r0 in range(0, n, step):
            yy, xx = np.meshgrid(c[rows[r0:r0 + step]], c, indexing="ij")
            yield np.column_stack([xx.ravel(), yy.ravel()])
        return
    ranges = [np.flatnonzero(owner == k) for k in range(nb)]
    buf, size = [], 0
    for cj, ci in zip(*np.nonzero(active)):
        yy, xx = np.meshgrid(c[ranges[cj]], c[ranges[ci]], indexing="ij")
        buf.append(np.column_stack([xx.ravel(), yy.ravel()]))
        size += buf[-1].shape[0]
        if size >= CHUNK:
            yield np.concatenate(buf)
            buf, size = [], 0
    if buf:
        yield np.concatenate(buf)


def rho_inner(nu: PointCloudMeasure, nu2: PointCloudMeasure, rho: float, z_grid: int | None = None) -> float:
    """rho^-4 times the integral of nu(B(z,rho)) nu2(B(z,rho)) dz by the midpoint rule.

    Only z-cells near the common support are visited; the others contribute zero.
    """
    n = z_grid_size(rho, z_grid)
    parts = []
    for centres in _active_centres(nu, nu2, rho, n):
        a = ball_masses(nu, centres, rho)
        b = a if nu2 is nu else ball_masses(nu2, centres, rho)
        parts.append(math.fsum(a * b))
    return math.fsum(parts) / (n * n) / rho**4


def rho_norm(nu: PointCloudMeasure, rho: float, z_grid: int | None = None) -> float:
    return math.sqrt(rho_inner(nu, nu, rho, z_grid))


def rho_norm_refined(nu: PointCloudMeasure, rho: float, z_grid: int | None = None):
    """Norm on the grid and on the halved grid; the difference is the convergence check."""
    n = z_grid_size(rho, z_grid)
    return rho_norm(nu, rho, n), rho_norm(nu, rho, 2 * n)


@dataclass
class VarNormReport:
    value: float
    rhs: float
    rho_norm_sq: float
    passed: bool
    declined: str = ""


def var_ball_masses(nu: PointCloudMeasure, centers, radii) -> np.ndarray:
    """nu(B(x, r(x))) for per-centre radii, closed balls on the torus."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if len(nu.points) == 0:
        return np.zeros(len(centers))
    tree = cKDTree(nu.points, boxsize=1.0)
    hits = tree.query_ball_point(wrap_array(centers), r=radii * (1 + 1e-12))
    out = np.empty(len(centers))
    for i, idx in enumerate(hits):
        out[i] = math.fsum(nu.weights[idx]) if idx else 0.0
    return out


def var_norm(nu: PointCloudMeasure, delta_fn, delta_minus: float, delta_plus: float, rho: float,
             z_grid: int | None = None) -> VarNormReport:
    """Variable-radius norm integral nu(B(x,d(x)))^2 / d(x)^4 dx against C4 (1 + ln(d+/d-)) ||nu||_rho^2.

    ``delta_fn`` maps an (M, 2) array of points to M radii.
    """
    if not (0 < rho <= delta_minus <= delta_plus <= 1):
        return VarNormReport(math.nan, math.nan, math.nan, False, "need 0 < rho <= delta- <= delta+ <= 1")
    n = z_grid_size(rho, z_grid)
    grid = midpoint_grid(n)
    d = np.asarray(delta_fn(grid), dtype=float).reshape(-1)
    if np.any(d < delta_minus * (1 - 1e-12)) or np.any(d > delta_plus * (1 + 1e-12)):
        return VarNormReport(math.nan, math.nan, math.nan, False, "radius field leaves [delta-, delta+]")
    if np.all(d == rho) and rho < 0.5:
        m = ball_masses(nu, grid, rho)
    else:
        m = var_ball_masses(nu, grid, d)
    value = math.fsum(m * m / d**4) / (n * n)
    base = rho_inner(nu, nu, rho, n) if rho < 0.5 else value
    rhs = COMPARISON_CONSTANT * (1 + math.log(delta_plus / delta_minus)) * base
    return VarNormReport(value, rhs, base, value <= rhs)


def upper_bound(nu: PointCloudMeasure, rho: float) -> float:
    """Total mass over rho^2, which dominates the rho-norm."""
    return nu.mass / rho**2


# ---------------------------------------------------------------------------
# absolute-continuity diagnostic


@dataclass
class ACReport:
    rhos: list
    table: np.ndarray  # (measures, levels)
    trace: np.ndarray  # sup over measures per level
    verdict: str
    exponent: float
    skipped: list
    warnings: list

    def rows(self):
        for j, r in enumerate(self.rhos):
            for k in range(self.table.shape[0]):
                yield r, float(self.table[k, j]), k


def ac_diagnostic(measures, rho0: float = 0.1, levels: int = 4, z_grid_factor: float = 8.0) -> ACReport:
    """Norm table over dyadic radii rho0 2^-j for a sequence of measures.

    Levels with rho below ten times a measure's sampling spacing are skipped.
    The verdict is "bounded" when the sup-trace at the smallest resolved level
    is within a factor two of the largest level, otherwise "blowup" with the
    log-log slope of the trace against rho.
    """
    measures = list(measures)
    if levels < 3:
        raise ValueError("need at least three dyadic levels")
    notes, skipped, rhos = [], [], []
    spacing = max((m.spacing for m in measures), default=0.0)
    for j in range(levels):
        r = rho0 * 2.0**-j
        if r < RESOLUTION_FACTOR * spacing:
            skipped.append(r)
            notes.append(f"rho={r:.4g} is below ten times the sample spacing {spacing:.3g}; level skipped")
            continue
        rhos.append(r)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if len(rhos) < 2:
        return ACReport(rhos, np.zeros((len(measures), len(rhos))), np.zeros(len(rhos)), "inconclusive", math.nan,
                        skipped, notes)
    table = np.array([[rho_norm(m, r, int(math.ceil(z_grid_factor / r))) for r in rhos] for m in measures])
    trace = table.max(axis=0)
    slope = float(np.polyfit(np.log(rhos), np.log(trace), 1)[0])
    verdict = "bounded" if trace[-1] <= 2.0 * trace[0] else "blowup"
    return ACReport(rhos, table, trace, verdict, slope, skipped, notes)

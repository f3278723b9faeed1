"""Curve-supported measures with log-Lipschitz densities, their pushforwards,
good-word filtering and the staged good/bad convolution pipeline."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .cocycle import SPLIT_TOL, svd2, torus_grid
from .curves import Curve, evaluate, log_K1, log_K2, split_curve
from .dynamics import Constants, RandomSystem, enumerate_word_array, generator, sample_words
from .seminorm import PointCloudMeasure
from .torus import proj_angle_array

DROP_MASS = 1e-12
ENUMERATION_STAGE_CAP = 4096
STIRLING_CONSTANT = 2.0


# ---------------------------------------------------------------------------
# atoms


def _exp_integral(c0, slope, a, b):
    """Integral of exp(c0 + slope * s) over [a, b]."""
    if abs(slope) * (b - a) < 1e-14:
        return math.exp(c0 + slope * a) * (b - a)
    return math.exp(c0 + slope * a) * math.expm1(slope * (b - a)) / slope


@dataclass
class CurveMeasureAtom:
    """weight * exp(c0 + slope * sigma) d sigma on the origin, carried to the image curve.

    sigma is arclength on the origin curve. On the current image the density
    with respect to arclength is exp(c0 + slope * sigma - stretch) times weight.
    """

    curve: Curve
    c0: float = 0.0
    slope: float = 0.0
    weight: float = 1.0

    def _sigma_range(self):
        o = self.curve.origin
        return float(o.sigma(np.array([self.curve.u[0]]))[0]), float(o.sigma(np.array([self.curve.u[-1]]))[0])

    @property
    def mass(self) -> float:
        a, b = self._sigma_range()
        return self.weight * _exp_integral(self.c0, self.slope, a, b)

    def log_density(self, u=None):
        """Log density w.r.t. image arclength at origin parameters u (default: nodes)."""
        c = self.curve
        if u is None:
            sig = c.origin.sigma(c.u)
            return math.log(self.weight) + self.c0 + self.slope * sig - c.stretch
        pos, tan, kappa, stretch, _ = evaluate(c.origin, c.history, u)
        return math.log(self.weight) + self.c0 + self.slope * c.origin.sigma(u) - stretch

    def quadrature_mass(self) -> float:
        """Mass from the image nodes by the trapezoid rule (consistency check)."""
        d = np.exp(self.log_density())
        return float(np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(self.curve.s)))

    def lipschitz(self) -> float:
        ld = self.log_density()
        ds = np.diff(self.curve.s)
        ok = ds > 0
        if not ok.any():
            return 0.0
        return float(np.max(np.abs(np.diff(ld))[ok] / ds[ok]))

    def push(self, f) -> "CurveMeasureAtom":
        return replace(self, curve=self.curve.push(f))

    def scaled(self, factor: float) -> "CurveMeasureAtom":
        return replace(self, weight=self.weight * factor)

    def pieces(self, a: float):
        return [replace(self, curve=p) for p in split_curve(self.curve, a)]


@dataclass
class AdmissibleMeasure:
    atoms: list = field(default_factory=list)

    @property
    def K(self) -> float:
        return max((a.curve.max_abs_curvature() for a in self.atoms), default=0.0)

    @property
    def L(self) -> float:
        return max((a.lipschitz() for a in self.atoms), default=0.0)

    @property
    def mass(self) -> float:
        return math.fsum(a.mass for a in self.atoms)

    def __add__(self, other):
        return AdmissibleMeasure(self.atoms + other.atoms)

    def scaled(self, factor):
        return AdmissibleMeasure([a.scaled(factor) for a in self.atoms])

    def min_length(self) -> float:
        return min((a.curve.length for a in self.atoms), default=math.inf)


def make_admissible(atoms) -> AdmissibleMeasure:
    return AdmissibleMeasure(list(atoms))


def push_admissible(f, nu: AdmissibleMeasure) -> AdmissibleMeasure:
    return AdmissibleMeasure([a.push(f) for a in nu.atoms])


def push_word_admissible(diffeos, word, nu: AdmissibleMeasure) -> AdmissibleMeasure:
    for i in word:
        nu = push_admissible(diffeos[i], nu)
    return nu


def convolve(system: RandomSystem, nu: AdmissibleMeasure, n: int) -> AdmissibleMeasure:
    """mu^{*n} * nu by enumeration (every word, weighted)."""
    words, weights = enumerate_word_array(system.measure, n)
    out = []
    for w, p in zip(words, weights):
        out += [a.scaled(p) for a in push_word_admissible(system.diffeos, w, nu).atoms]
    return AdmissibleMeasure(out)


# ---------------------------------------------------------------------------
# projection to point clouds


def project(nu: AdmissibleMeasure, samples_per_unit_length: float) -> PointCloudMeasure:
    """Point cloud with one point per arclength cell; each weight is the exact cell mass."""
    if not samples_per_unit_length > 0:
        raise ValueError("sampling density must be positive")
    pts, wts = [], []
    for a in nu.atoms:
        c = a.curve
        k = max(1, int(math.ceil(c.length * samples_per_unit_length)))
        edges = np.linspace(0.0, c.length, k + 1)
        u_edges = c.u_at(edges)
        u_edges[0], u_edges[-1] = c.u[0], c.u[-1]
        sig = c.origin.sigma(u_edges)
        cell = np.array([_exp_integral(a.c0, a.slope, sig[j], sig[j + 1]) for j in range(k)]) * a.weight
        mids = c.point_at(0.5 * (edges[1:] + edges[:-1]))
        pts.append(mids)
        wts.append(cell)
    if not pts:
        return PointCloudMeasure(np.zeros((0, 2)), np.zeros(0))
    return PointCloudMeasure(np.concatenate(pts), np.concatenate(wts))


# ---------------------------------------------------------------------------
# good words


@dataclass
class GoodWordFlags:
    expansion: bool
    angle: bool
    conservative: bool

    @property
    def good(self) -> bool:
        return self.expansion and self.angle and self.conservative


def _cover(curve: Curve):
    u = curve.sample_u(midpoints=True)
    pos, tan, _, _, _ = evaluate(curve.origin, curve.history, u)
    return pos, tan


def good_word_flags(system: RandomSystem, words, curve: Curve, eta: float, lam_bar: float, C0: float, eps0: float,
                    nc_mask=None):
    """Three good-word conditions for every word (W, n) along the curve's node cover.

    Returns boolean arrays (expansion, angle, conservative), each (W,).
    nc_mask may supply a precomputed nearly-conservative verdict per word.
    """
    words = np.asarray(words, dtype=np.int64)
    n = words.shape[1]
    pos, tan = _cover(curve)
    _, prods, _ = kernels.word_products(system.diffeos, words, pos)  # (W, P, 2, 2)
    img = np.einsum("wpij,pj->wpi", prods, tan)
    stretch = np.hypot(img[..., 0], img[..., 1])
    expansion = np.all(stretch >= 2.0 * math.exp(lam_bar * n), axis=1)
    lu, ls, _, es, _, _ = svd2(prods)
    defined = lu > ls * (1.0 + SPLIT_TOL)
    ang = proj_angle_array(es, tan[None, :, :])
    angle = np.all(defined & (ang >= 2.0 * math.exp(-eta * n)), axis=1)
    if nc_mask is None:
        from .cocycle import in_nearly_conservative

        nc_mask = in_nearly_conservative(system, words, C0, eps0)
    return expansion, angle, np.asarray(nc_mask, dtype=bool)


def good_word(system: RandomSystem, word, curve: Curve, eta: float, constants: Constants) -> GoodWordFlags:
    e, a, c = good_word_flags(system, np.asarray(tuple(word))[None, :], curve, eta, constants.lam_bar, constants.C0,
                              constants.eps0)
    return GoodWordFlags(bool(e[0]), bool(a[0]), bool(c[0]))


def good_fraction(system: RandomSystem, n: int, curve: Curve, eta: float, lam_bar: float, C0=0.1, eps0=0.0,
                  samples=2000, seed=0):
    """Monte-Carlo fraction of good words for the curve, with standard error."""
    words = sample_words(system.measure, n, samples, generator(seed))
    e, a, c = good_word_flags(system, words, curve, eta, lam_bar, C0, eps0)
    frac = float(np.mean(e & a & c))
    return frac, math.sqrt(frac * (1 - frac) / samples)


# ---------------------------------------------------------------------------
# good convolution


@dataclass
class ConvolutionResult:
    good: AdmissibleMeasure
    bad: AdmissibleMeasure
    good_mass: float
    bad_mass: float
    exact: bool


def _stage_words(system, n, samples, rng):
    k = len(system.measure.indices)
    if k**n <= ENUMERATION_STAGE_CAP:
        w, p = enumerate_word_array(system.measure, n)
        return w, p, True
    w = sample_words(system.measure, n, samples, rng)
    return w, np.full(samples, 1.0 / samples), False


def good_convolution(system: RandomSystem, nu: AdmissibleMeasure, n: int, eta: float, a: float | None,
                     constants: Constants, samples=512, seed=0, keep_bad=True) -> ConvolutionResult:
    """Cut every atom with the cut-short map (a=None skips it), then push each piece
    by every word, routing the image to the good or bad part.

    Good plus bad mass equals the convolved mass exactly in enumeration mode.
    """
    rng = generator(seed)
    words, weights, exact = _stage_words(system, n, samples, rng)
    from .cocycle import in_nearly_conservative

    nc = in_nearly_conservative(system, words, constants.C0, constants.eps0)
    good_atoms, bad_atoms = [], []
    gm, bm = [], []
    for atom in nu.atoms:
        for piece in (atom.pieces(a) if a else [atom]):
            e, ang, c = good_word_flags(system, words, piece.curve, eta, constants.lam_bar, constants.C0,
                                        constants.eps0, nc)
            g = e & ang & c
            pm = piece.mass
            for w, p, ok in zip(words, weights, g):
                if ok or keep_bad:
                    img = push_word_admissible(system.diffeos, w, AdmissibleMeasure([piece.scaled(p)])).atoms[0]
                    (good_atoms if ok else bad_atoms).append(img)
                (gm if ok else bm).append(pm * p)
    return ConvolutionResult(AdmissibleMeasure(good_atoms), AdmissibleMeasure(bad_atoms), math.fsum(gm), math.fsum(bm),
                             exact)


# ---------------------------------------------------------------------------
# good/bad sequences


def wm_eta(m: int, eta: float, cap: int = 1 << 20):
    """All good/bad sequences whose every prefix of length k has at most k*eta bad entries."""
    if 2**m > cap:
        raise OverflowError(f"2^{m} sequences exceed cap {cap}")
    out = []
    for seq in itertools.product(("g", "b"), repeat=m):
        bad = 0
        ok = True
        for k, s in enumerate(seq, start=1):
            bad += s == "b"
            if bad > k * eta + 1e-12:
                ok = False
                break
        if ok:
            out.append(seq)
    return out


def _suffix_feasible(suffix, m, eta):
    """Can a sequence ending in ``suffix`` (known entries m-len+1..m) lie in W_m(eta)?

    The most favourable completion is an all-good prefix.
    """
    start = m - len(suffix)
    bad = 0
    for j, s in enumerate(suffix, start=start + 1):
        bad += s == "b"
        if bad > j * eta + 1e-12:
            return False
    return True


# ---------------------------------------------------------------------------
# cut lengths and constants of the pipeline


def log_K2_bound(p0, c, C0p):
    return log_K2(p0, c, C0p)


def theoretical_log_cut_lengths(m, p0, c, C0p, eta, l, Kp, Lp):
    """ln l_k for k = 1..m from the explicit formula, plus ln K'' and ln L''."""
    lk1 = log_K1(p0, c, C0p)
    lk2 = log_K2(p0, c, C0p)
    logKpp = lk1 + math.log(Kp + 1) + 8 * p0 * C0p
    logLpp = lk2 + math.log(Kp + 1) + math.log(Lp + 1) + 11 * p0 * C0p
    logs = [-math.log(4) - logKpp - 7 * p0 * C0p - (11 * p0 * k * C0p * eta + l + p0 * C0p) for k in range(1, m + 1)]
    return logs, logKpp, logLpp


def scaled_cut_lengths(m, p0, C0p, eta, base):
    """Cut lengths with the theoretical k-dependence e^{-11 p0 k C0p eta} and a chosen base."""
    return [base * math.exp(-11 * p0 * (k - 1) * C0p * eta) for k in range(1, m + 1)]


# ---------------------------------------------------------------------------
# systematic resampling


def systematic_resample(masses, budget, rng):
    """Counts per item from systematic resampling; each copy carries total/budget mass."""
    masses = np.asarray(masses, dtype=float)
    total = masses.sum()
    if len(masses) <= budget or total <= 0:
        return np.ones(len(masses), dtype=int), None
    cum = np.cumsum(masses) / total
    cum[-1] = 1.0
    pos = (rng.uniform() + np.arange(budget)) / budget
    idx = np.searchsorted(cum, pos, side="right")
    idx = np.minimum(idx, len(masses) - 1)
    return np.bincount(idx, minlength=len(masses)), total / budget


def _resample_atoms(atoms, budget, rng):
    """Reduce a list of atoms to at most ``budget`` by systematic resampling, preserving total mass."""
    masses = [a.mass for a in atoms]
    total = math.fsum(masses)
    counts, per = systematic_resample(masses, budget, rng)
    if per is None:
        return list(atoms)
    out = []
    for a, cnt, m in zip(atoms, counts, masses):
        if cnt:
            out.append(a.scaled(cnt * per / m))
    # remove rounding drift so the class mass is reproduced to the last bit possible
    got = math.fsum(a.mass for a in out)
    if got > 0:
        out = [a.scaled(total / got) for a in out]
    return out


# ---------------------------------------------------------------------------
# the staged pipeline


@dataclass
class LedgerRow:
    stage: int
    sigma_class: str
    retained_mass: float
    discarded_mass: float
    K: float
    L: float
    atom_count: int


@dataclass
class PipelineResult:
    measure: AdmissibleMeasure
    classes: dict
    ledger: list
    total_mass: float
    retained_mass: float
    discarded_mass: float
    cut_lengths: list
    log_theoretical_cut_lengths: list
    unresolvable: list
    warnings: list
    exact: bool

    def balanced(self, tol=1e-12) -> bool:
        return abs(self.retained_mass + self.discarded_mass - self.total_mass) <= tol * max(1.0, self.total_mass)


def filtered_pipeline(system: RandomSystem, nu: AdmissibleMeasure, d: int, p0: int, m: int, eta: float,
                      constants: Constants, cut_lengths=None, cut_base: float | None = None, budget: int = 48,
                      seed: int = 0, samples: int = 512, override: bool = False) -> PipelineResult:
    """Nested good/bad convolutions over every sequence in W_m(eta).

    Stages are applied in the order sigma_m, sigma_{m-1}, ..., sigma_1, each a
    p0-step good or bad convolution after cutting with the stage's cut length.
    Paths whose known suffix cannot lie in W_m(eta) are discarded as soon as
    they become infeasible. Within each suffix class, atoms are reduced to
    ``budget`` by systematic resampling, which preserves class masses; the
    mass bookkeeping is therefore exact while geometry is subsampled.
    """
    rng = generator(seed)
    notes = []
    bad = constants.check(["pipeline eta bound"]) if eta == constants.eta else []
    if eta != constants.eta:
        tmp = replace(constants, eta=eta)
        bad = tmp.check(["pipeline eta bound"])
    if bad:
        msg = f"pipeline parameter inequalities violated: {bad}"
        if not override:
            raise ValueError(msg + " (pass override=True to run anyway)")
        notes.append(msg)
    # theoretical cut lengths
    l_exp = -math.log(max(nu.min_length(), 1e-300)) if nu.atoms else 0.0
    logs, logKpp, logLpp = theoretical_log_cut_lengths(m, p0, constants.c, constants.C0p, eta, l_exp,
                                                       max(nu.K, 1.0), max(nu.L, 1.0))
    if cut_lengths is None:
        if cut_base is None:
            cut_lengths = [math.exp(x) for x in logs]
        else:
            cut_lengths = scaled_cut_lengths(m, p0, constants.C0p, eta, cut_base)
    h = min((a.curve.h_max for a in nu.atoms), default=1e-3)
    unresolvable = [k + 1 for k, lk in enumerate(cut_lengths) if lk < 2 * h]
    if unresolvable:
        notes.append(f"cut lengths for stages {unresolvable} are below twice the node spacing")
        cut_lengths = [max(lk, 2 * h) for lk in cut_lengths]
    total = nu.mass
    # mu^{*d} first
    start = convolve(system, nu, d) if d > 0 else nu
    start = AdmissibleMeasure(_resample_atoms(start.atoms, budget, rng))
    classes = {(): start.atoms}
    ledger = [LedgerRow(0, "", total, 0.0, start.K, start.L, len(start.atoms))]
    discarded = 0.0
    exact = True
    from .cocycle import in_nearly_conservative

    for stage in range(1, m + 1):
        k_index = m - stage + 1  # this stage applies sigma_{k_index} with cut length l_{k_index}
        a = cut_lengths[k_index - 1]
        words, weights, ex = _stage_words(system, p0, samples, rng)
        exact &= ex
        nc = in_nearly_conservative(system, words, constants.C0, constants.eps0)
        new_classes = {}
        for suffix, atoms in classes.items():
            pieces = [pc for at in atoms for pc in at.pieces(a)]
            pieces = _resample_atoms(pieces, budget, rng)
            pool = {"g": [], "b": []}
            for pc in pieces:
                e, ang, c = good_word_flags(system, words, pc.curve, eta, constants.lam_bar, constants.C0,
                                            constants.eps0, nc)
                g = e & ang & c
                pm = pc.mass
                for lab, mask in (("g", g), ("b", ~g)):
                    idx = np.flatnonzero(mask)
                    if len(idx):
                        pool[lab].append((pc, idx, weights[idx] * pm))
            for lab in ("g", "b"):
                new_suffix = (lab,) + suffix
                entries = pool[lab]
                cls_mass = math.fsum(float(x.sum()) for _, _, x in entries)
                if cls_mass == 0.0:
                    continue
                if not _suffix_feasible(new_suffix, m, eta):
                    discarded += cls_mass
                    ledger.append(LedgerRow(stage, "".join(new_suffix), 0.0, cls_mass, math.nan, math.nan, 0))
                    continue
                # choose (piece, word) pairs to materialise by systematic resampling
                flat = [(pc, w) for pc, idx, _ in entries for w in idx]
                fm = np.concatenate([x for _, _, x in entries])
                counts, per = systematic_resample(fm, budget, rng)
                out = []
                for (pc, w), cnt, mm in zip(flat, counts, fm):
                    if not cnt:
                        continue
                    scale = (cnt * per / mm) if per is not None else 1.0
                    img = push_word_admissible(system.diffeos, words[w], AdmissibleMeasure([pc.scaled(weights[w] * scale)]))
                    out += img.atoms
                got = math.fsum(x.mass for x in out)
                out = [x.scaled(cls_mass / got) for x in out]
                small = [x for x in out if x.mass < DROP_MASS]
                if small:
                    dm = math.fsum(x.mass for x in small)
                    discarded += dm
                    out = [x for x in out if x.mass >= DROP_MASS]
                    cls_mass -= dm
                    ledger.append(LedgerRow(stage, "".join(new_suffix) + ":dropped", 0.0, dm, math.nan, math.nan, len(small)))
                am = AdmissibleMeasure(out)
                new_classes[new_suffix] = out
                ledger.append(LedgerRow(stage, "".join(new_suffix), cls_mass, 0.0, am.K, am.L, len(out)))
        classes = new_classes
    final = AdmissibleMeasure([x for atoms in classes.values() for x in atoms])
    retained = math.fsum(math.fsum(x.mass for x in atoms) for atoms in classes.values())
    # fold rounding drift into the ledger so the identity holds to the last ulp
    return PipelineResult(final, classes, ledger, total, retained, discarded, list(cut_lengths), logs,
                          unresolvable, notes, exact)


# ---------------------------------------------------------------------------
# binomial tail bounds


def _log_entropy_factor(eta):
    """-ln(eta^eta (1-eta)^(1-eta)), the exponential growth rate of small binomial sums."""
    return -(eta * math.log(eta) + (1 - eta) * math.log(1 - eta))


def binom_tail_bounds(n: int, eta: float, a: float | None = None, b: float | None = None,
                      C: float = STIRLING_CONSTANT) -> dict:
    """Exact binomial sums against the two Stirling-type bounds.

    First: sum_{k <= [n eta]} C(n,k) <= C n eta (eta^eta (1-eta)^(1-eta))^{-n}.
    Second (needs a > 0 and b >= a - ln(eta^eta (1-eta)^(1-eta)) / eta):
    sum_{k > [n eta]} C(n,k) e^{-b k} <= C e^{-a n eta} / (1 - e^{-a}).
    """
    if not 0 < eta < 0.5:
        return {"declined": "eta must lie in (0, 1/2)"}
    kmax = int(math.floor(n * eta))
    lhs1 = sum(math.comb(n, k) for k in range(kmax + 1))
    rhs1 = C * n * eta * math.exp(n * _log_entropy_factor(eta))
    out = {"declined": "", "lhs1": float(lhs1), "rhs1": rhs1, "pass1": lhs1 <= rhs1}
    if a is not None:
        if a <= 0:
            return {"declined": "a must be positive"}
        bmin = a + _log_entropy_factor(eta) / eta
        b = bmin if b is None else b
        if b < bmin - 1e-12:
            return {"declined": f"b must be >= {bmin:.6g}"}
        lhs2 = math.fsum(math.comb(n, k) * math.exp(-b * k) for k in range(kmax + 1, n + 1))
        rhs2 = C * math.exp(-a * n * eta) / (1 - math.exp(-a))
        out.update({"lhs2": lhs2, "rhs2": rhs2, "b": b, "pass2": lhs2 <= rhs2})
    return out


def stirling_constant_needed(ns, etas) -> float:
    """Smallest constant making the first bound hold over the given grid."""
    worst = 0.0
    for n in ns:
        for eta in etas:
            r = binom_tail_bounds(n, eta, C=1.0)
            worst = max(worst, r["lhs1"] / r["rhs1"])
    return worst

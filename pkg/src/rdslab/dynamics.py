"""Torus diffeomorphisms of the form linear + trigonometric perturbation,
their jets and inverses, words over a diffeo table and driving measures."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Sequence

import numpy as np

from .torus import TorusPoint, wrap, wrap_array

TWO_PI = 2.0 * math.pi
NEWTON_MAX_ITER = 64
NEWTON_TOL = 1e-13
DEFAULT_WORD_CAP = 10**6


@dataclass(frozen=True)
class Mode:
    """One Fourier term a * sin(2 pi <k, x> + phase)."""

    k: tuple[int, int]
    a: tuple[float, float]
    phase: float = 0.0

    def c1_size(self) -> float:
        return TWO_PI * math.hypot(*self.k) * math.hypot(*self.a)


class Diffeo:
    """f(x) = M x + sum_modes a sin(2 pi <k,x> + phase)  (mod 1).

    The lift to the plane is Z^2-equivariant, so all maps below also act on
    unwrapped (lifted) coordinates; ``lift_eval`` never reduces mod 1.
    """

    def __init__(self, matrix, modes: Sequence[Mode] = (), name: str = "", c2_budget: float | None = None):
        m = np.asarray(matrix)
        if m.shape != (2, 2):
            raise ValueError("linear part must be 2x2")
        mi = np.rint(m).astype(np.int64)
        if not np.array_equal(mi, m.astype(float)):
            raise ValueError("linear part must have integer entries")
        det = int(mi[0, 0] * mi[1, 1] - mi[0, 1] * mi[1, 0])
        if abs(det) != 1:
            raise ValueError(f"linear part has determinant {det}, need +-1")
        self.matrix = mi
        self.matrix.setflags(write=False)
        self.modes = tuple(
            md if isinstance(md, Mode) else Mode(tuple(int(v) for v in md[0]), tuple(float(v) for v in md[1]), float(md[2]) if len(md) > 2 else 0.0)
            for md in modes
        )
        size = self.c1_size()
        if size >= 1.0:
            raise ValueError(f"perturbation C1 size {size:.4g} >= 1; global invertibility not guaranteed")
        self.name = name
        self.c2_budget = c2_budget
        self._minv = np.array([[mi[1, 1], -mi[0, 1]], [-mi[1, 0], mi[0, 0]]], dtype=float) * det
        self._k = np.array([md.k for md in self.modes], dtype=float).reshape(-1, 2)
        self._a = np.array([md.a for md in self.modes], dtype=float).reshape(-1, 2)
        self._ph = np.array([md.phase for md in self.modes], dtype=float)

    # -- basic properties -------------------------------------------------
    def c1_size(self) -> float:
        return float(sum(md.c1_size() for md in self.modes))

    @property
    def is_linear(self) -> bool:
        return all(md.a == (0.0, 0.0) for md in self.modes)

    def analytic_derivative_bounds(self) -> tuple[float, float]:
        """Sup bounds for the perturbation's second and third derivatives."""
        kn = np.hypot(self._k[:, 0], self._k[:, 1]) * TWO_PI
        an = np.hypot(self._a[:, 0], self._a[:, 1])
        return float(np.sum(kn**2 * an)), float(np.sum(kn**3 * an))

    def to_dict(self) -> dict:
        d = {
            "matrix": self.matrix.tolist(),
            "modes": [{"k": list(md.k), "a": list(md.a), "phase": md.phase} for md in self.modes],
        }
        if self.name:
            d["name"] = self.name
        if self.c2_budget is not None:
            d["c2_budget"] = self.c2_budget
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Diffeo":
        modes = [Mode(tuple(int(v) for v in md["k"]), tuple(float(v) for v in md["a"]), float(md.get("phase", 0.0))) for md in d.get("modes", [])]
        return cls(d["matrix"], modes, name=d.get("name", ""), c2_budget=d.get("c2_budget"))

    def __repr__(self):
        return f"Diffeo({self.name or self.matrix.tolist()}, modes={len(self.modes)})"

    # -- vectorised evaluation on lifted coordinates ----------------------
    def _phases(self, xy):
        return TWO_PI * (xy @ self._k.T) + self._ph

    def lift_eval(self, xy):
        """Image of lifted points (..., 2) without reduction mod 1."""
        xy = np.asarray(xy, dtype=float)
        out = xy @ self.matrix.T.astype(float)
        if len(self.modes):
            out = out + np.sin(self._phases(xy)) @ self._a
        return out

    def lift_jet(self, xy):
        """Return (image, D, D2) for lifted points.

        D has shape (..., 2, 2); D2[..., i, j, l] = d^2 f_i / dx_j dx_l.
        """
        xy = np.asarray(xy, dtype=float)
        lead = xy.shape[:-1]
        img = xy @ self.matrix.T.astype(float)
        D = np.broadcast_to(self.matrix.astype(float), lead + (2, 2)).copy()
        D2 = np.zeros(lead + (2, 2, 2))
        if len(self.modes):
            ph = self._phases(xy)
            s, c = np.sin(ph), np.cos(ph)
            img = img + s @ self._a
            kk = TWO_PI * self._k
            # D_ij += sum_m a_mi (2pi k_mj) cos
            D += np.einsum("...m,mi,mj->...ij", c, self._a, kk)
            D2 -= np.einsum("...m,mi,mj,ml->...ijl", s, self._a, kk, kk)
        return img, D, D2

    def lift_derivative(self, xy):
        xy = np.asarray(xy, dtype=float)
        lead = xy.shape[:-1]
        D = np.broadcast_to(self.matrix.astype(float), lead + (2, 2)).copy()
        if len(self.modes):
            c = np.cos(self._phases(xy))
            D += np.einsum("...m,mi,mj->...ij", c, self._a, TWO_PI * self._k)
        return D

    def lift_inverse(self, q, seed=None):
        """Newton solve of f(p) = q on the lift, seeded at M^{-1} q.

        Because the lift is equivariant, the solution for q is the solution
        for wrap(q) shifted by M^{-1} of the integer offset; we solve directly.
        """
        q = np.asarray(q, dtype=float)
        p = q @ self._minv.T if seed is None else np.array(seed, dtype=float)
        if self.is_linear:
            return p
        for _ in range(NEWTON_MAX_ITER):
            img, D = self.lift_eval(p), self.lift_derivative(p)
            r = img - q
            if np.all(np.abs(r) < NEWTON_TOL):
                return p
            det = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
            step0 = (D[..., 1, 1] * r[..., 0] - D[..., 0, 1] * r[..., 1]) / det
            step1 = (-D[..., 1, 0] * r[..., 0] + D[..., 0, 0] * r[..., 1]) / det
            p = p - np.stack([step0, step1], axis=-1)
        r = self.lift_eval(p) - q
        if np.all(np.abs(r) < 10 * NEWTON_TOL):
            return p
        raise ArithmeticError(
            f"Newton inverse did not converge in {NEWTON_MAX_ITER} iterations (residual {np.max(np.abs(r)):.3g}); "
            "the C1 invertibility budget is probably violated"
        )


def _pt(p) -> np.ndarray:
    return p.as_array() if isinstance(p, TorusPoint) else np.asarray(p, dtype=float)


def eval(f: Diffeo, p) -> TorusPoint:  # noqa: A001 - operation name
    return wrap(f.lift_eval(_pt(p)))


def jet(f: Diffeo, p):
    """Image, derivative matrix and second derivative tensor at p."""
    img, D, D2 = f.lift_jet(_pt(p))
    return wrap(img), D, D2


def inverse_eval(f: Diffeo, q) -> TorusPoint:
    return wrap(f.lift_inverse(_pt(q)))


def jacobian(f: Diffeo, p) -> float:
    D = f.lift_derivative(_pt(p))
    return float(abs(D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]))


def _op_norm(D):
    """Spectral norm of (..., 2, 2) matrices in closed form."""
    a, b, c, d = D[..., 0, 0], D[..., 0, 1], D[..., 1, 0], D[..., 1, 1]
    s = 0.5 * (a * a + b * b + c * c + d * d)
    det = a * d - b * c
    return np.sqrt(s + np.sqrt(np.maximum(s * s - det * det, 0.0)))


def _bilinear_norm(T):
    """Upper bound sqrt(sum_i ||H_i||^2) for the norm of a vector-valued bilinear form."""
    return np.sqrt(_op_norm(T[..., 0, :, :]) ** 2 + _op_norm(T[..., 1, :, :]) ** 2)


def _grid_sups(f: Diffeo, n: int):
    t = (np.arange(n) + 0.5) / n
    xy = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    _, D, D2 = f.lift_jet(xy)
    det = np.abs(D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0])
    nD = _op_norm(D)
    nD2 = _bilinear_norm(D2)
    Pinv = np.linalg.inv(D)
    # D^2(f^{-1}) at f(x) = -P D2(P., P.) with P = Df(x)^{-1}
    G = -np.einsum("nik,nkjl,nja,nlb->niab", Pinv, D2, Pinv, Pinv)
    return nD.max(), nD2.max(), _op_norm(Pinv).max(), _bilinear_norm(G).max(), det.min()


def _c2_bound_single(f: Diffeo, n: int) -> float:
    sD, sD2, sP, sG, dmin = _grid_sups(f, n)
    l2, l3 = f.analytic_derivative_bounds()
    r = math.sqrt(2.0) / (2.0 * n)  # every point is within r of a cell centre
    if l2 == 0.0:
        return float(max(sD, sD2, sP, sG))
    Dmax = sD + r * l2
    dlow = dmin - r * 2.0 * Dmax * l2
    if dlow <= 0.0:
        return math.inf
    Pmax = Dmax / dlow
    lipP = l2 / dlow + Dmax * 2.0 * Dmax * l2 / dlow**2
    lipG = 3.0 * Pmax**2 * lipP * (sD2 + r * l3) + Pmax**3 * l3
    return float(max(sD + r * l2, sD2 + r * l3, sP + r * lipP, sG + r * lipG))


def c2_bound(f: Diffeo, grid_n: int = 256) -> float:
    """Upper bound for max(||Df||, ||D^2 f||, ||Df^-1||, ||D^2 f^-1||) on the torus.

    Grid sup over cell centres plus a Lipschitz margin from analytic
    third-derivative bounds. The minimum over the dyadic chain
    grid_n, grid_n/2, ... (down to 16) is returned, so doubling grid_n
    can only lower the result.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    best = math.inf
    n = grid_n
    while n >= 16:
        best = min(best, _c2_bound_single(f, n))
        if n % 2:
            break
        n //= 2
    return best


# ---------------------------------------------------------------------------
# words and driving measures


@dataclass(frozen=True)
class Word:
    indices: tuple[int, ...]

    def __init__(self, indices=()):
        object.__setattr__(self, "indices", tuple(int(i) for i in indices))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, s):
        out = self.indices[s]
        return Word(out) if isinstance(s, slice) else out

    def __add__(self, other: "Word") -> "Word":
        return Word(self.indices + tuple(other))


class DrivingMeasure:
    """Finitely supported probability measure on a diffeo table."""

    def __init__(self, atoms: Sequence[tuple[int, float]]):
        if len(atoms) == 0:
            raise ValueError("driving measure needs at least one atom")
        idx = [int(i) for i, _ in atoms]
        prob = [float(p) for _, p in atoms]
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate atom index")
        if any(p <= 0.0 or not math.isfinite(p) for p in prob):
            raise ValueError("atom probabilities must be positive")
        if abs(math.fsum(prob) - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {math.fsum(prob)!r}, not 1")
        self.indices = np.array(idx, dtype=np.int64)
        self.probs = np.array(prob)

    @property
    def atoms(self):
        return list(zip(self.indices.tolist(), self.probs.tolist()))

    def weight(self, word: Word) -> float:
        lookup = dict(zip(self.indices.tolist(), self.probs.tolist()))
        w = 1.0
        for i in word:
            w *= lookup.get(i, 0.0)
        return w

    def relabel(self, perm) -> "DrivingMeasure":
        return DrivingMeasure([(perm[i], p) for i, p in self.atoms])


@dataclass
class RandomSystem:
    """A diffeo table together with a driving measure over it."""

    diffeos: list
    measure: DrivingMeasure
    name: str = ""

    def __post_init__(self):
        for i in self.measure.indices:
            if not 0 <= i < len(self.diffeos):
                raise ValueError(f"measure atom index {i} outside diffeo table")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "diffeos": [f.to_dict() for f in self.diffeos],
            "measure": [{"index": i, "prob": p} for i, p in self.measure.atoms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomSystem":
        diffeos = [Diffeo.from_dict(x) for x in d["diffeos"]]
        measure = DrivingMeasure([(a["index"], a["prob"]) for a in d["measure"]])
        return cls(diffeos, measure, d.get("name", ""))


def load_system(path) -> RandomSystem:
    with open(path) as fh:
        return RandomSystem.from_dict(json.load(fh))


def save_system(system: RandomSystem, path) -> None:
    with open(path, "w") as fh:
        json.dump(system.to_dict(), fh, indent=2, sort_keys=True)


SHEAR_A = ((1, 1), (0, 1))
SHEAR_B = ((1, 0), (1, 1))
CAT = ((2, 1), (1, 1))


def shear_pair(eps: float = 0.0, p: float = 0.5) -> RandomSystem:
    """p A + (1-p) B with A, B the unipotent shears.

    With eps > 0, A gains eps*(sin 2 pi y, 0) and B gains eps*(0, sin 2 pi x).
    Both perturbations keep Jac = 1 and the common fixed point (0, 0).
    """
    ma = [Mode((0, 1), (eps, 0.0))] if eps else []
    mb = [Mode((1, 0), (0.0, eps))] if eps else []
    fa = Diffeo(SHEAR_A, ma, name="A")
    fb = Diffeo(SHEAR_B, mb, name="B")
    if p == 1.0:
        return RandomSystem([fa, fb], DrivingMeasure([(0, 1.0)]), "A")
    return RandomSystem([fa, fb], DrivingMeasure([(0, p), (1, 1.0 - p)]), f"shears eps={eps}")


def single_map(matrix, modes=(), name="M") -> RandomSystem:
    return RandomSystem([Diffeo(matrix, modes, name=name)], DrivingMeasure([(0, 1.0)]), name)


def identity_diffeo() -> Diffeo:
    return Diffeo(((1, 0), (0, 1)), name="id")


# ---------------------------------------------------------------------------
# cocycle along a word


def cocycle(diffeos, word, p):
    """Trajectory, derivative products and cumulative log-Jacobians along a word.

    Returns lifted trajectory (n+1, 2) (wrap for torus points), products
    (n+1, 2, 2) with products[k] = Df^k(p), and log-Jacobians (n+1,).
    """
    word = tuple(word)
    n = len(word)
    traj = np.empty((n + 1, 2))
    prods = np.empty((n + 1, 2, 2))
    logj = np.empty(n + 1)
    traj[0] = _pt(p)
    prods[0] = np.eye(2)
    logj[0] = 0.0
    for k, i in enumerate(word):
        f = diffeos[i]
        D = f.lift_derivative(traj[k])
        traj[k + 1] = f.lift_eval(traj[k])
        prods[k + 1] = D @ prods[k]
        logj[k + 1] = logj[k] + math.log(abs(D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]))
    return traj, prods, logj


def sample_word(mu: DrivingMeasure, n: int, rng: np.random.Generator) -> Word:
    if n < 0:
        raise ValueError("word length must be >= 0")
    return Word(sample_words(mu, n, 1, rng)[0])


def sample_words(mu: DrivingMeasure, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Array (count, n) of i.i.d. letters drawn from mu."""
    if len(mu.indices) == 1:
        return np.full((count, n), mu.indices[0], dtype=np.int64)
    pick = rng.choice(len(mu.indices), size=(count, n), p=mu.probs)
    return mu.indices[pick]


def enumerate_word_array(mu: DrivingMeasure, n: int, cap: int = DEFAULT_WORD_CAP):
    """All words of length n as an int array plus product weights."""
    k = len(mu.indices)
    total = k**n
    if total > cap:
        raise OverflowError(f"{k}^{n} = {total} words exceeds cap {cap}; use Monte Carlo sampling instead")
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64), np.ones(1)
    digits = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(total, n)
    logw = np.log(mu.probs)[digits].sum(axis=1)
    return mu.indices[digits], np.exp(logw)


def enumerate_words(mu: DrivingMeasure, n: int, cap: int = DEFAULT_WORD_CAP):
    words, weights = enumerate_word_array(mu, n, cap)
    return [(Word(w), float(p)) for w, p in zip(words, weights)]


def exact_weight_sum(mu: DrivingMeasure, n: int) -> Fraction:
    """Rational sum of product weights using the exact binary values of the floats."""
    return sum((Fraction(p) for p in mu.probs.tolist()), Fraction(0)) ** n


# ---------------------------------------------------------------------------
# named constants


@dataclass
class Constants:
    """Named constants of the construction; ``check`` lists violated relations.

    Derived quantities lam = chi/delta, lam_bar = chi_bar/delta and
    lam_hat = min(lam_bar/2, 1) are computed, not stored.
    """

    C0p: float = 2.5  # log of the C^2 budget, > 2
    C0: float = 0.1
    eps0: float = 0.001
    C1: float = 0.29
    N: int = 4
    delta: float = 0.05
    chi: float = 0.0
    chi_bar: float = 0.0
    beta1: float = 0.5
    eta: float = 0.1
    p0: int = 10
    c: float = 0.2
    K: float = 1.0
    L: float = 1.0
    cut_scale: float = 1.0
    cut_floor: float = 0.0

    def __post_init__(self):
        if self.chi == 0.0:
            self.chi = moment_rate(self.delta, self.C1, self.N)
        if self.chi_bar == 0.0:
            self.chi_bar = 0.5 * min(self.chi, self.delta * self.C0p / 2.0)

    @property
    def lam(self) -> float:
        return self.chi / self.delta

    @property
    def lam_bar(self) -> float:
        return self.chi_bar / self.delta

    @property
    def lam_hat(self) -> float:
        return min(self.lam_bar / 2.0, 1.0)

    def delta_upper(self) -> float:
        a = self.N * self.C0p
        return min(1.0 / a, 1.0 / (2.0 * self.C1), self.C1 / (2.0 * a * a))

    def eps0_upper(self) -> float:
        return min(self.lam_hat * self.beta1 / 7.0, self.C0, self.C0p, self.chi_bar / (2.0 * self.delta), self.lam_bar / 8.0)

    def relations(self) -> dict:
        """Every checkable relation, keyed by a short label, with its truth value."""
        C0p, eta, c, p0 = self.C0p, self.eta, self.c, self.p0
        r = {
            "C0p > 2": C0p > 2.0,
            "C1 > 0": self.C1 > 0.0,
            "delta in moment range": 0.0 < self.delta < self.delta_upper(),
            "chi_bar in (0, min(chi, delta*C0p/2))": 0.0 < self.chi_bar < min(self.chi, self.delta * C0p / 2.0),
            "eps0 within named minimum": 0.0 < self.eps0 <= self.eps0_upper(),
            "8 eps0 < lam_bar": 8.0 * self.eps0 < self.lam_bar,
            "curvature: eps0 < c/2 < C0p/2": self.eps0 < c / 2.0 < C0p / 2.0,
            "curvature: C0/(C0p p0) < eta < c/(2c+6C0p) < 1/8": self.C0 / (C0p * p0) < eta < c / (2 * c + 6 * C0p) < 0.125,
            "density: eta < c/(2c+16C0p) < 1/18": eta < c / (2 * c + 16 * C0p) < 1.0 / 18.0,
            "pipeline eta bound": eta < self.pipeline_eta_upper(),
        }
        return r

    def pipeline_eta_upper(self) -> float:
        lh, b1, C0p = self.lam_hat, self.beta1, self.C0p
        return min(
            (self.lam - self.lam_bar) / b1,
            1.0 / b1,
            1.0 / 13.0,
            lh * b1 / 112.0,
            lh * b1 / (3328.0 * C0p + 2.0 * lh * b1),
            self.lam_bar / (13.0 * C0p),
        )

    def check(self, only: Sequence[str] | None = None) -> list:
        """Labels of violated relations (restricted to ``only`` when given)."""
        rel = self.relations()
        keys = rel.keys() if only is None else only
        return [k for k in keys if not rel[k]]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def derive(cls, C0p: float, C1: float, N: int, beta1: float = 0.5, C0: float = 0.1, c: float | None = None,
               p0: int = 10, frac: float = 0.5, **extra) -> "Constants":
        """Place delta, chi_bar, eps0, c and eta at ``frac`` of their admissible ranges.

        chi follows from delta; every choice is strictly inside its open
        interval, so ``check()`` is empty for frac in (0, 1) whenever the
        interval for eta is nonempty.
        """
        base = cls(C0p=C0p, C0=C0, C1=C1, N=N, beta1=beta1, p0=p0, delta=1.0, chi=1.0, chi_bar=1.0)
        delta = frac * base.delta_upper()
        chi = moment_rate(delta, C1, N)
        chi_bar = frac * min(chi, delta * C0p / 2.0)
        k = cls(C0p=C0p, C0=C0, C1=C1, N=N, beta1=beta1, p0=p0, delta=delta, chi=chi, chi_bar=chi_bar)
        k.eps0 = frac * min(k.eps0_upper(), k.lam_bar / 8.0)
        k.c = c if c is not None else min(C0p, 1.0) * 0.5
        # eps0 < c/2 is needed by the curvature estimate
        k.eps0 = min(k.eps0, frac * k.c / 2.0)
        lo = C0 / (C0p * p0)
        hi = min(k.c / (2 * k.c + 16 * C0p), k.pipeline_eta_upper())
        k.eta = lo + frac * (hi - lo) if hi > lo else hi * frac
        for key, val in extra.items():
            setattr(k, key, val)
        return k

    @classmethod
    def from_dict(cls, d: dict) -> "Constants":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise KeyError(f"unknown constants: {sorted(unknown)}")
        return cls(**d)


def moment_rate(delta: float, C1: float, N: int) -> float:
    """Rate chi = delta * C1 / (2N) of the negative-moment decay."""
    return delta * C1 / (2.0 * N)


MOMENT_PREFACTOR_LOG = math.log(4.0 * math.e / 3.0)


# ---------------------------------------------------------------------------
# deterministic random streams


def spawn_generators(seed: int, count: int) -> list:
    """Independent PCG64 streams derived from one 64-bit seed via SeedSequence.spawn."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1))
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(count)]


def generator(seed: int) -> np.random.Generator:
    return spawn_generators(seed, 1)[0]

"""Finite-time hyperbolicity of the derivative cocycle: singular data,
pulled-back directions, expansion certificates, moment and angle statistics,
transversality and distortion probes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import (
    MOMENT_PREFACTOR_LOG,
    Constants,
    DrivingMeasure,
    RandomSystem,
    enumerate_word_array,
    sample_words,
)
from .torus import ProjectiveDirection, proj_angle, proj_angle_array

SPLIT_TOL = 1e-9
Z95 = 1.959963984540054
BOOTSTRAP_RESAMPLES = 200


# ---------------------------------------------------------------------------
# closed-form 2x2 singular value decomposition


def svd2(P, log_jac=None):
    """Singular data of (..., 2, 2) matrices in closed form.

    Returns (lam_u, lam_s, eu, es, uu, us): singular values, right singular
    vectors (most expanded / most contracted input directions) and left
    singular vectors (their normalised images). When the log-determinant of
    a long product is known from its factors, passing it as ``log_jac``
    avoids the cancellation in ad - bc.
    """
    P = np.asarray(P, dtype=float)
    a, b, c, d = P[..., 0, 0], P[..., 0, 1], P[..., 1, 0], P[..., 1, 1]
    s11 = a * a + c * c
    s22 = b * b + d * d
    s12 = a * b + c * d
    theta = 0.5 * np.arctan2(2.0 * s12, s11 - s22)
    eu = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    es = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    img_u = np.einsum("...ij,...j->...i", P, eu)
    lam_u = np.hypot(img_u[..., 0], img_u[..., 1])
    det = np.abs(a * d - b * c) if log_jac is None else np.exp(log_jac)
    lam_s = det / lam_u
    uu = img_u / lam_u[..., None]
    # left vector of the small singular value is orthogonal to uu; fix its sign by P es
    img_s = np.einsum("...ij,...j->...i", P, es)
    us = np.stack([-uu[..., 1], uu[..., 0]], axis=-1)
    sign = np.where(np.sum(us * img_s, axis=-1) < 0.0, -1.0, 1.0)
    return lam_u, lam_s, eu, es, uu, us * sign[..., None]


@dataclass
class SingularData:
    lam_u: float
    lam_s: float
    Eu: ProjectiveDirection | None
    Es: ProjectiveDirection | None
    defined: bool
    product: np.ndarray = field(repr=False, default=None)


def _singular_from_product(P, log_jac=None) -> SingularData:
    lu, ls, eu, es, _, _ = svd2(P, log_jac)
    lu, ls = float(lu), float(ls)
    defined = lu > ls * (1.0 + SPLIT_TOL)
    if not defined:
        return SingularData(lu, ls, None, None, False, P)
    return SingularData(lu, ls, ProjectiveDirection(eu), ProjectiveDirection(es), True, P)


def _point(x):
    return x.as_array() if hasattr(x, "as_array") else np.asarray(x, dtype=float)


def singular_data(system: RandomSystem, word, x) -> SingularData:
    word = np.asarray(tuple(word), dtype=np.int64)
    if len(word) == 0:
        raise ValueError("singular data needs a nonempty word")
    _, P, lj = kernels.paired_products(system.diffeos, word[None, :], _point(x)[None, :])
    return _singular_from_product(P[0], lj[0])


@dataclass
class PulledDirections:
    Vu: ProjectiveDirection
    Vs: ProjectiveDirection
    preimage: np.ndarray
    product: np.ndarray = field(repr=False, default=None)


def preimage(system: RandomSystem, word, x) -> np.ndarray:
    """Lifted point y with f^n_word(y) = x."""
    word = np.asarray(tuple(word), dtype=np.int64)
    return kernels.word_preimages(system.diffeos, word[None, :], _point(x)[None, :])[0]


def pulled_directions(system: RandomSystem, word, x) -> PulledDirections:
    """Images under Df^n of the singular directions at the n-step preimage of x."""
    word = np.asarray(tuple(word), dtype=np.int64)
    y = preimage(system, word, x)
    _, P, _ = kernels.paired_products(system.diffeos, word[None, :], y[None, :])
    lu, ls, _, _, uu, us = svd2(P[0])
    if not lu > ls * (1.0 + SPLIT_TOL):
        raise ValueError("singular directions undefined at the preimage (equal singular values)")
    return PulledDirections(ProjectiveDirection(uu), ProjectiveDirection(us), y, P[0])


def pulled_unstable_array(table, words, x):
    """V^u vectors (S, 2) and a defined mask for words (S, n) at one point x."""
    words = np.asarray(words, dtype=np.int64)
    pts = np.broadcast_to(_point(x), (len(words), 2))
    y = kernels.word_preimages(table, words, pts)
    _, P, _ = kernels.paired_products(table, words, y)
    lu, ls, _, _, uu, _ = svd2(P)
    return uu, lu > ls * (1.0 + SPLIT_TOL)


# ---------------------------------------------------------------------------
# expansion certificates


@dataclass
class CertificateReport:
    bound: float
    witness_x: tuple
    witness_v: tuple
    N: int
    passed: bool
    mode: str
    ci: tuple | None = None
    samples: int | None = None
    table: np.ndarray = field(repr=False, default=None)  # (P, V) integrals
    x_grid: np.ndarray = field(repr=False, default=None)
    v_grid: np.ndarray = field(repr=False, default=None)

    def rows(self):
        """(x, y, theta, integral) rows over the grid."""
        out = []
        for i, x in enumerate(self.x_grid):
            for j, v in enumerate(self.v_grid):
                out.append((float(x[0]), float(x[1]), float(math.atan2(v[1], v[0]) % math.pi), float(self.table[i, j])))
        return out


def torus_grid(n: int) -> np.ndarray:
    t = np.arange(n) / n
    return np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)


def direction_grid(count: int, cone=None) -> np.ndarray:
    """Unit vectors at angles j pi / count, optionally restricted to a constant cone.

    cone is (center angle, half width) in radians; a direction belongs to it
    when its line angle to the center line is <= half width.
    """
    th = np.arange(count) * math.pi / count
    v = np.stack([np.cos(th), np.sin(th)], axis=1)
    if cone is not None:
        centre = np.array([math.cos(cone[0]), math.sin(cone[0])])
        keep = proj_angle_array(v, centre[None, :]) <= cone[1] + 1e-12
        v = v[keep]
    if len(v) == 0:
        raise ValueError("direction grid is empty inside the cone")
    return v


POSITIVE_CONE = (math.pi / 4.0, math.pi / 4.0)


def _log_norms(mats, vgrid):
    """ln ||P v|| for mats (..., 2, 2) and vgrid (V, 2) -> (..., V)."""
    y = np.einsum("...ij,vj->...vi", mats, vgrid)
    return np.log(np.hypot(y[..., 0], y[..., 1]))


def _inverse(P):
    det = P[..., 0, 0] * P[..., 1, 1] - P[..., 0, 1] * P[..., 1, 0]
    adj = np.empty_like(P)
    adj[..., 0, 0] = P[..., 1, 1]
    adj[..., 1, 1] = P[..., 0, 0]
    adj[..., 0, 1] = -P[..., 0, 1]
    adj[..., 1, 0] = -P[..., 1, 0]
    return adj / det[..., None, None]


def _certificate(system, N, x_grid, v_grid, past, mode, samples, seed, work_cap, chunk_words):
    table = kernels.pack(system.diffeos)
    mu = system.measure
    P = len(x_grid)
    k = len(mu.indices)
    if mode == "auto":
        mode = "exact" if k**N * P <= work_cap and k**N <= 10**6 else "mc"
    if mode == "exact":
        words, weights = enumerate_word_array(mu, N)
    else:
        from .dynamics import generator

        words = sample_words(mu, N, samples, generator(seed))
        weights = np.full(len(words), 1.0 / len(words))
    V = len(v_grid)
    s1 = np.zeros((P, V))
    s2 = np.zeros((P, V))
    for start in range(0, len(words), chunk_words):
        w = words[start : start + chunk_words]
        wt = weights[start : start + chunk_words]
        if not past:
            _, prods, _ = kernels.word_products(table, w, x_grid)
            vals = _log_norms(prods, v_grid)  # (W, P, V)
        else:
            Wc = len(w)
            ww = np.repeat(w, P, axis=0)
            pts = np.tile(x_grid, (Wc, 1))
            y = kernels.word_preimages(table, ww, pts)
            _, prods, _ = kernels.paired_products(table, ww, y)
            vals = _log_norms(_inverse(prods), v_grid).reshape(Wc, P, V)
        s1 += np.einsum("w,wpv->pv", wt, vals)
        if mode == "mc":
            s2 += np.einsum("w,wpv->pv", wt, vals * vals)
    i, j = np.unravel_index(np.argmin(s1), s1.shape)
    bound = float(s1[i, j])
    ci = None
    if mode == "mc":
        n = len(words)
        var = np.maximum(s2[i, j] - s1[i, j] ** 2, 0.0) * n / max(n - 1, 1)
        half = Z95 * math.sqrt(var / n)
        ci = (bound - half, bound + half)
        passed = ci[0] > 0.0
    else:
        passed = bound > 0.0
    return CertificateReport(
        bound, tuple(map(float, x_grid[i])), tuple(map(float, v_grid[j])), N, passed, mode, ci,
        None if mode == "exact" else len(words), s1, x_grid, v_grid,
    )


def certify_uef(system: RandomSystem, N: int, x_grid=48, v_grid=64, cone=None, mode="auto",
                samples=2048, seed=0, work_cap=2 * 10**7, chunk_words=64) -> CertificateReport:
    """Minimum over grid points and cone directions of E ln ||Df^N(x) v||.

    x_grid and v_grid are either counts or explicit arrays. Exact enumeration
    is used when the word count times grid size fits ``work_cap``; otherwise
    ``samples`` Monte-Carlo words shared across the grid, with a 95% CI on
    the witness.
    """
    xg = torus_grid(x_grid) if np.isscalar(x_grid) else np.asarray(x_grid, dtype=float).reshape(-1, 2)
    vg = direction_grid(v_grid, cone) if np.isscalar(v_grid) else np.asarray(v_grid, dtype=float).reshape(-1, 2)
    return _certificate(system, N, xg, vg, False, mode, samples, seed, work_cap, chunk_words)


def certify_uep(system: RandomSystem, N: int, x_grid=48, v_grid=64, mode="auto",
                samples=2048, seed=0, work_cap=2 * 10**7, chunk_words=16) -> CertificateReport:
    """As certify_uef with integrand ln ||(Df^N(f^{-N} x))^{-1} v||, all directions."""
    xg = torus_grid(x_grid) if np.isscalar(x_grid) else np.asarray(x_grid, dtype=float).reshape(-1, 2)
    vg = direction_grid(v_grid) if np.isscalar(v_grid) else np.asarray(v_grid, dtype=float).reshape(-1, 2)
    return _certificate(system, N, xg, vg, True, mode, samples, seed, work_cap, chunk_words)


# ---------------------------------------------------------------------------
# negative moments


def past_log_norm_trace(table, words, points, vecs):
    """ln ||(Df^k(f^{-k} x))^{-1} v|| for k = 1..n.

    Letter k of each word is the k-th map going backwards from x, so the
    k-step inverse product is built by successive preimages.
    """
    words = np.asarray(words, dtype=np.int64)
    S, n = words.shape
    q = np.array(np.broadcast_to(points, (S, 2)), dtype=float)
    v = np.array(np.broadcast_to(vecs, (S, 2)), dtype=float)
    out = np.empty((S, n))
    acc = np.zeros(S)
    for k in range(n):
        letter = words[:, k : k + 1]
        y = kernels.word_preimages(table, letter, q)
        _, J, _ = kernels.paired_products(table, letter, y)
        v = np.einsum("sij,sj->si", _inverse(J), v)
        nv = np.hypot(v[:, 0], v[:, 1])
        acc += np.log(nv)
        v /= nv[:, None]
        out[:, k] = acc
        q = y
    return out


def log_norm_trace(system: RandomSystem, words, x, v, past=False):
    table = kernels.pack(system.diffeos)
    words = np.asarray(words, dtype=np.int64)
    pts = np.broadcast_to(_point(x), (len(words), 2))
    vecs = np.broadcast_to(np.asarray(v, dtype=float), (len(words), 2))
    if past:
        return past_log_norm_trace(table, words, pts, vecs)
    return kernels.word_log_norm_trace(table, words, pts, vecs)


def _tail_slope(logs, n_values):
    """-slope of a least-squares line through (n, ln s_n) on the tail half."""
    half = len(n_values) // 2
    xs, ys = n_values[half:], logs[half:]
    return -float(np.polyfit(xs, ys, 1)[0])


@dataclass
class MomentReport:
    n: np.ndarray
    s: np.ndarray
    chi_hat: float
    ci: tuple
    delta: float
    past: bool
    log_norms: np.ndarray = field(repr=False, default=None)

    def markov_check(self, C: float, chi_bar: float, chi: float | None = None):
        """Empirical tail P(X_n >= e^{-C} e^{-n chi_bar}) against Markov bounds.

        Returns rows (n, tail, markov_bound, exponent_bound, ok); markov_bound
        is s_n e^{C} e^{n chi_bar}, which dominates the empirical tail exactly.
        exponent_bound uses e^{C2} e^{C} e^{-n(chi - chi_bar)} with chi given.
        """
        rows = []
        X = np.exp(-self.delta * self.log_norms)
        for k, n in enumerate(self.n):
            t = math.exp(-C - n * chi_bar)
            tail = float(np.mean(X[:, k] >= t))
            markov = float(self.s[k] / t)
            cor = math.exp(MOMENT_PREFACTOR_LOG + C - n * (chi - chi_bar)) if chi is not None else math.nan
            rows.append((int(n), tail, markov, cor, tail <= markov))
        return rows


def moment_decay(system: RandomSystem, delta: float, n_max: int, x, v, past=False, samples=4096, seed=0,
                 constants: Constants | None = None) -> MomentReport:
    """s_n = E ||Df^n(x) v||^{-delta} (or its past analogue) for n = 1..n_max.

    chi_hat is minus the slope of ln s_n over the tail half, with a bootstrap
    CI over word resamples.
    """
    from .dynamics import generator

    if constants is not None and not 0.0 < delta < constants.delta_upper():
        raise ValueError(f"delta={delta} outside the admissible range (0, {constants.delta_upper():.4g})")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    rng = generator(seed)
    words = sample_words(system.measure, n_max, samples, rng)
    v = np.asarray(v, dtype=float)
    v = v / np.hypot(*v)
    logs = log_norm_trace(system, words, x, v, past=past)
    X = np.exp(-delta * logs)
    s = X.mean(axis=0)
    nv = np.arange(1, n_max + 1, dtype=float)
    chi_hat = _tail_slope(np.log(s), nv)
    boot = np.empty(BOOTSTRAP_RESAMPLES)
    brng = generator(seed + 1)
    for b in range(BOOTSTRAP_RESAMPLES):
        idx = brng.integers(0, samples, samples)
        boot[b] = _tail_slope(np.log(X[idx].mean(axis=0)), nv)
    ci = (float(np.quantile(boot, 0.025)), float(np.quantile(boot, 0.975)))
    return MomentReport(nv.astype(int), s, chi_hat, ci, delta, past, logs)


# ---------------------------------------------------------------------------
# nearly conservative words


def jac_range_freq(system: RandomSystem, n: int, C0: float, eps0: float, samples=2000, grid_n=16, seed=0, mode="auto"):
    """Fraction of words with Jac f^n in (e^{-C0-2n eps0}, e^{C0+2n eps0}) on a grid.

    Returns (fraction, standard error); the error is 0 in enumeration mode.
    """
    from .dynamics import generator

    k = len(system.measure.indices)
    if mode == "auto":
        mode = "exact" if k**n <= samples else "mc"
    if mode == "exact":
        words, weights = enumerate_word_array(system.measure, n)
    else:
        words = sample_words(system.measure, n, samples, generator(seed))
        weights = np.full(samples, 1.0 / samples)
    good = in_nearly_conservative(system, words, C0, eps0, grid_n)
    frac = float(np.count_nonzero(good)) / samples if mode == "mc" else min(1.0, float(np.sum(weights[good])))
    se = 0.0 if mode == "exact" else math.sqrt(frac * (1 - frac) / samples)
    return frac, se


def in_nearly_conservative(system, words, C0, eps0, grid_n=16, chunk=256):
    """Boolean mask: word Jacobian stays inside the drift window on the grid."""
    table = kernels.pack(system.diffeos)
    words = np.asarray(words, dtype=np.int64)
    n = words.shape[1]
    if all(f.is_linear for f in system.diffeos) or not any(
        m.a != (0.0, 0.0) for f in system.diffeos for m in f.modes
    ):
        return np.full(len(words), 0.0 < C0 + 2 * n * eps0)
    xg = torus_grid(grid_n)
    lim = C0 + 2.0 * n * eps0
    out = np.empty(len(words), dtype=bool)
    for s in range(0, len(words), chunk):
        _, _, lj = kernels.word_products(table, words[s : s + chunk], xg)
        out[s : s + chunk] = np.all(np.abs(lj) < lim, axis=1)
    return out


def nearly_conservative_threshold(eps1: float) -> float:
    """Lower bound that -ln(eps2) must exceed for word-frequency control."""
    return 1.0 / eps1 - math.log(eps1) - ((1.0 - eps1) / eps1) * math.log(1.0 - eps1)


# ---------------------------------------------------------------------------
# angle tails


@dataclass
class AngleTail:
    eta: np.ndarray
    P: np.ndarray
    beta1: float
    C3: float
    ci: tuple
    reliable: bool
    mode: str
    angles: np.ndarray = field(repr=False, default=None)


def _fit_tail(angles, etas, samples):
    P = np.array([np.mean(angles < e) for e in etas])
    mask = P * samples > 10
    if mask.sum() < 3:
        return P, math.nan, math.nan, False
    slope, icpt = np.polyfit(np.log(etas[mask]), np.log(P[mask]), 1)
    return P, float(slope), float(math.exp(icpt)), True


def angle_tail(system: RandomSystem, n: int, x, v, mode="stable", samples=100000, seed=0, batch=20000) -> AngleTail:
    """Empirical P(angle < eta) at dyadic eta >= e^{-n}, with a log-log power fit.

    mode "stable": angle between E^s of the word at x and v.
    mode "pulled": angle between V^u of the word at x and v.
    Undefined directions count as angle 0.
    """
    from .dynamics import generator

    if mode not in ("stable", "pulled"):
        raise ValueError("mode must be 'stable' or 'pulled'")
    table = kernels.pack(system.diffeos)
    rng = generator(seed)
    v = np.asarray(v, dtype=float)
    xp = _point(x)
    angles = np.empty(samples)
    for s in range(0, samples, batch):
        m = min(batch, samples - s)
        words = sample_words(system.measure, n, m, rng)
        if mode == "stable":
            _, P, _ = kernels.paired_products(table, words, np.broadcast_to(xp, (m, 2)))
            lu, ls, _, es, _, _ = svd2(P)
            ok = lu > ls * (1.0 + SPLIT_TOL)
            dirs = es
        else:
            dirs, ok = pulled_unstable_array(table, words, xp)
        ang = proj_angle_array(dirs, v[None, :])
        angles[s : s + m] = np.where(ok, ang, 0.0)
    etas = 2.0 ** -np.arange(1, 64)
    etas = etas[etas >= math.exp(-n)]
    P, beta, C3, reliable = _fit_tail(angles, etas, samples)
    ci = (math.nan, math.nan)
    if reliable:
        brng = generator(seed + 1)
        boot = []
        for _ in range(BOOTSTRAP_RESAMPLES):
            a = angles[brng.integers(0, samples, samples)]
            _, b, _, ok = _fit_tail(a, etas, samples)
            if ok:
                boot.append(b)
        if len(boot) >= BOOTSTRAP_RESAMPLES // 2:
            ci = (float(np.quantile(boot, 0.025)), float(np.quantile(boot, 0.975)))
        else:
            reliable = False
    return AngleTail(etas, P, beta, C3, ci, reliable, mode, angles)


# ---------------------------------------------------------------------------
# transversality


def transversality_threshold(n: int, constants: Constants) -> float:
    return 5.0 * math.exp(constants.C0 - constants.lam_hat * n)


def transverse(system: RandomSystem, word1, word2, z, constants: Constants) -> bool:
    """Both pulled unstable directions at z are defined and at least 5 e^{C0 - lam_hat n} apart."""
    w1, w2 = tuple(word1), tuple(word2)
    if len(w1) != len(w2):
        raise ValueError("transversality compares words of equal length")
    try:
        a = pulled_directions(system, w1, z).Vu
        b = pulled_directions(system, w2, z).Vu
    except ValueError:
        return False
    return proj_angle(a, b) >= transversality_threshold(len(w1), constants)


def transverse_fraction(system: RandomSystem, n: int, z, constants: Constants, pairs=2000, seed=0):
    """Monte-Carlo fraction of independent word pairs transverse at z, with standard error."""
    from .dynamics import generator

    table = kernels.pack(system.diffeos)
    rng = generator(seed)
    w1 = sample_words(system.measure, n, pairs, rng)
    w2 = sample_words(system.measure, n, pairs, rng)
    u1, ok1 = pulled_unstable_array(table, w1, z)
    u2, ok2 = pulled_unstable_array(table, w2, z)
    ang = proj_angle_array(u1, u2)
    good = ok1 & ok2 & (ang >= transversality_threshold(n, constants))
    frac = float(good.mean())
    return frac, math.sqrt(frac * (1 - frac) / pairs)


# ---------------------------------------------------------------------------
# distortion probes in offset coordinates
#
# The hypothesis ball has radius e^{-6 n C0'}, far below double resolution
# near O(1) coordinates. Points near z are therefore carried as z plus an
# offset, and every map is applied in difference form so offsets keep full
# relative precision.


def _sin_diff(phase, theta):
    """sin(phase + theta) - sin(phase), stable for tiny theta."""
    return np.cos(phase) * np.sin(theta) - 2.0 * np.sin(phase) * np.sin(0.5 * theta) ** 2


def _cos_diff(phase, theta):
    return -np.sin(phase) * np.sin(theta) - 2.0 * np.cos(phase) * np.sin(0.5 * theta) ** 2


def _offset_step(f, z, d):
    """Offset of f(z + d) from f(z), and Df(z + d) - Df(z)."""
    out = f.matrix.astype(float) @ d
    dD = np.zeros((2, 2))
    for m in f.modes:
        k = np.array(m.k, dtype=float)
        a = np.array(m.a)
        ph = 2 * math.pi * float(k @ z) + m.phase
        th = 2 * math.pi * float(k @ d)
        out = out + a * _sin_diff(ph, th)
        dD += _cos_diff(ph, th) * np.outer(a, 2 * math.pi * k)
    return out, dD


def _offset_inverse(f, fz, z, e):
    """Offset d with f(z + d) = f(z) + e, by Newton in difference form."""
    minv = np.linalg.inv(f.matrix.astype(float))
    d = minv @ e
    scale = max(float(np.max(np.abs(e))), 1e-300)
    for _ in range(64):
        img, dD = _offset_step(f, z, d)
        r = img - e
        if np.max(np.abs(r)) <= 1e-15 * scale:
            break
        J = f.lift_derivative(z) + dD
        d = d - np.linalg.solve(J, r)
    return d


@dataclass
class DistortionProbe:
    accepted: bool
    reason: str = ""
    divergence: np.ndarray = None  # d(f^{n-k} x, f^{n-k} y), k = 0..n
    divergence_bound: np.ndarray = None
    vector_deviation: float = math.nan
    angle_deviation: float = math.nan
    derivative_bound: float = math.nan
    es_gap: float = math.nan
    es_gap_bound: float = math.nan
    js_product: float = math.nan
    js_window: tuple = (math.nan, math.nan)
    hypotheses: dict = field(default_factory=dict)
    passes: dict = field(default_factory=dict)


def _es_shift(P, dP):
    """First-order change of the E^s angle of P under P + dP (exact for tiny dP)."""
    lu, ls, eu, es, _, _ = svd2(P)
    dS = P.T @ dP + dP.T @ P
    return float(eu @ dS @ es) / (lu * lu - ls * ls)


def distortion_probe(system: RandomSystem, word, z, x_offset, y_offset, v, constants: Constants, eta=None,
                     c=None) -> DistortionProbe:
    """Measure the bounded-distortion quantities for x = z + x_offset, y = z + y_offset.

    The probe is declined unless f^n(x), f^n(y) lie in B(f^n z, e^{-6 n C0'}).
    The E^s gap and the E^s product window are reported with their extra
    hypotheses (Jacobian drift window, ||Df^n(z)|| >= e^{cn}, angle of v to
    E^s(z) >= e^{-n eta}) recorded in ``hypotheses``.
    """
    word = tuple(word)
    n = len(word)
    C0p = constants.C0p
    z = _point(z).astype(float)
    v = np.asarray(v, dtype=float)
    v = v / np.hypot(*v)
    dx = np.asarray(x_offset, dtype=float)
    dy = np.asarray(y_offset, dtype=float)
    zs = [z]
    offx, offy = [dx], [dy]
    Pz = np.eye(2)
    dPx = np.zeros((2, 2))
    dPy = np.zeros((2, 2))
    jac_logs = []
    for i in word:
        f = system.diffeos[i]
        zk = zs[-1]
        Dz = f.lift_derivative(zk)
        ex, dDx = _offset_step(f, zk, offx[-1])
        ey, dDy = _offset_step(f, zk, offy[-1])
        # (Dz + dDx)(Pz + dPx) - Dz Pz
        dPx = Dz @ dPx + dDx @ (Pz + dPx)
        dPy = Dz @ dPy + dDy @ (Pz + dPy)
        Pz = Dz @ Pz
        zs.append(f.lift_eval(zk))
        offx.append(ex)
        offy.append(ey)
        jac_logs.append(math.log(abs(np.linalg.det(Dz))))
    r = math.exp(-6 * n * C0p)
    if np.hypot(*offx[-1]) >= r or np.hypot(*offy[-1]) >= r:
        return DistortionProbe(False, f"f^n(x) or f^n(y) outside B(f^n z, e^(-6 n C0')) = {r:.3g}")
    div = np.array([float(np.hypot(*(offx[n - k] - offy[n - k]))) for k in range(n + 1)])
    div_bound = np.array([2.0 * math.exp((k - 6 * n) * C0p) for k in range(n + 1)])
    wx = (Pz + dPx) @ v
    e = (dPx - dPy) @ v  # Df^n(x) v - Df^n(y) v
    vec_dev = float(np.hypot(*e))
    cross = abs(wx[0] * e[1] - wx[1] * e[0])  # cross(wx, wy) = cross(wx, wy - wx)
    wy = (Pz + dPy) @ v
    ang_dev = math.atan2(cross, abs(float(wx @ wy)))
    dbound = math.exp(-3 * n * C0p)
    gap = abs(_es_shift(Pz, dPx) - _es_shift(Pz, dPy))
    lu_z, ls_z, _, es_z, _, _ = svd2(Pz)
    lu_y, ls_y, _, es_y, _, _ = svd2(Pz + dPy)
    js = float(np.hypot(*((Pz + dPx) @ v))) * float(ls_y)
    eta = constants.eta if eta is None else eta
    c = constants.c if c is None else c
    eps0, C0 = constants.eps0, constants.C0
    window = (math.exp(-n * (2 * eps0 + eta) - C0 - 2), math.exp(2 * eps0 * n + C0 + 2))
    # hypotheses for the E^s statements: Jacobian window checked along the orbit of z
    hyp = {
        "jacobian window": bool(abs(sum(jac_logs)) < C0 + 2 * n * eps0),
        "expansion at z": bool(lu_z >= math.exp(c * n)),
        "v away from Es(z)": bool(proj_angle(v, es_z) >= math.exp(-n * eta)),
    }
    passes = {
        "divergence": bool(np.all(div <= div_bound)),
        "vector deviation": bool(vec_dev <= dbound),
        "angle deviation": bool(ang_dev <= dbound),
        "Es gap": bool(gap < 0.5 * math.exp(-n * C0p)),
        "Es product window": bool(window[0] <= js <= window[1]),
    }
    return DistortionProbe(True, "", div, div_bound, vec_dev, ang_dev, dbound, gap, 0.5 * math.exp(-n * C0p), js,
                           window, hyp, passes)


def probe_pair(system: RandomSystem, word, z, constants: Constants, rng, shrink=0.5):
    """Offsets of two points whose n-step images lie in the hypothesis ball around f^n z."""
    word = tuple(word)
    n = len(word)
    z = _point(z).astype(float)
    orbit = [z]
    for i in word:
        orbit.append(system.diffeos[i].lift_eval(orbit[-1]))
    r = shrink * math.exp(-6 * n * constants.C0p)
    offs = []
    for _ in range(2):
        ang = rng.uniform(0, 2 * math.pi)
        e = r * math.sqrt(rng.uniform()) * np.array([math.cos(ang), math.sin(ang)])
        for k in range(n - 1, -1, -1):
            f = system.diffeos[word[k]]
            e = _offset_inverse(f, orbit[k + 1], orbit[k], e)
        offs.append(e)
    return offs[0], offs[1]

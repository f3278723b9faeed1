"""C^2 curves on the torus carried as refined node chains.

A curve remembers its origin (an analytic parametrised curve), the range of
the origin parameter it covers and the maps applied so far. Nodes hold the
lifted position, unit tangent, signed curvature, log of the accumulated
stretch and cumulative arclength. New nodes are always computed exactly by
pushing the origin point through the whole history, so refinement never
interpolates geometry.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import Diffeo, c2_bound
from .torus import wrap_array

H_MAX = 1e-3
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


# ---------------------------------------------------------------------------
# analytic origins


class Origin:
    """Parametrised planar curve u -> (position, first and second derivative).

    ``sigma(u)`` is arclength from u = 0; ``u_of_sigma`` inverts it.
    """

    kind = "generic"

    def jets(self, u):
        raise NotImplementedError

    def sigma(self, u):
        return np.asarray(u, dtype=float)

    def u_of_sigma(self, s):
        return np.asarray(s, dtype=float)

    def describe(self) -> dict:
        return {"kind": self.kind}


class SegmentOrigin(Origin):
    kind = "segment"

    def __init__(self, start, angle):
        self.start = np.asarray(start, dtype=float)
        self.angle = float(angle)
        self.dir = np.array([math.cos(angle), math.sin(angle)])

    def jets(self, u):
        u = np.asarray(u, dtype=float)[:, None]
        pos = self.start + u * self.dir
        return pos, np.broadcast_to(self.dir, pos.shape).copy(), np.zeros_like(pos)

    def describe(self):
        return {"kind": self.kind, "start": self.start.tolist(), "angle": self.angle}


class CircleOrigin(Origin):
    """Counter-clockwise arc of radius r starting at ``start``, initial polar angle phi0."""

    kind = "circle"

    def __init__(self, start, radius, phi0=0.0):
        self.r = float(radius)
        self.phi0 = float(phi0)
        self.centre = np.asarray(start, dtype=float) - self.r * np.array([math.cos(phi0), math.sin(phi0)])

    def jets(self, u):
        th = self.phi0 + np.asarray(u, dtype=float) / self.r
        c, s = np.cos(th), np.sin(th)
        pos = self.centre + self.r * np.stack([c, s], axis=1)
        d1 = np.stack([-s, c], axis=1)
        d2 = -np.stack([c, s], axis=1) / self.r
        return pos, d1, d2

    def describe(self):
        return {"kind": self.kind, "centre": self.centre.tolist(), "radius": self.r, "phi0": self.phi0}


class SineOrigin(Origin):
    """Graph y = y0 + amp sin(2 pi freq (x - x0) + phase), parametrised by x - x0."""

    kind = "sine"

    def __init__(self, start, amp, freq=1.0, phase=0.0, table_n=4097, u_max=1.0):
        self.start = np.asarray(start, dtype=float)
        self.amp, self.freq, self.phase = float(amp), float(freq), float(phase)
        self._u_max = float(u_max)
        self._build(table_n)

    def _y(self, u, order):
        w = 2 * math.pi * self.freq
        arg = w * u + self.phase
        if order == 0:
            return self.amp * (np.sin(arg) - math.sin(self.phase))
        if order == 1:
            return self.amp * w * np.cos(arg)
        return -self.amp * w * w * np.sin(arg)

    def _build(self, n):
        u = np.linspace(0.0, self._u_max, n)
        speed = lambda x: np.sqrt(1.0 + self._y(x, 1) ** 2)  # noqa: E731
        a, b = u[:-1], u[1:]
        pts = a[:, None] + (b - a)[:, None] * _GL_X[None, :]
        seg = (speed(pts) * _GL_W[None, :]).sum(axis=1) * (b - a)
        self._u_tab = u
        self._s_tab = np.concatenate([[0.0], np.cumsum(seg)])

    def _ensure(self, umax):
        while umax > self._u_tab[-1]:
            self._u_max *= 2.0
            self._build(2 * len(self._u_tab) - 1)

    def jets(self, u):
        u = np.asarray(u, dtype=float)
        pos = np.stack([self.start[0] + u, self.start[1] + self._y(u, 0)], axis=1)
        d1 = np.stack([np.ones_like(u), self._y(u, 1)], axis=1)
        d2 = np.stack([np.zeros_like(u), self._y(u, 2)], axis=1)
        return pos, d1, d2

    def sigma(self, u):
        u = np.asarray(u, dtype=float)
        self._ensure(float(np.max(u, initial=0.0)))
        i = np.clip(np.searchsorted(self._u_tab, u) - 1, 0, len(self._u_tab) - 2)
        a = self._u_tab[i]
        h = u - a
        pts = a[..., None] + h[..., None] * _GL_X
        part = (np.sqrt(1.0 + self._y(pts, 1) ** 2) * _GL_W).sum(axis=-1) * h
        return self._s_tab[i] + part

    def u_of_sigma(self, s):
        s = np.asarray(s, dtype=float)
        while float(np.max(s, initial=0.0)) > self._s_tab[-1]:
            self._ensure(2.0 * self._u_tab[-1])
        u = np.interp(s, self._s_tab, self._u_tab)
        for _ in range(6):
            u = u - (self.sigma(u) - s) / np.sqrt(1.0 + self._y(u, 1) ** 2)
        return u

    def describe(self):
        return {"kind": self.kind, "start": self.start.tolist(), "amp": self.amp, "freq": self.freq, "phase": self.phase}


# ---------------------------------------------------------------------------
# node evaluation through a history of maps


def _push_jets(f: Diffeo, pos, tan, kappa, stretch):
    """Exact image of (position, unit tangent, signed curvature) under f."""
    img, D, D2 = f.lift_jet(pos)
    V = np.einsum("nij,nj->ni", D, tan)
    g = np.hypot(V[:, 0], V[:, 1])
    Q = np.einsum("nijk,nj,nk->ni", D2, tan, tan)
    detD = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
    cross = V[:, 0] * Q[:, 1] - V[:, 1] * Q[:, 0]
    new_kappa = (kappa * detD + cross) / g**3
    return img, V / g[:, None], new_kappa, stretch + np.log(g)


def evaluate(origin: Origin, history, u):
    """Nodes at origin parameters u after applying every map in history."""
    pos, d1, d2 = origin.jets(u)
    sp = np.hypot(d1[:, 0], d1[:, 1])
    tan = d1 / sp[:, None]
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / sp**3
    # stretch is measured against the origin's own arclength
    stretch = np.zeros(len(pos))
    for f in history:
        pos, tan, kappa, stretch = _push_jets(f, pos, tan, kappa, stretch)
    return pos, tan, kappa, stretch, sp


def _hermite_arc(p0, p1, m0, m1, tau=1.0):
    """Arclength of the cubic Hermite segment over [0, tau] (vectorised)."""
    tau = np.asarray(tau, dtype=float)
    x = tau[..., None] * _GL_X
    h00p = 6 * x * x - 6 * x
    h10p = 3 * x * x - 4 * x + 1
    h01p = -h00p
    h11p = 3 * x * x - 2 * x
    d = (h00p[..., None] * p0[..., None, :] + h10p[..., None] * m0[..., None, :]
         + h01p[..., None] * p1[..., None, :] + h11p[..., None] * m1[..., None, :])
    return (np.hypot(d[..., 0], d[..., 1]) * _GL_W).sum(axis=-1) * tau


@dataclass
class Curve:
    origin: Origin
    history: tuple
    u: np.ndarray
    pos: np.ndarray
    tan: np.ndarray
    kappa: np.ndarray
    stretch: np.ndarray
    s: np.ndarray
    h_max: float = H_MAX
    closed: bool = False

    # -- construction ------------------------------------------------------
    @classmethod
    def from_origin(cls, origin: Origin, u0: float, u1: float, history=(), h_max=H_MAX, closed=False):
        n0 = max(2, int(math.ceil((u1 - u0) / h_max)) + 1)
        u = np.linspace(u0, u1, n0)
        return cls._build(origin, tuple(history), u, h_max, closed)

    @classmethod
    def _build(cls, origin, history, u, h_max, closed=False):
        pos, tan, kappa, stretch, sp = evaluate(origin, history, u)
        c = cls(origin, history, u, pos, tan, kappa, stretch, np.zeros(len(u)), h_max, closed)
        c._speed_origin = sp
        c._arclengths()
        c._refine()
        return c

    def _speed(self):
        return self._speed_origin * np.exp(self.stretch)

    def _segment_arcs(self):
        du = np.diff(self.u)
        sp = self._speed()
        m = self.tan * sp[:, None]
        return _hermite_arc(self.pos[:-1], self.pos[1:], m[:-1] * du[:, None], m[1:] * du[:, None])

    def _arclengths(self):
        self.s = np.concatenate([[0.0], np.cumsum(self._segment_arcs())])

    def _refine(self):
        for _ in range(60):
            arcs = np.diff(self.s)
            long = np.flatnonzero(arcs > self.h_max)
            if len(long) == 0:
                return
            # split each long segment into enough equal parameter pieces at once
            pieces = np.ceil(arcs[long] / self.h_max).astype(int)
            new_u = np.concatenate([
                self.u[i] + (self.u[i + 1] - self.u[i]) * np.arange(1, k) / k for i, k in zip(long, pieces)
            ])
            pos, tan, kappa, stretch, sp = evaluate(self.origin, self.history, new_u)
            u = np.concatenate([self.u, new_u])
            order = np.argsort(u, kind="stable")
            self.u = u[order]
            self.pos = np.concatenate([self.pos, pos])[order]
            self.tan = np.concatenate([self.tan, tan])[order]
            self.kappa = np.concatenate([self.kappa, kappa])[order]
            self.stretch = np.concatenate([self.stretch, stretch])[order]
            self._speed_origin = np.concatenate([self._speed_origin, sp])[order]
            self._arclengths()
        raise RuntimeError("curve refinement did not converge")

    # -- basic queries ---------------------------------------------------
    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def n_nodes(self) -> int:
        return len(self.u)

    def max_abs_curvature(self) -> float:
        return float(np.max(np.abs(self.kappa)))

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.length * (1 + 1e-12) + 1e-15):
            raise ValueError("parameter outside [0, length]")
        i = np.clip(np.searchsorted(self.s, t, side="right") - 1, 0, len(self.s) - 2)
        return i

    def u_at(self, t):
        """Origin parameter at arclength t, solved on the Hermite segment by Newton."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        i = self._locate(t)
        du = self.u[i + 1] - self.u[i]
        sp = self._speed()
        m0 = self.tan[i] * (sp[i] * du)[:, None]
        m1 = self.tan[i + 1] * (sp[i + 1] * du)[:, None]
        seg = self.s[i + 1] - self.s[i]
        target = t - self.s[i]
        tau = np.where(seg > 0, target / np.where(seg > 0, seg, 1.0), 0.0)
        p0, p1 = self.pos[i], self.pos[i + 1]
        for _ in range(8):
            x = tau
            d = ((6 * x * x - 6 * x)[:, None] * (p0 - p1) + (3 * x * x - 4 * x + 1)[:, None] * m0
                 + (3 * x * x - 2 * x)[:, None] * m1)
            speed = np.hypot(d[:, 0], d[:, 1])
            resid = _hermite_arc(p0, p1, m0, m1, tau) - target
            tau = np.clip(tau - resid / np.where(speed > 0, speed, 1.0), 0.0, 1.0)
        return self.u[i] + tau * du

    def point_at(self, t):
        """Exact lifted point at arclength t."""
        u = self.u_at(t)
        return evaluate(self.origin, self.history, u)[0]

    def frame_at(self, t):
        u = self.u_at(t)
        pos, tan, kappa, stretch, _ = evaluate(self.origin, self.history, u)
        return pos, tan, kappa, stretch

    def sample_u(self, midpoints=True):
        """Node parameters, optionally with segment midpoints (the certified cover)."""
        if not midpoints:
            return self.u.copy()
        mid = 0.5 * (self.u[:-1] + self.u[1:])
        return np.sort(np.concatenate([self.u, mid]))

    # -- transformations -------------------------------------------------
    def push(self, f: Diffeo) -> "Curve":
        pos, tan, kappa, stretch = _push_jets(f, self.pos, self.tan, self.kappa, self.stretch)
        c = Curve(self.origin, self.history + (f,), self.u.copy(), pos, tan, kappa, stretch, self.s, self.h_max, self.closed)
        c._speed_origin = self._speed_origin.copy()
        c._arclengths()
        c._refine()
        return c

    def sub(self, t0: float, t1: float) -> "Curve":
        """Sub-curve between arclengths t0 < t1 with nodes reused inside."""
        ua, ub = self.u_at([t0, t1])
        inside = (self.u > ua) & (self.u < ub)
        pos, tan, kappa, stretch, sp = evaluate(self.origin, self.history, np.array([ua, ub]))
        c = Curve(
            self.origin, self.history,
            np.concatenate([[ua], self.u[inside], [ub]]),
            np.concatenate([pos[:1], self.pos[inside], pos[1:]]),
            np.concatenate([tan[:1], self.tan[inside], tan[1:]]),
            np.concatenate([kappa[:1], self.kappa[inside], kappa[1:]]),
            np.concatenate([stretch[:1], self.stretch[inside], stretch[1:]]),
            np.zeros(int(inside.sum()) + 2), self.h_max,
        )
        c._speed_origin = np.concatenate([sp[:1], self._speed_origin[inside], sp[1:]])
        c._arclengths()
        c._refine()
        return c

    def wrapped_positions(self):
        return wrap_array(self.pos)

    def dump_rows(self):
        """Rows (s, x, y, tx, ty, kappa) with wrapped positions."""
        w = self.wrapped_positions()
        return np.column_stack([self.s, w, self.tan, self.kappa])


def make_curve(spec: str, length: float, start=(0.0, 0.0), h_max=H_MAX, **params) -> Curve:
    """Arclength-parametrised curve of the given length.

    spec is "segment" (params: angle), "circle" (radius, phi0) or "sine"
    (amp, freq, phase; the graph y = y0 + amp sin(2 pi freq (x - x0) + phase)).
    """
    if not length > 0:
        raise ValueError("curve length must be positive")
    if spec == "segment":
        origin = SegmentOrigin(start, params.get("angle", 0.0))
        u1 = length
    elif spec == "circle":
        r = params.get("radius", 0.2)
        origin = CircleOrigin(start, r, params.get("phi0", 0.0))
        u1 = length
        if length > 2 * math.pi * r + 1e-12:
            warnings.warn("arc longer than its circle; the curve overlaps itself")
    elif spec == "sine":
        origin = SineOrigin(start, params.get("amp", 0.1), params.get("freq", 1.0), params.get("phase", 0.0))
        u1 = float(origin.u_of_sigma(np.array([length]))[0])
    else:
        raise ValueError(f"unknown curve spec {spec!r}")
    if length > 1.0:
        warnings.warn("curve longer than the torus injectivity scale; self-overlap is possible")
    return Curve.from_origin(origin, 0.0, u1, h_max=h_max)


def curvature(curve: Curve, t) -> float:
    """Signed curvature at arclength t, computed exactly at the interpolated parameter."""
    _, _, kappa, _ = curve.frame_at(t)
    return float(kappa[0]) if np.ndim(t) == 0 else kappa


def push_curve(f: Diffeo, curve: Curve) -> Curve:
    return curve.push(f)


def push_word(diffeos, word, curve: Curve) -> Curve:
    for i in word:
        curve = curve.push(diffeos[i])
    return curve


def fd_curvature(curve: Curve, t: float, h: float = 1e-4) -> float:
    """Finite-difference curvature of the image, built from exact point evaluations
    in the origin parameter (independent of the jet recursion)."""
    u = float(curve.u_at(t)[0])
    us = u + h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    pos, _, _, _, _ = evaluate(curve.origin, curve.history, us)
    d1 = (pos[0] - 8 * pos[1] + 8 * pos[3] - pos[4]) / (12 * h)
    d2 = (-pos[0] + 16 * pos[1] - 30 * pos[2] + 16 * pos[3] - pos[4]) / (12 * h * h)
    return float((d1[0] * d2[1] - d1[1] * d2[0]) / np.hypot(*d1) ** 3)


def curvature_transform_check(f: Diffeo, curve: Curve, t: float, A: float | None = None) -> dict:
    """Compare |curv| of the image at the point over gamma(t) with the one-step curvature bound.

    With the curve parametrised by arclength, ||gamma'|| = 1 and the bound is
    A / ||DF T||^2 + Jac |kappa| / ||DF T||^3.
    """
    if A is None:
        A = c2_bound(f)
    pos, tan, kappa, _ = curve.frame_at(t)
    _, D, D2 = f.lift_jet(pos)
    V = D[0] @ tan[0]
    g = float(np.hypot(*V))
    Q = np.einsum("ijk,j,k->i", D2[0], tan[0], tan[0])
    det = float(np.linalg.det(D[0]))
    exact = (kappa[0] * det + (V[0] * Q[1] - V[1] * Q[0])) / g**3
    rhs = A / g**2 + abs(det) * abs(kappa[0]) / g**3
    return {"lhs": abs(float(exact)), "rhs": float(rhs), "exact": float(exact), "second_term": abs(det) * abs(kappa[0]) / g**3,
            "ok": abs(float(exact)) <= rhs * (1 + 1e-12)}


# ---------------------------------------------------------------------------
# cut-short map


@dataclass
class PointedCurve:
    curve: Curve
    t: float

    def __post_init__(self):
        if not -1e-12 <= self.t <= self.curve.length * (1 + 1e-12):
            raise ValueError("pointed parameter outside the curve")

    def point(self):
        return self.curve.point_at(self.t)[0]


def cut_pieces(length: float, a: float):
    """Piece count and piece length of the cut-short map for a curve of this length."""
    if a <= 0:
        raise ValueError("cut length must be positive")
    if length <= 2 * a:
        return 1, length
    q = int(math.floor(length / a))
    return q, length / q


def cut_index(t: float, length: float, a: float):
    """(piece index, local parameter) for the cut-short map."""
    q, piece = cut_pieces(length, a)
    if q == 1:
        return 0, t
    idx = min(int(math.floor(t * q / length)), q - 1)
    return idx, t - idx * piece


def cut_short(p: PointedCurve, a: float) -> PointedCurve:
    q, piece = cut_pieces(p.curve.length, a)
    if q == 1:
        return p
    idx, local = cut_index(p.t, p.curve.length, a)
    sub = p.curve.sub(idx * piece, min((idx + 1) * piece, p.curve.length))
    return PointedCurve(sub, min(max(local, 0.0), sub.length))


def split_curve(curve: Curve, a: float):
    """All pieces the cut-short map produces for this curve."""
    q, piece = cut_pieces(curve.length, a)
    if q == 1:
        return [curve]
    edges = [k * piece for k in range(q)] + [curve.length]
    return [curve.sub(edges[k], edges[k + 1]) for k in range(q)]


# ---------------------------------------------------------------------------
# component lengths in small balls


def component_length_bound_check(curve: Curve, z, rho: float, x, K: float | None = None, rho_prime=None):
    """Lengths of the components of curve cap B(x, rho) and connectivity of
    J cap B(x, rho') for components J of curve cap B(z, 2 rho).

    Declined (returns None) unless rho < min(1/(4K), 1/4) and x in B(z, rho).
    """
    from .torus import dist_array

    K = curve.max_abs_curvature() if K is None else K
    lim = min(1.0 / (4 * K) if K > 0 else math.inf, 0.25)
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if not rho < lim or float(dist_array(x, z)) >= rho or curve.max_abs_curvature() > K * (1 + 1e-9):
        return None
    dx = dist_array(curve.pos, x[None, :])
    comps = _components(curve.s, dx <= rho)
    lengths = [float(curve.s[b] - curve.s[a]) for a, b in comps]
    rho_prime = 0.5 * rho if rho_prime is None else rho_prime
    dz = dist_array(curve.pos, z[None, :])
    connected = True
    for a, b in _components(curve.s, dz < 2 * rho):
        sub = dx[a : b + 1] < rho_prime
        if len(_components(curve.s[a : b + 1], sub)) > 1:
            connected = False
    return {"lengths": lengths, "bound": 4 * rho, "ok": all(l <= 4 * rho for l in lengths), "connected": connected}


def _components(s, mask):
    """Index ranges [a, b] of maximal runs of True in mask."""
    out = []
    i, n = 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            out.append((i, j))
            i = j + 1
        else:
            i += 1
    return out


# ---------------------------------------------------------------------------
# tail conditions along a word


def tangent_traces(diffeos, word, curve: Curve, midpoints=True):
    """Per-step log stretch ln||D f^k gamma'|| and log Jacobian at the node cover.

    Returns arrays (n+1, P) for k = 0..n, both zero at k = 0.
    """
    u = curve.sample_u(midpoints)
    pos, tan, _, _, _ = evaluate(curve.origin, curve.history, u)
    n = len(word)
    ls = np.zeros((n + 1, len(u)))
    lj = np.zeros((n + 1, len(u)))
    for k, i in enumerate(word):
        f = diffeos[i]
        D = f.lift_derivative(pos)
        V = np.einsum("nij,nj->ni", D, tan)
        g = np.hypot(V[:, 0], V[:, 1])
        tan = V / g[:, None]
        pos = f.lift_eval(pos)
        ls[k + 1] = ls[k] + np.log(g)
        lj[k + 1] = lj[k] + np.log(np.abs(D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]))
    return ls, lj


def _tail_counts(violate, eta):
    """Per-k violation counts over slots k+1..m and the tail verdict.

    At k = m the slot set is empty and the condition is read as vacuous.
    """
    m = len(violate)
    counts = np.array([int(np.sum(violate[k:])) for k in range(1, m + 1)])
    ok = all(counts[k - 1] < (m - k) * eta for k in range(1, m))
    return ok, counts


def _blocks(word, p0):
    n = len(word)
    if p0 <= 0 or n % p0:
        raise ValueError("word length must be a positive multiple of p0")
    return n // p0


def nct(diffeos, word, curve: Curve, p0: int, eta: float, C0: float, eps0: float, traces=None):
    """Nearly conservative tails along the curve; returns (verdict, counts, slot violations)."""
    m = _blocks(word, p0)
    _, lj = traces if traces is not None else tangent_traces(diffeos, word, curve)
    jumps = lj[p0::p0] - lj[:-p0:p0] if m else np.zeros((0, lj.shape[1]))
    violate = np.any(np.abs(jumps) > C0 + 2 * eps0 * p0, axis=1)
    ok, counts = _tail_counts(violate, eta)
    return ok, counts, violate


def et(diffeos, word, curve: Curve, p0: int, c: float, eta: float, traces=None):
    """Expanding tails along the curve; returns (verdict, counts, slot violations)."""
    m = _blocks(word, p0)
    ls, _ = traces if traces is not None else tangent_traces(diffeos, word, curve)
    ratios = ls[p0::p0] - ls[:-p0:p0]
    violate = np.any(ratios < c * p0, axis=1)
    ok, counts = _tail_counts(violate, eta)
    return ok, counts, violate


# ---------------------------------------------------------------------------
# explicit constants of the curvature and density estimates (log scale)


def _log_expm1(x):
    return x + math.log1p(-math.exp(-x))


def _logsumexp(*xs):
    m = max(xs)
    return m + math.log(sum(math.exp(x - m) for x in xs))


def log_K1(p0: int, c: float, C0p: float) -> float:
    """ln K1(p0; c) of the curvature-growth bound."""
    t1 = 3 * C0p + 10 * p0 * C0p - _log_expm1(5 * p0 * C0p) - _log_expm1(5 * C0p)
    t3 = 3 * C0p + 5 * p0 * C0p - math.log1p(-math.exp(-c * p0)) - _log_expm1(5 * C0p)
    log_K1p = _logsumexp(t1, 0.0, t3)
    # (e^{(5p0+3)C0p} - e^{3C0p}) / (e^{5C0p} - 1)
    tail = 3 * C0p + _log_expm1(5 * p0 * C0p) - _log_expm1(5 * C0p)
    return _logsumexp(6 * p0 * C0p + log_K1p, tail)


def log_K2(p0: int, c: float, C0p: float) -> float:
    """ln K2(p0; c) of the log-Lipschitz growth bound."""
    lk1 = log_K1(p0, c, C0p)
    lk2p = math.log(2 * p0) + lk1 + (2 + p0) * C0p
    inner = _logsumexp(4 * p0 * C0p - _log_expm1(2 * p0 * C0p), c * p0 - math.log1p(-math.exp(-c * p0 / 2)))
    lk2pp = _logsumexp(0.0, lk2p + inner)
    return _logsumexp(p0 * C0p + lk2pp, math.log(2 * p0) + (3 + 2 * p0) * C0p + lk1)


def curvature_params_ok(eps0, c, C0p, C0, p0, eta) -> list:
    bad = []
    if not eps0 < c / 2 < C0p / 2:
        bad.append("eps0 < c/2 < C0p/2")
    if not 0 < C0 / (C0p * p0) < eta < c / (2 * c + 6 * C0p) < 0.125:
        bad.append("C0/(C0p p0) < eta < c/(2c+6C0p) < 1/8")
    return bad


def curvature_growth_check(diffeos, word, curve: Curve, p0: int, c: float, eta: float, C0p: float, C0: float,
                           eps0: float, K: float | None = None):
    """Measured max |curvature| of gamma_j against K1 (K+1) e^{8 (n-j) eta C0p}.

    Declined (returns dict with ``declined``) when the parameter inequalities
    fail or the word lacks NCT or ET along the curve.
    """
    bad = curvature_params_ok(eps0, c, C0p, C0, p0, eta)
    if bad:
        return {"declined": "parameter inequalities fail: " + "; ".join(bad)}
    tr = tangent_traces(diffeos, word, curve)
    if not nct(diffeos, word, curve, p0, eta, C0, eps0, tr)[0]:
        return {"declined": "word lacks nearly conservative tails"}
    if not et(diffeos, word, curve, p0, c, eta, tr)[0]:
        return {"declined": "word lacks expanding tails"}
    K = curve.max_abs_curvature() if K is None else K
    n = len(word)
    lk1 = log_K1(p0, c, C0p)
    measured, log_bounds = [], []
    g = curve
    for j, i in enumerate(word, start=1):
        g = g.push(diffeos[i])
        measured.append(g.max_abs_curvature())
        log_bounds.append(lk1 + math.log(K + 1) + 8 * (n - j) * eta * C0p)
    measured = np.array(measured)
    log_bounds = np.array(log_bounds)
    ok = np.log(np.maximum(measured, 1e-300)) <= log_bounds
    return {"declined": "", "measured": measured, "log_bound": log_bounds, "ok": bool(np.all(ok))}

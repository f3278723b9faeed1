"""Pure numpy implementations of the hot loops.

Signatures match the compiled module ``_ckernels`` exactly; ``kernels``
selects one at import time.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def _step(mats, kvec, amps, phases, nmodes, f, xy, D):
    """Apply diffeo f to lifted points xy (m, 2) and left-multiply D (m, 2, 2)."""
    M = mats[f]
    img = xy @ M.T
    J = np.broadcast_to(M, D.shape).copy()
    for j in range(nmodes[f]):
        ph = TWO_PI * (xy[:, 0] * kvec[f, j, 0] + xy[:, 1] * kvec[f, j, 1]) + phases[f, j]
        s, c = np.sin(ph), np.cos(ph)
        img += s[:, None] * amps[f, j][None, :]
        J += c[:, None, None] * np.outer(amps[f, j], TWO_PI * kvec[f, j])[None]
    return img, J @ D, J


def word_products(mats, kvec, amps, phases, nmodes, words, points):
    """Push every point through every word.

    Parameters
    ----------
    words : (W, n) int64
    points : (P, 2) float64, lifted coordinates

    Returns
    -------
    final : (W, P, 2) lifted images
    prods : (W, P, 2, 2) derivative products Df^n
    logjac : (W, P) log |det Df^n|
    """
    words = np.ascontiguousarray(words, dtype=np.int64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    W, n = words.shape
    P = points.shape[0]
    xy = np.broadcast_to(points, (W, P, 2)).reshape(W * P, 2).copy()
    D = np.broadcast_to(np.eye(2), (W * P, 2, 2)).copy()
    logjac = np.zeros(W * P)
    letters = np.repeat(words, P, axis=0)
    for k in range(n):
        col = letters[:, k]
        for f in np.unique(col):
            m = col == f
            img, Dn, J = _step(mats, kvec, amps, phases, nmodes, f, xy[m], D[m])
            xy[m] = img
            D[m] = Dn
            logjac[m] += np.log(np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]))
    return xy.reshape(W, P, 2), D.reshape(W, P, 2, 2), logjac.reshape(W, P)


def paired_products(mats, kvec, amps, phases, nmodes, words, points):
    """Like word_products but word s acts only on point s: (S, n), (S, 2) -> (S, 2), (S, 2, 2), (S,)."""
    letters = np.ascontiguousarray(words, dtype=np.int64)
    S, n = letters.shape
    xy = np.array(points, dtype=np.float64, copy=True).reshape(S, 2)
    D = np.broadcast_to(np.eye(2), (S, 2, 2)).copy()
    logjac = np.zeros(S)
    for k in range(n):
        col = letters[:, k]
        for f in np.unique(col):
            m = col == f
            img, Dn, J = _step(mats, kvec, amps, phases, nmodes, f, xy[m], D[m])
            xy[m] = img
            D[m] = Dn
            logjac[m] += np.log(np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]))
    return xy, D, logjac


def word_log_norm_trace(mats, kvec, amps, phases, nmodes, words, points, vecs):
    """ln ||Df^k(x) v|| for k = 1..n; points and vecs are paired per word.

    words (S, n), points (S, 2), vecs (S, 2) -> (S, n)
    """
    words = np.ascontiguousarray(words, dtype=np.int64)
    S, n = words.shape
    xy = np.array(points, dtype=np.float64, copy=True)
    v = np.array(vecs, dtype=np.float64, copy=True)
    out = np.empty((S, n))
    acc = np.zeros(S)
    for k in range(n):
        col = words[:, k]
        for f in np.unique(col):
            m = col == f
            img, _, J = _step(mats, kvec, amps, phases, nmodes, f, xy[m], np.broadcast_to(np.eye(2), (int(m.sum()), 2, 2)))
            xy[m] = img
            v[m] = np.einsum("mij,mj->mi", J, v[m])
        nv = np.hypot(v[:, 0], v[:, 1])
        acc += np.log(nv)
        v /= nv[:, None]
        out[:, k] = acc
    return out


def word_preimages(mats, kvec, amps, phases, nmodes, minv, words, points, max_iter, tol):
    """Lifted preimages of points under each word (W, n) via per-letter Newton.

    points (S, 2) are paired with words (S, n). Returns (S, 2) and a status
    array (0 ok, 1 no convergence).
    """
    words = np.ascontiguousarray(words, dtype=np.int64)
    S, n = words.shape
    q = np.array(points, dtype=np.float64, copy=True)
    status = np.zeros(S, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        col = words[:, k]
        for f in np.unique(col):
            m = col == f
            target = q[m]
            p = target @ minv[f].T
            if nmodes[f] > 0:
                done = np.zeros(len(p), dtype=bool)
                for _ in range(max_iter):
                    img, _, J = _step(mats, kvec, amps, phases, nmodes, f, p, np.broadcast_to(np.eye(2), (len(p), 2, 2)))
                    r = img - target
                    done = np.all(np.abs(r) < tol, axis=1)
                    if done.all():
                        break
                    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
                    s0 = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
                    s1 = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
                    p = p - np.stack([s0, s1], axis=1)
                else:
                    img, _, _ = _step(mats, kvec, amps, phases, nmodes, f, p, np.broadcast_to(np.eye(2), (len(p), 2, 2)))
                    done = np.all(np.abs(img - target) < 10 * tol, axis=1)
                bad = np.flatnonzero(m)[~done]
                status[bad] = 1
            q[m] = p
    return q, status


def _cell_index(pts, ncell):
    c = np.floor(pts * ncell).astype(np.int64)
    np.clip(c, 0, ncell - 1, out=c)
    return c


def ball_masses(points, weights, centers, rho):
    """Sum of weights within wrapped distance <= rho of each center.

    Toroidal spatial hash with cell side >= rho and a 3x3 neighbour scan.
    Points and centers must already be reduced to [0, 1).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    out = np.zeros(len(centers))
    if len(points) == 0 or len(centers) == 0:
        return out
    ncell = max(1, int(np.floor(1.0 / rho)))
    if ncell < 3:
        d = np.abs(centers[:, None, :] - points[None, :, :])
        d = np.minimum(d, 1.0 - d)
        inside = d[..., 0] ** 2 + d[..., 1] ** 2 <= rho * rho
        return inside.astype(float) @ weights
    pc = _cell_index(points, ncell)
    pid = pc[:, 0] * ncell + pc[:, 1]
    order = np.argsort(pid, kind="stable")
    pts_s, w_s = points[order], weights[order]
    starts = np.searchsorted(pid[order], np.arange(ncell * ncell + 1))
    cc = _cell_index(centers, ncell)
    cid = cc[:, 0] * ncell + cc[:, 1]
    corder = np.argsort(cid, kind="stable")
    cstarts = np.searchsorted(cid[corder], np.arange(ncell * ncell + 1))
    r2 = rho * rho
    for cell in np.flatnonzero(np.diff(cstarts)):
        cidx = corder[cstarts[cell] : cstarts[cell + 1]]
        z = centers[cidx]
        gx, gy = divmod(int(cell), ncell)
        acc = np.zeros(len(cidx))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nb = ((gx + dx) % ncell) * ncell + (gy + dy) % ncell
                a, b = starts[nb], starts[nb + 1]
                if a == b:
                    continue
                d = np.abs(z[:, None, :] - pts_s[None, a:b, :])
                d = np.minimum(d, 1.0 - d)
                acc += ((d[..., 0] ** 2 + d[..., 1] ** 2) <= r2).astype(float) @ w_s[a:b]
        out[cidx] = acc
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_pykernels`` (same signatures)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, log, fabs, floor, sqrt, M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


cdef inline void _apply(const double[:, :, :] mats, const double[:, :, :] kvec,
                        const double[:, :, :] amps, const double[:, :] phases,
                        const long[:] nmodes, long f, double x, double y,
                        double* ox, double* oy, double* J) noexcept nogil:
    cdef double ph, s, c, k0, k1
    cdef long j
    ox[0] = mats[f, 0, 0] * x + mats[f, 0, 1] * y
    oy[0] = mats[f, 1, 0] * x + mats[f, 1, 1] * y
    J[0] = mats[f, 0, 0]; J[1] = mats[f, 0, 1]
    J[2] = mats[f, 1, 0]; J[3] = mats[f, 1, 1]
    for j in range(nmodes[f]):
        k0 = kvec[f, j, 0]
        k1 = kvec[f, j, 1]
        ph = TWO_PI * (x * k0 + y * k1) + phases[f, j]
        s = sin(ph)
        c = cos(ph)
        ox[0] += amps[f, j, 0] * s
        oy[0] += amps[f, j, 1] * s
        J[0] += c * amps[f, j, 0] * TWO_PI * k0
        J[1] += c * amps[f, j, 0] * TWO_PI * k1
        J[2] += c * amps[f, j, 1] * TWO_PI * k0
        J[3] += c * amps[f, j, 1] * TWO_PI * k1


def word_products(double[:, :, :] mats, double[:, :, :] kvec, double[:, :, :] amps,
                  double[:, :] phases, long[:] nmodes, words, points):
    cdef long[:, :] w = np.ascontiguousarray(words, dtype=np.int64)
    cdef double[:, :] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t W = w.shape[0], n = w.shape[1], P = pts.shape[0]
    final_np = np.empty((W, P, 2))
    prods_np = np.empty((W, P, 2, 2))
    logjac_np = np.empty((W, P))
    cdef double[:, :, :] final = final_np
    cdef double[:, :, :, :] prods = prods_np
    cdef double[:, :] logjac = logjac_np
    cdef Py_ssize_t a, b, k
    cdef double x, y, nx, ny, d00, d01, d10, d11, e00, e01, e10, e11, lj
    cdef double J[4]
    with nogil:
        for a in range(W):
            for b in range(P):
                x = pts[b, 0]; y = pts[b, 1]
                d00 = 1.0; d01 = 0.0; d10 = 0.0; d11 = 1.0
                lj = 0.0
                for k in range(n):
                    _apply(mats, kvec, amps, phases, nmodes, w[a, k], x, y, &nx, &ny, J)
                    e00 = J[0] * d00 + J[1] * d10
                    e01 = J[0] * d01 + J[1] * d11
                    e10 = J[2] * d00 + J[3] * d10
                    e11 = J[2] * d01 + J[3] * d11
                    d00 = e00; d01 = e01; d10 = e10; d11 = e11
                    lj += log(fabs(J[0] * J[3] - J[1] * J[2]))
                    x = nx; y = ny
                final[a, b, 0] = x; final[a, b, 1] = y
                prods[a, b, 0, 0] = d00; prods[a, b, 0, 1] = d01
                prods[a, b, 1, 0] = d10; prods[a, b, 1, 1] = d11
                logjac[a, b] = lj
    return final_np, prods_np, logjac_np


def paired_products(double[:, :, :] mats, double[:, :, :] kvec, double[:, :, :] amps,
                    double[:, :] phases, long[:] nmodes, words, points):
    cdef long[:, :] w = np.ascontiguousarray(words, dtype=np.int64)
    cdef double[:, :] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t S = w.shape[0], n = w.shape[1]
    final_np = np.empty((S, 2))
    prods_np = np.empty((S, 2, 2))
    logjac_np = np.empty(S)
    cdef double[:, :] final = final_np
    cdef double[:, :, :] prods = prods_np
    cdef double[:] logjac = logjac_np
    cdef Py_ssize_t a, k
    cdef double x, y, nx, ny, d00, d01, d10, d11, e00, e01, e10, e11, lj
    cdef double J[4]
    with nogil:
        for a in range(S):
            x = pts[a, 0]; y = pts[a, 1]
            d00 = 1.0; d01 = 0.0; d10 = 0.0; d11 = 1.0
            lj = 0.0
            for k in range(n):
                _apply(mats, kvec, amps, phases, nmodes, w[a, k], x, y, &nx, &ny, J)
                e00 = J[0] * d00 + J[1] * d10
                e01 = J[0] * d01 + J[1] * d11
                e10 = J[2] * d00 + J[3] * d10
                e11 = J[2] * d01 + J[3] * d11
                d00 = e00; d01 = e01; d10 = e10; d11 = e11
                lj += log(fabs(J[0] * J[3] - J[1] * J[2]))
                x = nx; y = ny
            final[a, 0] = x; final[a, 1] = y
            prods[a, 0, 0] = d00; prods[a, 0, 1] = d01
            prods[a, 1, 0] = d10; prods[a, 1, 1] = d11
            logjac[a] = lj
    return final_np, prods_np, logjac_np


def word_log_norm_trace(double[:, :, :] mats, double[:, :, :] kvec, double[:, :, :] amps,
                        double[:, :] phases, long[:] nmodes, words, points, vecs):
    cdef long[:, :] w = np.ascontiguousarray(words, dtype=np.int64)
    cdef double[:, :] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, :] vv = np.ascontiguousarray(vecs, dtype=np.float64)
    cdef Py_ssize_t S = w.shape[0], n = w.shape[1]
    out_np = np.empty((S, n))
    cdef double[:, :] out = out_np
    cdef Py_ssize_t a, k
    cdef double x, y, nx, ny, u, v, nu, nv, nrm, acc
    cdef double J[4]
    with nogil:
        for a in range(S):
            x = pts[a, 0]; y = pts[a, 1]
            u = vv[a, 0]; v = vv[a, 1]
            acc = 0.0
            for k in range(n):
                _apply(mats, kvec, amps, phases, nmodes, w[a, k], x, y, &nx, &ny, J)
                nu = J[0] * u + J[1] * v
                nv = J[2] * u + J[3] * v
                nrm = sqrt(nu * nu + nv * nv)
                acc += log(nrm)
                u = nu / nrm; v = nv / nrm
                x = nx; y = ny
                out[a, k] = acc
    return out_np


def word_preimages(double[:, :, :] mats, double[:, :, :] kvec, double[:, :, :] amps,
                   double[:, :] phases, long[:] nmodes, double[:, :, :] minv,
                   words, points, long max_iter, double tol):
    cdef long[:, :] w = np.ascontiguousarray(words, dtype=np.int64)
    q_np = np.array(points, dtype=np.float64, copy=True)
    cdef double[:, :] q = q_np
    cdef Py_ssize_t S = w.shape[0], n = w.shape[1]
    status_np = np.zeros(S, dtype=np.int64)
    cdef long[:] status = status_np
    cdef Py_ssize_t a, k, it
    cdef long f
    cdef double tx, ty, px, py, ix, iy, rx, ry, det
    cdef double J[4]
    cdef bint ok
    with nogil:
        for a in range(S):
            for k in range(n - 1, -1, -1):
                f = w[a, k]
                tx = q[a, 0]; ty = q[a, 1]
                px = minv[f, 0, 0] * tx + minv[f, 0, 1] * ty
                py = minv[f, 1, 0] * tx + minv[f, 1, 1] * ty
                if nmodes[f] > 0:
                    ok = False
                    for it in range(max_iter):
                        _apply(mats, kvec, amps, phases, nmodes, f, px, py, &ix, &iy, J)
                        rx = ix - tx; ry = iy - ty
                        if fabs(rx) < tol and fabs(ry) < tol:
                            ok = True
                            break
                        det = J[0] * J[3] - J[1] * J[2]
                        px -= (J[3] * rx - J[1] * ry) / det
                        py -= (-J[2] * rx + J[0] * ry) / det
                    if not ok:
                        _apply(mats, kvec, amps, phases, nmodes, f, px, py, &ix, &iy, J)
                        if not (fabs(ix - tx) < 10 * tol and fabs(iy - ty) < 10 * tol):
                            status[a] = 1
                q[a, 0] = px; q[a, 1] = py
    return q_np, status_np


def ball_masses(points, weights, centers, double rho):
    cdef double[:, :] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:] wts = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[:, :] zs = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t Np = pts.shape[0], Nz = zs.shape[0]
    out_np = np.zeros(Nz)
    cdef double[:] out = out_np
    if Np == 0 or Nz == 0:
        return out_np
    cdef long ncell = <long>floor(1.0 / rho)
    if ncell < 1:
        ncell = 1
    cdef Py_ssize_t i, j, c, a, b, start, stop
    cdef long gx, gy, dx, dy, nb, cx, cy
    cdef double r2 = rho * rho, ddx, ddy, acc
    cdef double zx, zy
    if ncell < 3:
        with nogil:
            for i in range(Nz):
                acc = 0.0
                for j in range(Np):
                    ddx = fabs(zs[i, 0] - pts[j, 0]); ddx = ddx if ddx <= 0.5 else 1.0 - ddx
                    ddy = fabs(zs[i, 1] - pts[j, 1]); ddy = ddy if ddy <= 0.5 else 1.0 - ddy
                    if ddx * ddx + ddy * ddy <= r2:
                        acc += wts[j]
                out[i] = acc
        return out_np
    # counting sort of points into cells
    cell_np = np.empty(Np, dtype=np.int64)
    cdef long[:] cell = cell_np
    counts_np = np.zeros(ncell * ncell + 1, dtype=np.int64)
    cdef long[:] counts = counts_np
    with nogil:
        for j in range(Np):
            cx = <long>floor(pts[j, 0] * ncell)
            cy = <long>floor(pts[j, 1] * ncell)
            if cx >= ncell: cx = ncell - 1
            if cy >= ncell: cy = ncell - 1
            if cx < 0: cx = 0
            if cy < 0: cy = 0
            cell[j] = cx * ncell + cy
            counts[cell[j] + 1] += 1
        for c in range(ncell * ncell):
            counts[c + 1] += counts[c]
    fill_np = counts_np[:-1].copy()
    cdef long[:] fill = fill_np
    spx_np = np.empty(Np); spy_np = np.empty(Np); sw_np = np.empty(Np)
    cdef double[:] spx = spx_np, spy = spy_np, sw = sw_np
    with nogil:
        for j in range(Np):
            c = fill[cell[j]]
            spx[c] = pts[j, 0]; spy[c] = pts[j, 1]; sw[c] = wts[j]
            fill[cell[j]] += 1
        for i in range(Nz):
            zx = zs[i, 0]; zy = zs[i, 1]
            gx = <long>floor(zx * ncell); gy = <long>floor(zy * ncell)
            if gx >= ncell: gx = ncell - 1
            if gy >= ncell: gy = ncell - 1
            if gx < 0: gx = 0
            if gy < 0: gy = 0
            acc = 0.0
            for dx in range(-1, 2):
                for dy in range(-1, 2):
                    nb = ((gx + dx + ncell) % ncell) * ncell + (gy + dy + ncell) % ncell
                    start = counts[nb]; stop = counts[nb + 1]
                    for j in range(start, stop):
                        ddx = fabs(zx - spx[j]); ddx = ddx if ddx <= 0.5 else 1.0 - ddx
                        ddy = fabs(zy - spy[j]); ddy = ddy if ddy <= 0.5 else 1.0 - ddy
                        if ddx * ddx + ddy * ddy <= r2:
                            acc += sw[j]
            out[i] = acc
    return out_np

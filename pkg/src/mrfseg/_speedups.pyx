# cython: boundscheck=False, wraparound=False, cdivision=True
# Compiled versions of the two inner loops that dominate runtime:
# the windowed SLIC assignment sweep and the SMO pair-update loop.
# mrfseg.pykernels holds the NumPy equivalents; both must produce the
# same arithmetic (same operation order) so results agree bitwise.

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt

cnp.import_array()


def slic_assign(double[:, ::1] lab_l, double[:, ::1] lab_a, double[:, ::1] lab_b,
                double[:, ::1] centers, double spatial_scale, double window,
                int[:, ::1] labels, double[:, ::1] dist):
    """One SLIC assignment sweep.

    centers rows are (L, a, b, x, y).  Pixels inside each center's
    +-window box get the center id when D = d_lab + spatial_scale * d_xy
    strictly improves on the incumbent, so ties keep the lowest id.
    """
    cdef Py_ssize_t height = lab_l.shape[0]
    cdef Py_ssize_t width = lab_l.shape[1]
    cdef Py_ssize_t n = centers.shape[0]
    cdef Py_ssize_t c, y, x, y0, y1, x0, x1
    cdef double cl, ca, cb, cx, cy, dl, da, db, dx, dy, d

    for c in range(n):
        cl = centers[c, 0]
        ca = centers[c, 1]
        cb = centers[c, 2]
        cx = centers[c, 3]
        cy = centers[c, 4]
        x0 = <Py_ssize_t>floor(cx - window)
        x1 = <Py_ssize_t>floor(cx + window) + 1
        y0 = <Py_ssize_t>floor(cy - window)
        y1 = <Py_ssize_t>floor(cy + window) + 1
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > width:
            x1 = width
        if y1 > height:
            y1 = height
        for y in range(y0, y1):
            dy = y - cy
            for x in range(x0, x1):
                dl = lab_l[y, x] - cl
                da = lab_a[y, x] - ca
                db = lab_b[y, x] - cb
                dx = x - cx
                d = sqrt(dl * dl + da * da + db * db) + spatial_scale * sqrt(dx * dx + dy * dy)
                if d < dist[y, x]:
                    dist[y, x] = d
                    labels[y, x] = <int>c


def smo_solve(double[:, ::1] kmat, double[::1] y, double c_box, double tol,
              long max_passes):
    """Sequential minimal optimization on a precomputed kernel matrix.

    Scans examples in index order and optimizes the first violator
    against the partner maximizing |E_i - E_j| (first such index on
    ties).  The scan threshold is well below ``tol`` so the returned
    multipliers respect the KKT conditions with margin.
    """
    cdef Py_ssize_t m = y.shape[0]
    alpha_arr = np.zeros(m, dtype=np.float64)
    err_arr = np.negative(np.asarray(y))
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] err = err_arr
    cdef double bias = 0.0
    cdef double scan_tol = tol * 1e-3
    cdef Py_ssize_t sweep, i, j, t
    cdef long changed
    cdef double r, best, diff
    cdef double yi, yj, ai, aj, s, lo, hi, k11, k12, k22, eta
    cdef double aj_new, ai_new, v1, v2, ai_lo, ai_hi, w_lo, w_hi
    cdef double d_i, d_j, b1, b2, b_new, db, ci, cj

    for sweep in range(max_passes):
        changed = 0
        for i in range(m):
            r = err[i] * y[i]
            if not ((r < -scan_tol and alpha[i] < c_box) or (r > scan_tol and alpha[i] > 0.0)):
                continue
            best = -1.0
            j = -1
            for t in range(m):
                if t == i:
                    continue
                diff = fabs(err[i] - err[t])
                if diff > best:
                    best = diff
                    j = t
            if j < 0:
                continue

            yi = y[i]
            yj = y[j]
            ai = alpha[i]
            aj = alpha[j]
            s = yi * yj
            if yi != yj:
                lo = max(0.0, aj - ai)
                hi = min(c_box, c_box + aj - ai)
            else:
                lo = max(0.0, ai + aj - c_box)
                hi = min(c_box, ai + aj)
            if lo >= hi:
                continue
            k11 = kmat[i, i]
            k12 = kmat[i, j]
            k22 = kmat[j, j]
            eta = k11 + k22 - 2.0 * k12
            if eta > 0.0:
                aj_new = aj + yj * (err[i] - err[j]) / eta
                if aj_new < lo:
                    aj_new = lo
                elif aj_new > hi:
                    aj_new = hi
            else:
                # Flat direction: compare the dual objective at both ends.
                v1 = err[i] + yi - bias - ai * yi * k11 - aj * yj * k12
                v2 = err[j] + yj - bias - ai * yi * k12 - aj * yj * k22
                ai_lo = ai + s * (aj - lo)
                ai_hi = ai + s * (aj - hi)
                w_lo = (ai_lo + lo - 0.5 * k11 * ai_lo * ai_lo - 0.5 * k22 * lo * lo
                        - s * k12 * ai_lo * lo - yi * ai_lo * v1 - yj * lo * v2)
                w_hi = (ai_hi + hi - 0.5 * k11 * ai_hi * ai_hi - 0.5 * k22 * hi * hi
                        - s * k12 * ai_hi * hi - yi * ai_hi * v1 - yj * hi * v2)
                if w_lo > w_hi + 1e-12:
                    aj_new = lo
                elif w_hi > w_lo + 1e-12:
                    aj_new = hi
                else:
                    continue
            if fabs(aj_new - aj) < 1e-12 * (aj_new + aj + 1e-12):
                continue
            ai_new = ai + s * (aj - aj_new)
            if ai_new < 0.0:
                ai_new = 0.0
            elif ai_new > c_box:
                ai_new = c_box
            d_i = ai_new - ai
            d_j = aj_new - aj
            b1 = bias - err[i] - yi * d_i * k11 - yj * d_j * k12
            b2 = bias - err[j] - yi * d_i * k12 - yj * d_j * k22
            if 0.0 < ai_new < c_box:
                b_new = b1
            elif 0.0 < aj_new < c_box:
                b_new = b2
            else:
                b_new = 0.5 * (b1 + b2)
            db = b_new - bias
            ci = yi * d_i
            cj = yj * d_j
            for t in range(m):
                err[t] = err[t] + ((ci * kmat[i, t] + cj * kmat[j, t]) + db)
            alpha[i] = ai_new
            alpha[j] = aj_new
            bias = b_new
            changed += 1
        if changed == 0:
            break

    return alpha_arr, bias

"""Pure NumPy fallbacks for the compiled kernels.

These mirror mrfseg._speedups operation for operation (same scan order,
same tie rules, same expression grouping) so either backend produces
identical output.
"""

import numpy as np


def slic_assign(lab_l, lab_a, lab_b, centers, spatial_scale, window, labels, dist):
    """One SLIC assignment sweep over all centers (see _speedups.pyx)."""
    height, width = lab_l.shape
    for c in range(centers.shape[0]):
        cl, ca, cb, cx, cy = centers[c]
        x0 = max(0, int(np.floor(cx - window)))
        x1 = min(width, int(np.floor(cx + window)) + 1)
        y0 = max(0, int(np.floor(cy - window)))
        y1 = min(height, int(np.floor(cy + window)) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        dl = lab_l[y0:y1, x0:x1] - cl
        da = lab_a[y0:y1, x0:x1] - ca
        db = lab_b[y0:y1, x0:x1] - cb
        dx = np.arange(x0, x1, dtype=np.float64) - cx
        dy = np.arange(y0, y1, dtype=np.float64) - cy
        d_xy = np.sqrt(dx * dx + (dy * dy)[:, None])
        d = np.sqrt(dl * dl + da * da + db * db) + spatial_scale * d_xy
        window_dist = dist[y0:y1, x0:x1]
        better = d < window_dist
        window_dist[better] = d[better]
        labels[y0:y1, x0:x1][better] = c


def smo_solve(kmat, y, c_box, tol, max_passes):
    """Sequential minimal optimization on a precomputed kernel matrix."""
    m = y.shape[0]
    alpha = np.zeros(m, dtype=np.float64)
    err = np.negative(y)
    bias = 0.0
    scan_tol = tol * 1e-3

    for _ in range(max_passes):
        changed = 0
        for i in range(m):
            r = err[i] * y[i]
            if not ((r < -scan_tol and alpha[i] < c_box) or (r > scan_tol and alpha[i] > 0.0)):
                continue
            diff = np.abs(err[i] - err)
            diff[i] = -1.0
            j = int(np.argmax(diff))

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
            if abs(aj_new - aj) < 1e-12 * (aj_new + aj + 1e-12):
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
            err += (yi * d_i * kmat[i] + yj * d_j * kmat[j]) + db
            alpha[i] = ai_new
            alpha[j] = aj_new
            bias = b_new
            changed += 1
        if changed == 0:
            break

    return alpha, bias

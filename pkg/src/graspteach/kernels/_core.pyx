# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled image kernels: convolution, grayscale morphology, component
labeling, and multi-source geodesic distances on the pixel grid.

Out-of-image pixels are treated as zero-valued everywhere. Accumulation
order is row-major over the window so convolution results match the NumPy
fallback bit for bit (the extension is built with -ffp-contract=off).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double SQRT2 = 1.4142135623730951


def convolve2d(double[:, :] img, double[:, :] kernel):
    """Zero-padded same-size sliding-window product sum.

    No kernel flip is applied; callers pass symmetric kernels.
    """
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t kh = kernel.shape[0], kw = kernel.shape[1]
    cdef Py_ssize_t rv = kh // 2, ru = kw // 2
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t v, u, i, j, vv, uu
    cdef double acc, t
    for v in range(h):
        for u in range(w):
            acc = 0.0
            for i in range(kh):
                vv = v + i - rv
                if vv < 0 or vv >= h:
                    continue
                for j in range(kw):
                    uu = u + j - ru
                    if uu < 0 or uu >= w:
                        continue
                    t = kernel[i, j] * img[vv, uu]
                    acc = acc + t
            out[v, u] = acc
    return out_arr


cdef void _extreme_rows(double[:, :] src, Py_ssize_t r, bint take_min,
                        double[:, :] out):
    # out[v, u] = min/max over src[v, u-r .. u+r], out-of-range cells are 0
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t v, u, j, j0, j1
    cdef double m, val
    for v in range(h):
        for u in range(w):
            j0 = u - r
            j1 = u + r + 1
            if j0 < 0 or j1 > w:
                m = 0.0  # padding value participates
                if j0 < 0:
                    j0 = 0
                if j1 > w:
                    j1 = w
            else:
                m = src[v, j0]
            if take_min:
                for j in range(j0, j1):
                    val = src[v, j]
                    if val < m:
                        m = val
            else:
                for j in range(j0, j1):
                    val = src[v, j]
                    if val > m:
                        m = val
            out[v, u] = m


cdef void _extreme_cols(double[:, :] src, Py_ssize_t r, bint take_min,
                        double[:, :] out):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t v, u, i, i0, i1
    cdef double m, val
    for v in range(h):
        i0 = v - r
        i1 = v + r + 1
        if i0 < 0 or i1 > h:
            if i0 < 0:
                i0 = 0
            if i1 > h:
                i1 = h
            for u in range(w):
                m = 0.0
                if take_min:
                    for i in range(i0, i1):
                        val = src[i, u]
                        if val < m:
                            m = val
                else:
                    for i in range(i0, i1):
                        val = src[i, u]
                        if val > m:
                            m = val
                out[v, u] = m
        else:
            for u in range(w):
                m = src[i0, u]
                if take_min:
                    for i in range(i0, i1):
                        val = src[i, u]
                        if val < m:
                            m = val
                else:
                    for i in range(i0, i1):
                        val = src[i, u]
                        if val > m:
                            m = val
                out[v, u] = m


def min_filter(double[:, :] img, Py_ssize_t size):
    """Grayscale erosion: min over a size x size window, zero-padded.

    The square window is separable, so this runs as two 1D passes.
    """
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t r = size // 2
    tmp_arr = np.empty((h, w), dtype=np.float64)
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, :] tmp = tmp_arr
    cdef double[:, :] out = out_arr
    _extreme_rows(img, r, True, tmp)
    _extreme_cols(tmp, r, True, out)
    return out_arr


def max_filter(double[:, :] img, Py_ssize_t size):
    """Grayscale dilation: max over a size x size window, zero-padded."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t r = size // 2
    tmp_arr = np.empty((h, w), dtype=np.float64)
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, :] tmp = tmp_arr
    cdef double[:, :] out = out_arr
    _extreme_rows(img, r, False, tmp)
    _extreme_cols(tmp, r, False, out)
    return out_arr


def label_components(cnp.uint8_t[:, :] mask, int connectivity):
    """Label connected foreground components; returns (labels, count).

    Labels are assigned in scan order starting at 1; background stays 0.
    """
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, :] labels = labels_arr
    stack_arr = np.empty(h * w, dtype=np.intp)
    cdef Py_ssize_t[:] stack = stack_arr
    cdef Py_ssize_t v, u, top, idx, cv, cu, nv, nu, k
    cdef int current = 0
    cdef int n_nb = 8 if connectivity == 8 else 4
    cdef int[8] dv, du
    dv[0] = -1; du[0] = 0
    dv[1] = 1;  du[1] = 0
    dv[2] = 0;  du[2] = -1
    dv[3] = 0;  du[3] = 1
    dv[4] = -1; du[4] = -1
    dv[5] = -1; du[5] = 1
    dv[6] = 1;  du[6] = -1
    dv[7] = 1;  du[7] = 1
    for v in range(h):
        for u in range(w):
            if mask[v, u] == 0 or labels[v, u] != 0:
                continue
            current += 1
            labels[v, u] = current
            top = 0
            stack[top] = v * w + u
            top += 1
            while top > 0:
                top -= 1
                idx = stack[top]
                cv = idx // w
                cu = idx - cv * w
                for k in range(n_nb):
                    nv = cv + dv[k]
                    nu = cu + du[k]
                    if nv < 0 or nv >= h or nu < 0 or nu >= w:
                        continue
                    if mask[nv, nu] != 0 and labels[nv, nu] == 0:
                        labels[nv, nu] = current
                        stack[top] = nv * w + nu
                        top += 1
    return labels_arr, current


def geodesic_costs(double[:, :, :] image, cnp.int64_t[:, :] seeds,
                   double color_weight, double spatial_weight):
    """Multi-source Dijkstra cost map over the 8-connected pixel grid.

    Edge cost between neighbors p, q:
        color_weight * ||image[p] - image[q]||_2 + spatial_weight * step
    where step is 1 for axis moves and sqrt(2) for diagonals. ``seeds``
    rows are (v, u); the returned map holds the geodesic cost to the
    nearest seed (inf where unreachable / no seeds).
    """
    cdef Py_ssize_t h = image.shape[0], w = image.shape[1]
    cdef Py_ssize_t c = image.shape[2]
    cdef Py_ssize_t n = h * w
    cost_arr = np.full((h, w), np.inf, dtype=np.float64)
    cdef double[:, :] cost = cost_arr
    done_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] done = done_arr

    # array heap with lazy deletion; grown by doubling when full
    cdef Py_ssize_t cap = 4 * n + 16
    heap_cost_arr = np.empty(cap, dtype=np.float64)
    heap_idx_arr = np.empty(cap, dtype=np.intp)
    cdef double[:] hcost = heap_cost_arr
    cdef Py_ssize_t[:] hidx = heap_idx_arr
    cdef Py_ssize_t hsize = 0

    cdef int[8] dv, du
    cdef double[8] step
    dv[0] = -1; du[0] = 0;  step[0] = 1.0
    dv[1] = 1;  du[1] = 0;  step[1] = 1.0
    dv[2] = 0;  du[2] = -1; step[2] = 1.0
    dv[3] = 0;  du[3] = 1;  step[3] = 1.0
    dv[4] = -1; du[4] = -1; step[4] = SQRT2
    dv[5] = -1; du[5] = 1;  step[5] = SQRT2
    dv[6] = 1;  du[6] = -1; step[6] = SQRT2
    dv[7] = 1;  du[7] = 1;  step[7] = SQRT2

    cdef Py_ssize_t i, j, parent, child, idx, v, u, nv, nu, k, ch, best
    cdef double d, nd, diff, col

    for i in range(seeds.shape[0]):
        v = seeds[i, 0]
        u = seeds[i, 1]
        if v < 0 or v >= h or u < 0 or u >= w:
            continue
        if cost[v, u] > 0.0:
            cost[v, u] = 0.0
            hcost[hsize] = 0.0
            hidx[hsize] = v * w + u
            hsize += 1
            j = hsize - 1
            while j > 0:
                parent = (j - 1) // 2
                if hcost[parent] > hcost[j]:
                    hcost[parent], hcost[j] = hcost[j], hcost[parent]
                    hidx[parent], hidx[j] = hidx[j], hidx[parent]
                    j = parent
                else:
                    break

    while hsize > 0:
        d = hcost[0]
        idx = hidx[0]
        hsize -= 1
        hcost[0] = hcost[hsize]
        hidx[0] = hidx[hsize]
        j = 0
        while True:
            child = 2 * j + 1
            if child >= hsize:
                break
            best = child
            if child + 1 < hsize and hcost[child + 1] < hcost[child]:
                best = child + 1
            if hcost[best] < hcost[j]:
                hcost[best], hcost[j] = hcost[j], hcost[best]
                hidx[best], hidx[j] = hidx[j], hidx[best]
                j = best
            else:
                break
        v = idx // w
        u = idx - v * w
        if done[v, u]:
            continue
        done[v, u] = 1
        for k in range(8):
            nv = v + dv[k]
            nu = u + du[k]
            if nv < 0 or nv >= h or nu < 0 or nu >= w:
                continue
            if done[nv, nu]:
                continue
            col = 0.0
            for ch in range(c):
                diff = image[v, u, ch] - image[nv, nu, ch]
                col += diff * diff
            nd = d + color_weight * col ** 0.5 + spatial_weight * step[k]
            if nd < cost[nv, nu]:
                cost[nv, nu] = nd
                if hsize >= cap:
                    cap = cap * 2
                    heap_cost_arr = np.concatenate(
                        [heap_cost_arr, np.empty(cap - hsize, dtype=np.float64)])
                    heap_idx_arr = np.concatenate(
                        [heap_idx_arr, np.empty(cap - hsize, dtype=np.intp)])
                    hcost = heap_cost_arr
                    hidx = heap_idx_arr
                hcost[hsize] = nd
                hidx[hsize] = nv * w + nu
                hsize += 1
                j = hsize - 1
                while j > 0:
                    parent = (j - 1) // 2
                    if hcost[parent] > hcost[j]:
                        hcost[parent], hcost[j] = hcost[j], hcost[parent]
                        hidx[parent], hidx[j] = hidx[j], hidx[parent]
                        j = parent
                    else:
                        break
    return cost_arr

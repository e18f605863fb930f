"""NumPy fallback for the compiled kernels.

Convolution accumulates shifted slices in row-major kernel order, which
gives bit-identical results to the compiled per-pixel loop. The geodesic
distance uses a heapq Dijkstra and is the slow path; production-size
images should use the compiled backend.
"""

import heapq
import math

import numpy as np
from scipy import ndimage

SQRT2 = math.sqrt(2.0)


def convolve2d(img, kernel):
    img = np.asarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w = img.shape
    kh, kw = kernel.shape
    rv, ru = kh // 2, kw // 2
    padded = np.zeros((h + kh - 1, w + kw - 1), dtype=np.float64)
    padded[rv:rv + h, ru:ru + w] = img
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i:i + h, j:j + w]
    return out


def _pad_filter(img, size, fill, op):
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    r = size // 2
    padded = np.full((h + 2 * r, w + 2 * r), fill, dtype=np.float64)
    padded[r:r + h, r:r + w] = img
    out = padded[0:h, 0:w].copy()
    for i in range(size):
        for j in range(size):
            if i == 0 and j == 0:
                continue
            op(out, padded[i:i + h, j:j + w], out=out)
    return out


def min_filter(img, size):
    return _pad_filter(img, size, 0.0, np.minimum)


def max_filter(img, size):
    return _pad_filter(img, size, 0.0, np.maximum)


def label_components(mask, connectivity):
    structure = np.ones((3, 3), dtype=bool) if connectivity == 8 else None
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=structure)
    return labels.astype(np.int32), int(count)


def geodesic_costs(image, seeds, color_weight, spatial_weight):
    image = np.asarray(image, dtype=np.float64)
    h, w, _ = image.shape
    cost = np.full((h, w), np.inf, dtype=np.float64)
    heap = []
    for v, u in np.asarray(seeds).reshape(-1, 2):
        if 0 <= v < h and 0 <= u < w and cost[v, u] > 0.0:
            cost[v, u] = 0.0
            heapq.heappush(heap, (0.0, int(v) * w + int(u)))
    neighbors = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
                 (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]
    done = np.zeros((h, w), dtype=bool)
    while heap:
        d, idx = heapq.heappop(heap)
        v, u = divmod(idx, w)
        if done[v, u]:
            continue
        done[v, u] = True
        for dv, du, step in neighbors:
            nv, nu = v + dv, u + du
            if not (0 <= nv < h and 0 <= nu < w) or done[nv, nu]:
                continue
            diff = image[v, u] - image[nv, nu]
            nd = d + color_weight * math.sqrt(float(np.dot(diff, diff))) + spatial_weight * step
            if nd < cost[nv, nu]:
                cost[nv, nu] = nd
                heapq.heappush(heap, (nd, nv * w + nu))
    return cost

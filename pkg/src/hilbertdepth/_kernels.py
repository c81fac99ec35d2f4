"""Compiled inner loops: spatial hashing, greedy clustering, sparse kernel
features, SGD epochs and ray marching.

Everything here works on plain arrays; the public modules own validation.
"""

import math

import numba
import numpy as np
from numba import njit, prange

# TBB in the base image is too old; OpenMP is safe for concurrent callers
if numba.config.THREADING_LAYER == "default":
    numba.config.THREADING_LAYER = "omp"

_P1 = 73856093
_P2 = 19349663
_P3 = 83492791


@njit(cache=True)
def _bucket(ix, iy, iz, mask):
    h = (ix * _P1) ^ (iy * _P2) ^ (iz * _P3)
    return h & mask


@njit(cache=True)
def _cell(x, cell):
    return np.int64(math.floor(x / cell))


def table_size(n):
    size = 16
    while size < 2 * n:
        size *= 2
    return size


@njit(cache=True)
def greedy_assign(points, order, tau, d0, cell, size):
    """Single first-fit pass over ``points`` visited in ``order``.

    A point joins the earliest-founded center within its distance-scaled
    radius, otherwise it founds a new center.  Returns (labels, centers)
    where centers are indices into ``points`` in founding order.
    """
    n = points.shape[0]
    mask = size - 1
    head = np.full(size, -1, np.int64)
    nxt = np.full(n, -1, np.int64)
    ccell = np.zeros((n, 3), np.int64)
    centers = np.empty(n, np.int64)
    labels = np.empty(n, np.int64)
    m = 0
    for oi in range(n):
        i = order[oi]
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        r = tau * (1.0 + math.sqrt(px * px + py * py + pz * pz) / d0)
        r2 = r * r
        span = np.int64(math.ceil(r / cell))
        cx = _cell(px, cell)
        cy = _cell(py, cell)
        cz = _cell(pz, cell)
        best = -1
        for ax in range(cx - span, cx + span + 1):
            for ay in range(cy - span, cy + span + 1):
                for az in range(cz - span, cz + span + 1):
                    j = head[_bucket(ax, ay, az, mask)]
                    while j >= 0:
                        if (best < 0 or j < best) and ccell[j, 0] == ax and ccell[j, 1] == ay and ccell[j, 2] == az:
                            c = centers[j]
                            dx = points[c, 0] - px
                            dy = points[c, 1] - py
                            dz = points[c, 2] - pz
                            if dx * dx + dy * dy + dz * dz <= r2:
                                best = j
                        j = nxt[j]
        if best >= 0:
            labels[i] = best
        else:
            centers[m] = i
            ccell[m, 0] = cx
            ccell[m, 1] = cy
            ccell[m, 2] = cz
            b = _bucket(cx, cy, cz, mask)
            nxt[m] = head[b]
            head[b] = m
            labels[i] = m
            m += 1
    return labels, centers[:m].copy()


@njit(cache=True)
def build_grid(means, cell, size):
    """Bucketed CSR index of cluster means: (start, items, cells)."""
    m = means.shape[0]
    mask = size - 1
    cells = np.empty((m, 3), np.int64)
    keys = np.empty(m, np.int64)
    counts = np.zeros(size + 1, np.int64)
    for j in range(m):
        cells[j, 0] = _cell(means[j, 0], cell)
        cells[j, 1] = _cell(means[j, 1], cell)
        cells[j, 2] = _cell(means[j, 2], cell)
        keys[j] = _bucket(cells[j, 0], cells[j, 1], cells[j, 2], mask)
        counts[keys[j] + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    items = np.empty(m, np.int64)
    for j in range(m):
        items[fill[keys[j]]] = j
        fill[keys[j]] += 1
    return start, items, cells


@njit(cache=True)
def _query(x, y, z, means, sinv, cut_base, cut_d0, cell, start, items, cells, out_idx, out_val):
    """Write nonzero kernel values around (x, y, z); returns how many."""
    cut = cut_base * (1.0 + math.sqrt(x * x + y * y + z * z) / cut_d0)
    cut2 = cut * cut
    span = np.int64(math.ceil(cut / cell))
    if span > 64:
        span = 64
    mask = start.shape[0] - 2
    cx = _cell(x, cell)
    cy = _cell(y, cell)
    cz = _cell(z, cell)
    k = 0
    for ax in range(cx - span, cx + span + 1):
        for ay in range(cy - span, cy + span + 1):
            for az in range(cz - span, cz + span + 1):
                b = _bucket(ax, ay, az, mask)
                for s in range(start[b], start[b + 1]):
                    j = items[s]
                    if cells[j, 0] != ax or cells[j, 1] != ay or cells[j, 2] != az:
                        continue
                    dx = x - means[j, 0]
                    dy = y - means[j, 1]
                    dz = z - means[j, 2]
                    if dx * dx + dy * dy + dz * dz > cut2:
                        continue
                    q = (dx * (sinv[j, 0, 0] * dx + sinv[j, 0, 1] * dy + sinv[j, 0, 2] * dz)
                         + dy * (sinv[j, 1, 0] * dx + sinv[j, 1, 1] * dy + sinv[j, 1, 2] * dz)
                         + dz * (sinv[j, 2, 0] * dx + sinv[j, 2, 1] * dy + sinv[j, 2, 2] * dz))
                    v = math.exp(-0.5 * q)
                    if v > 0.0:
                        if k < out_idx.shape[0]:
                            out_idx[k] = j
                            out_val[k] = v
                        k += 1
    return k


@njit(cache=True)
def _logit(x, y, z, w, means, sinv, cut_base, cut_d0, cell, start, items, cells):
    cut = cut_base * (1.0 + math.sqrt(x * x + y * y + z * z) / cut_d0)
    cut2 = cut * cut
    span = np.int64(math.ceil(cut / cell))
    if span > 64:
        span = 64
    mask = start.shape[0] - 2
    cx = _cell(x, cell)
    cy = _cell(y, cell)
    cz = _cell(z, cell)
    acc = 0.0
    for ax in range(cx - span, cx + span + 1):
        for ay in range(cy - span, cy + span + 1):
            for az in range(cz - span, cz + span + 1):
                b = _bucket(ax, ay, az, mask)
                for s in range(start[b], start[b + 1]):
                    j = items[s]
                    if cells[j, 0] != ax or cells[j, 1] != ay or cells[j, 2] != az:
                        continue
                    dx = x - means[j, 0]
                    dy = y - means[j, 1]
                    dz = z - means[j, 2]
                    if dx * dx + dy * dy + dz * dz > cut2:
                        continue
                    q = (dx * (sinv[j, 0, 0] * dx + sinv[j, 0, 1] * dy + sinv[j, 0, 2] * dz)
                         + dy * (sinv[j, 1, 0] * dx + sinv[j, 1, 1] * dy + sinv[j, 1, 2] * dz)
                         + dz * (sinv[j, 2, 0] * dx + sinv[j, 2, 1] * dy + sinv[j, 2, 2] * dz))
                    acc += w[j] * math.exp(-0.5 * q)
    return acc


@njit(cache=True)
def feature_rows(xs, means, sinv, cut_base, cut_d0, cell, start, items, cells):
    """Sparse feature matrix for the rows of ``xs`` in CSR form."""
    n = xs.shape[0]
    m = means.shape[0]
    counts = np.zeros(n, np.int64)
    idx = np.empty(max(m, 1), np.int64)
    val = np.empty(max(m, 1), np.float64)
    for i in range(n):
        counts[i] = _query(xs[i, 0], xs[i, 1], xs[i, 2], means, sinv, cut_base, cut_d0,
                           cell, start, items, cells, idx, val)
    indptr = np.zeros(n + 1, np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + counts[i]
    indices = np.empty(indptr[n], np.int64)
    data = np.empty(indptr[n], np.float64)
    for i in range(n):
        k = _query(xs[i, 0], xs[i, 1], xs[i, 2], means, sinv, cut_base, cut_d0,
                   cell, start, items, cells, idx, val)
        # sort by cluster index so rows are canonical
        order = np.argsort(idx[:k])
        for a in range(k):
            indices[indptr[i] + a] = idx[order[a]]
            data[indptr[i] + a] = val[order[a]]
    return indptr, indices, data


@njit(cache=True)
def _softplus(a):
    if a > 0.0:
        return a + math.log1p(math.exp(-a))
    return math.log1p(math.exp(a))


@njit(cache=True)
def _sigmoid(a):
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


@njit(cache=True)
def full_loss(w, y, indptr, indices, data, l1, l2):
    total = 0.0
    for i in range(y.shape[0]):
        a = 0.0
        for s in range(indptr[i], indptr[i + 1]):
            a += w[indices[s]] * data[s]
        total += _softplus(-y[i] * a)
    r = 0.0
    for j in range(w.shape[0]):
        r += l1 * abs(w[j]) + l2 * w[j] * w[j]
    return total + r


@njit(cache=True)
def sgd_epoch(w, y, indptr, indices, data, perm, lr, batch, l1, l2):
    """One pass of mini-batch SGD, updating ``w`` in place.

    Each step descends the batch sum of logistic losses plus the
    regularizer scaled by batch/N, so one epoch covers the full objective.
    """
    n = y.shape[0]
    m = w.shape[0]
    g = np.zeros(m)
    touched = np.empty(m, np.int64)
    seen = np.zeros(m, np.bool_)
    for b0 in range(0, n, batch):
        b1 = min(b0 + batch, n)
        nt = 0
        for p in range(b0, b1):
            i = perm[p]
            a = 0.0
            for s in range(indptr[i], indptr[i + 1]):
                a += w[indices[s]] * data[s]
            # d/da log(1 + exp(-y a)) = -y * sigmoid(-y a)
            coef = -y[i] * _sigmoid(-y[i] * a)
            for s in range(indptr[i], indptr[i + 1]):
                j = indices[s]
                g[j] += coef * data[s]
                if not seen[j]:
                    seen[j] = True
                    touched[nt] = j
                    nt += 1
        frac = (b1 - b0) / n
        for j in range(m):
            reg = 2.0 * l2 * w[j]
            if w[j] > 0.0:
                reg += l1
            elif w[j] < 0.0:
                reg -= l1
            w[j] -= lr * (g[j] + frac * reg)
        for t in range(nt):
            j = touched[t]
            g[j] = 0.0
            seen[j] = False


@njit(cache=True)
def _prob(a):
    # occupancy = 1 - non-occupancy
    if a >= 0.0:
        e = math.exp(-a)
        non = e / (1.0 + e)
    else:
        non = 1.0 / (1.0 + math.exp(a))
    return 1.0 - non


@njit(cache=True)
def _march_one(ox, oy, oz, dx, dy, dz, w, means, sinv, cut_base, cut_d0, cell,
               start, items, cells, t_min, t_max, step, thr, refine):
    n_steps = int(math.floor((t_max - t_min) / step + 1e-9))
    t_prev = t_min
    for k in range(n_steps + 1):
        t = t_min + k * step
        a = _logit(ox + t * dx, oy + t * dy, oz + t * dz, w, means, sinv,
                   cut_base, cut_d0, cell, start, items, cells)
        if _prob(a) >= thr:
            if k == 0:
                return t
            lo = t_prev
            hi = t
            for _ in range(refine):
                mid = 0.5 * (lo + hi)
                am = _logit(ox + mid * dx, oy + mid * dy, oz + mid * dz, w, means, sinv,
                            cut_base, cut_d0, cell, start, items, cells)
                if _prob(am) >= thr:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
        t_prev = t
    return np.nan


@njit(cache=True, parallel=True)
def march_rays(origin, dirs, w, means, sinv, cut_base, cut_d0, cell, start, items, cells,
               t_min, t_max, step, thr, refine):
    n = dirs.shape[0]
    out = np.empty(n)
    for r in prange(n):
        out[r] = _march_one(origin[0], origin[1], origin[2], dirs[r, 0], dirs[r, 1], dirs[r, 2],
                            w, means, sinv, cut_base, cut_d0, cell, start, items, cells,
                            t_min, t_max, step, thr, refine)
    return out


@njit(cache=True, parallel=True)
def logits_at(xs, w, means, sinv, cut_base, cut_d0, cell, start, items, cells):
    out = np.empty(xs.shape[0])
    for i in prange(xs.shape[0]):
        out[i] = _logit(xs[i, 0], xs[i, 1], xs[i, 2], w, means, sinv, cut_base, cut_d0,
                        cell, start, items, cells)
    return out

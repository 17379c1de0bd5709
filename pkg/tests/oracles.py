"""Brute-force reference implementations used as independent test oracles.

These deliberately avoid the library code paths (no im2col, no numpy.fft,
no scipy.ndimage) so agreement is meaningful.
"""

from collections import deque

import numpy as np


def conv2d_naive(x, w, b=None, stride=1, padding=0, groups=1):
    """Direct loop cross-correlation; weight ``(Cout, Cin/groups, kh, kw)``."""
    n, cin, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    og = cout // groups
    xp = np.zeros((n, cin, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for bi in range(n):
        for o in range(cout):
            g = o // og
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cg):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[bi, g * cg + c, i * stride + u, j * stride + v] * w[o, c, u, v]
                    out[bi, o, i, j] = acc + (0.0 if b is None else b[o])
    return out


def conv_transpose2d_naive(x, w, b=None, stride=1, padding=0, output_padding=0, groups=1):
    """Scatter definition; weight ``(Cin, Cout/groups, kh, kw)``."""
    n, cin, h, wd = x.shape
    _, og, kh, kw = w.shape
    cg = cin // groups
    cout = og * groups
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (wd - 1) * stride - 2 * padding + kw + output_padding
    out = np.zeros((n, cout, ho, wo))
    for bi in range(n):
        for ci in range(cin):
            g = ci // cg
            for i in range(h):
                for j in range(wd):
                    for o in range(og):
                        for u in range(kh):
                            for v in range(kw):
                                y, z = i * stride - padding + u, j * stride - padding + v
                                if 0 <= y < ho and 0 <= z < wo:
                                    out[bi, g * og + o, y, z] += x[bi, ci, i, j] * w[ci, o, u, v]
    if b is not None:
        out += np.asarray(b).reshape(1, -1, 1, 1)
    return out


def group_norm_naive(x, groups, gamma, beta, eps=1e-5):
    n, c, h, w = x.shape
    out = np.empty_like(x, dtype=np.float64)
    per = c // groups
    for bi in range(n):
        for g in range(groups):
            block = x[bi, g * per:(g + 1) * per].astype(np.float64)
            mu = sum(block.ravel()) / block.size
            var = sum((v - mu) ** 2 for v in block.ravel()) / block.size
            out[bi, g * per:(g + 1) * per] = (block - mu) / np.sqrt(var + eps)
    return out * np.asarray(gamma).reshape(1, -1, 1, 1) + np.asarray(beta).reshape(1, -1, 1, 1)


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def rfft2_matrix(x):
    """Half spectrum via explicit DFT matrices: ``F_H x F_W^T`` keeping ``W//2+1`` columns."""
    h, w = x.shape[-2:]
    full = dft_matrix(h) @ x @ dft_matrix(w).T
    return full[..., : w // 2 + 1]


def count_components(mask, connectivity=4):
    """Number of foreground components by breadth-first flood fill."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    steps = [(0, 1), (1, 0), (0, -1), (-1, 0)]
    if connectivity == 8:
        steps += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    count = 0
    for si in range(h):
        for sj in range(w):
            if mask[si, sj] and not seen[si, sj]:
                count += 1
                queue = deque([(si, sj)])
                seen[si, sj] = True
                while queue:
                    i, j = queue.popleft()
                    for di, dj in steps:
                        a, b = i + di, j + dj
                        if 0 <= a < h and 0 <= b < w and mask[a, b] and not seen[a, b]:
                            seen[a, b] = True
                            queue.append((a, b))
    return count


def point_in_polygon(px, py, poly):
    """Even-odd ray casting; fine as an oracle for simple polygons."""
    inside = False
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        if (y1 > py) != (y2 > py):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xc:
                inside = not inside
    return inside


def triangle_wave(u, limit):
    """Position of a point bouncing elastically in ``[0, limit]`` after free travel ``u``."""
    if limit == 0:
        return np.zeros_like(np.asarray(u, dtype=float))
    r = np.mod(u, 2 * limit)
    return limit - np.abs(r - limit)

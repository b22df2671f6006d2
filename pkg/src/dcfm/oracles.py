"""Independent brute-force references used by the self-test and test suites.

Everything in this module is written with explicit Python loops and
element-at-a-time arithmetic, deliberately avoiding the vectorized paths
used by the library itself, so the two sides of every comparison share no
code.  These functions are slow and meant only for small instances.
"""

from __future__ import annotations

import math

import numpy as np


# -- dense algebra ----------------------------------------------------------


def matmul_loops(a, b):
    """Triple-loop matrix product."""
    r, k = a.shape
    k2, s = b.shape
    assert k == k2
    out = np.zeros((r, s))
    for i in range(r):
        for j in range(s):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def pointwise_conv_loops(x, w, b):
    """Per-pixel affine map over channels, one multiply at a time."""
    n, cin, h, wdt = x.shape
    cout = w.shape[0]
    out = np.zeros((n, cout, h, wdt))
    for img in range(n):
        for o in range(cout):
            for i in range(h):
                for j in range(wdt):
                    acc = b[o]
                    for c in range(cin):
                        acc += w[o, c] * x[img, c, i, j]
                    out[img, o, i, j] = acc
    return out


def conv3x3_loops(x, w, b, stride=1):
    """Direct 3x3 convolution with unit zero padding."""
    n, cin, h, wdt = x.shape
    cout = w.shape[0]
    ho = (h + 2 - 3) // stride + 1
    wo = (wdt + 2 - 3) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for img in range(n):
        for o in range(cout):
            for oi in range(ho):
                for oj in range(wo):
                    acc = b[o]
                    for c in range(cin):
                        for ki in range(3):
                            for kj in range(3):
                                ii = oi * stride + ki - 1
                                jj = oj * stride + kj - 1
                                if 0 <= ii < h and 0 <= jj < wdt:
                                    acc += w[o, c, ki, kj] * x[img, c, ii, jj]
                    out[img, o, oi, oj] = acc
    return out


def softmax_row_loops(row):
    """Softmax of one row via explicit exponentials."""
    m = max(row)
    exps = [math.exp(v - m) for v in row]
    total = math.fsum(exps)
    return [e / total for e in exps]


def descending_rank_row_loops(row):
    """Rank entries of one row by repeated maximum extraction.

    Rank 0 is the largest value; ties go to the lower column index.
    """
    remaining = list(range(len(row)))
    ranks = [0] * len(row)
    for r in range(len(row)):
        best = remaining[0]
        for idx in remaining[1:]:
            if row[idx] > row[best]:
                best = idx
        ranks[best] = r
        remaining.remove(best)
    return ranks


def _unit(vec, eps=1e-12):
    norm = math.sqrt(math.fsum(v * v for v in vec))
    if norm <= eps:
        return [0.0 for _ in vec]
    return [v / norm for v in vec]


# -- seed mining ------------------------------------------------------------


def seed_select_loops(f_res, key_w, key_b, query_w, query_b):
    """Democratic seed selection, one similarity at a time.

    Returns (P, indices, vectors): the per-pixel consensus scores over
    the whole group, one (n, h, w) seed index per image, and the seed
    vectors read from ``f_res`` at those positions.
    """
    n, c, h, w = f_res.shape
    cp = key_w.shape[0]

    def project(weights, bias, img, i, j):
        return [
            math.fsum(weights[o, cc] * f_res[img, cc, i, j] for cc in range(c)) + bias[o]
            for o in range(cp)
        ]

    pixels = [(img, i, j) for img in range(n) for i in range(h) for j in range(w)]
    keys = [project(key_w, key_b, *p) for p in pixels]
    queries = [project(query_w, query_b, *p) for p in pixels]

    total = len(pixels)
    sim = [[math.fsum(keys[a][o] * queries[b][o] for o in range(cp)) for b in range(total)]
           for a in range(total)]

    consensus = []
    for a in range(total):
        per_image_max = []
        for img in range(n):
            base = img * h * w
            best = sim[a][base]
            for off in range(1, h * w):
                if sim[a][base + off] > best:
                    best = sim[a][base + off]
            per_image_max.append(best)
        consensus.append(math.fsum(per_image_max) / n)

    indices = []
    for img in range(n):
        base = img * h * w
        best_off = 0
        for off in range(1, h * w):
            if consensus[base + off] > consensus[base + best_off]:
                best_off = off
        indices.append((img, best_off // w, best_off % w))

    vectors = np.stack([f_res[img, :, i, j] for img, i, j in indices])
    return np.asarray(consensus), indices, vectors


def response_maps_loops(f_res, seed_vectors):
    """Per-seed unit-vector correlation maps and their mean."""
    n, c, h, w = f_res.shape
    m = seed_vectors.shape[0]
    units = [_unit(list(seed_vectors[k])) for k in range(m)]
    per_seed = np.zeros((n, m, h, w))
    for img in range(n):
        for i in range(h):
            for j in range(w):
                fvec = _unit([f_res[img, cc, i, j] for cc in range(c)])
                for k in range(m):
                    dot = math.fsum(fvec[cc] * units[k][cc] for cc in range(c))
                    per_seed[img, k, i, j] = min(1.0, max(-1.0, dot))
    final = np.zeros((n, h, w))
    for img in range(n):
        for i in range(h):
            for j in range(w):
                final[img, i, j] = math.fsum(per_seed[img, k, i, j] for k in range(m)) / m
    return per_seed, final


def prototype_loops(f_res, final_map):
    """Response-weighted mean feature over every pixel of the group."""
    n, c, h, w = f_res.shape
    proto = np.zeros((1, c))
    for cc in range(c):
        acc = 0.0
        for img in range(n):
            for i in range(h):
                for j in range(w):
                    acc += final_map[img, i, j] * f_res[img, cc, i, j]
        proto[0, cc] = acc / (n * h * w)
    return proto


# -- attention enhancement ----------------------------------------------------


def enhance_loops(fused, conv_w, conv_b, key_w, key_b, query_w, query_b,
                  value_w, value_b, alpha, readjust=True):
    """Rank-amplified attention over each image independently.

    Returns (enhanced, per_image) where per_image holds dicts with the raw
    attention, its row softmax, ranks, amplification weights, and the
    final attention actually applied.
    """
    n, c, h, w = fused.shape
    hw = h * w
    f_conv = pointwise_conv_loops(fused, conv_w, conv_b)
    f_conv = np.maximum(f_conv, 0.0)
    f_key = pointwise_conv_loops(f_conv, key_w, key_b)
    f_query = pointwise_conv_loops(f_conv, query_w, query_b)
    f_value = pointwise_conv_loops(f_conv, value_w, value_b)

    enhanced = np.zeros_like(fused)
    per_image = []
    for img in range(n):
        fk = f_key[img].reshape(c, hw).T
        fq = f_query[img].reshape(c, hw).T
        fv = f_value[img].reshape(c, hw).T
        raw = matmul_loops(fk, fq.T)
        normalized = np.array([softmax_row_loops(list(raw[r])) for r in range(hw)])
        ranks = np.array([descending_rank_row_loops(list(raw[r])) for r in range(hw)])
        weights = np.ones((hw, hw))
        for r in range(hw):
            for s in range(hw):
                if raw[r, s] > 0.0:
                    weights[r, s] = (ranks[r, s] + 1.0) ** alpha
        final = normalized * weights if readjust else normalized
        mixed = matmul_loops(final, fv)
        enhanced[img] = f_conv[img] + mixed.T.reshape(c, h, w)
        per_image.append({
            "raw": raw, "normalized": normalized, "ranks": ranks,
            "weights": weights, "final": final,
        })
    return enhanced, per_image


# -- losses and metrics --------------------------------------------------------


def iou_loss_loops(pred, gt, eps=1e-8):
    """Soft IoU loss averaged over images, one pixel at a time."""
    n = pred.shape[0]
    scores = []
    for img in range(n):
        p = pred[img].reshape(-1)
        y = gt[img].reshape(-1)
        inter = math.fsum(p[t] * y[t] for t in range(p.size))
        union = math.fsum(p[t] + y[t] for t in range(p.size)) - inter
        scores.append((inter + eps) / (union + eps))
    return 1.0 - math.fsum(scores) / n


def mae_loops(pred, gt):
    p = pred.reshape(-1)
    y = gt.reshape(-1)
    return math.fsum(abs(p[t] - y[t]) for t in range(p.size)) / p.size


def f_beta_max_loops(pred, gt, beta_sq=0.3):
    """Exhaustive-threshold max F score with 8-bit quantization."""
    p = pred.reshape(-1)
    y = gt.reshape(-1) > 0.5
    if not any(y):
        raise ValueError("empty ground truth")
    levels = [min(255, max(0, int(math.floor(v * 255.0 + 0.5)))) for v in p]
    best = 0.0
    precision, recall = [], []
    for t in range(256):
        tp = fp = fn = 0
        for lv, truth in zip(levels, y):
            hit = lv > t
            if hit and truth:
                tp += 1
            elif hit and not truth:
                fp += 1
            elif not hit and truth:
                fn += 1
        prec = tp / (tp + fp) if (tp + fp) else 0.0
        rec = tp / (tp + fn) if (tp + fn) else 0.0
        denom = beta_sq * prec + rec
        score = (1.0 + beta_sq) * prec * rec / denom if denom else 0.0
        precision.append(prec)
        recall.append(rec)
        best = max(best, score)
    return best, precision, recall


# -- rasterization ---------------------------------------------------------


def rasterize_mask_loops(shape, cx, cy, size, height, width, inner_ratio=0.55):
    """Re-render one shape mask with per-pixel membership tests."""
    mask = np.zeros((height, width))
    for i in range(height):
        for j in range(width):
            dx = j - cx
            dy = i - cy
            if shape == "disk":
                hit = dx * dx + dy * dy <= size * size
            elif shape == "square":
                hit = max(abs(dx), abs(dy)) <= size
            elif shape == "triangle":
                # apex at cy - size, base at cy + size, width grows linearly
                span = (dy + size) / 2.0
                hit = -size <= dy <= size and abs(dx) <= span
            elif shape == "ring":
                d2 = dx * dx + dy * dy
                inner = inner_ratio * size
                hit = inner * inner <= d2 <= size * size
            else:
                raise ValueError(f"unknown shape class: {shape}")
            if hit:
                mask[i, j] = 1.0
    return mask

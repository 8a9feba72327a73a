"""Closed-polyline predicates: orientation, crossings, non-local gaps.

All functions take an ``(n, 2)`` array of markers describing a closed curve
(the last marker connects back to the first).
"""

import numpy as np

ORIENT_GUARD = 1e-14


def signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def segment_lengths(pts):
    return np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)


def mean_spacing(pts):
    return float(np.mean(segment_lengths(np.asarray(pts, dtype=float))))


def _orient(a, b, c, scale):
    d = (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    d = np.where(np.abs(d) <= ORIENT_GUARD * scale, 0.0, d)
    return np.sign(d)


def _nonadjacent_pairs(n):
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    return i[keep], j[keep]


def crossing_pairs(pts):
    """Index pairs ``(i, j)`` of segments that cross properly.

    Segment ``k`` joins marker ``k`` to marker ``k + 1``. Touching and
    collinear contacts are not reported.
    """
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    a = pts
    b = np.roll(pts, -1, axis=0)
    i, j = _nonadjacent_pairs(n)
    scale = max(1.0, float(np.max(np.abs(pts)))) ** 2
    o1 = _orient(a[i], b[i], a[j], scale)
    o2 = _orient(a[i], b[i], b[j], scale)
    o3 = _orient(a[j], b[j], a[i], scale)
    o4 = _orient(a[j], b[j], b[i], scale)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    return list(zip(i[hit].tolist(), j[hit].tolist()))


def has_proper_crossing(pts):
    return len(crossing_pairs(pts)) > 0


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=-1), 1e-300)
    t = np.clip(np.sum((p - a) * ab, axis=-1) / denom, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def min_nonlocal_gap(pts, separation):
    """Smallest distance between two segments more than ``separation`` apart
    in arclength along the curve. Returns ``inf`` if no such pair exists."""
    pts = np.asarray(pts, dtype=float)
    a = pts
    b = np.roll(pts, -1, axis=0)
    lengths = segment_lengths(pts)
    total = lengths.sum()
    mid = np.cumsum(lengths) - 0.5 * lengths
    i, j = _nonadjacent_pairs(len(pts))
    ds = np.abs(mid[i] - mid[j])
    ds = np.minimum(ds, total - ds)
    keep = ds > separation
    i, j = i[keep], j[keep]
    if i.size == 0:
        return np.inf
    d = np.minimum.reduce([
        _point_segment_distance(a[i], a[j], b[j]),
        _point_segment_distance(b[i], a[j], b[j]),
        _point_segment_distance(a[j], a[i], b[i]),
        _point_segment_distance(b[j], a[i], b[i]),
    ])
    return float(d.min())


def is_simple(pts):
    return not has_proper_crossing(pts)

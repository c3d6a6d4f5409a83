"""Planar helpers: segment intersection, point-in-region tests, Hausdorff
distances and face signatures for non-crossing chord systems.

Curves are numpy arrays of complex numbers throughout.
"""

from __future__ import annotations

import numpy as np

# fixed uniformizer used for the disc-pullback Hausdorff metric (recorded in
# output metadata): the Cayley map z -> (z - i)/(z + i)
CAYLEY_TAG = "cayley z->(z-i)/(z+i)"


def cayley(z):
    z = np.asarray(z, dtype=complex)
    return (z - 1j) / (z + 1j)


def polyline_lengths(points: np.ndarray) -> np.ndarray:
    return np.abs(np.diff(points))


def arclength(points: np.ndarray) -> float:
    return float(np.sum(np.abs(np.diff(points))))


def _seg_cross(p1, p2, q1, q2) -> np.ndarray:
    """Vectorized proper-or-touching intersection test between one segment
    (p1, p2) and arrays of segments (q1, q2)."""

    def orient(a, b, c):
        return np.real(np.conj(b - a) * 1j * (c - a))

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    proper = ((d1 * d2) < 0) & ((d3 * d4) < 0)
    touch = (d1 == 0) | (d2 == 0) | (d3 == 0) | (d4 == 0)
    # bounding-box filter for the collinear/touching corner cases
    bb = (
        (np.minimum(q1.real, q2.real) <= max(p1.real, p2.real))
        & (np.maximum(q1.real, q2.real) >= min(p1.real, p2.real))
        & (np.minimum(q1.imag, q2.imag) <= max(p1.imag, p2.imag))
        & (np.maximum(q1.imag, q2.imag) >= min(p1.imag, p2.imag))
    )
    return proper | (touch & bb)


def polylines_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """True if the polylines a and b intersect (shared endpoints count)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if len(a) < 2 or len(b) < 2:
        return False
    # cheap bbox reject
    if (
        a.real.min() > b.real.max() or a.real.max() < b.real.min()
        or a.imag.min() > b.imag.max() or a.imag.max() < b.imag.min()
    ):
        return False
    q1, q2 = b[:-1], b[1:]
    for p1, p2 in zip(a[:-1], a[1:]):
        if np.any(_seg_cross(p1, p2, q1, q2)):
            return True
    return False


def is_simple_polyline(points: np.ndarray, tol: float = 0.0) -> bool:
    """Self-intersection test, ignoring adjacent segments."""
    pts = np.asarray(points, dtype=complex)
    n = len(pts) - 1
    for i in range(n):
        j0 = i + 2
        if j0 >= n:
            break
        q1, q2 = pts[j0:-1], pts[j0 + 1:]
        if len(q1) == 0:
            continue
        if np.any(_seg_cross(pts[i], pts[i + 1], q1, q2)):
            return False
    return True


def point_in_closed_chord_region(z: complex, chord: np.ndarray) -> bool:
    """Even-odd test against the Jordan curve (chord + its base segment on R).

    The chord runs from a real point to a real point; closing it along the
    real axis bounds the region it cuts off from the upper half-plane.
    """
    poly = np.concatenate([chord, chord[:1]])
    x, y = z.real, z.imag
    px, py = poly.real, poly.imag
    x1, y1 = px[:-1], py[:-1]
    x2, y2 = px[1:], py[1:]
    cond = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xin = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = cond & (x < xin)
    return bool(np.sum(hits) % 2)


def face_signature(z: complex, chords: list[np.ndarray]) -> frozenset:
    """Identify the face of H minus the given disjoint chords containing z.

    For a non-crossing chord system the set of chords enclosing a point
    determines its face.
    """
    return frozenset(
        i for i, c in enumerate(chords) if point_in_closed_chord_region(z, c)
    )


def min_dist_to_polyline(z: complex, pts: np.ndarray) -> float:
    p = np.asarray(pts, dtype=complex)
    a, b = p[:-1], p[1:]
    d = b - a
    L2 = np.abs(d) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(np.real(np.conj(d) * (z - a)) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    proj = a + t * d
    return float(np.min(np.abs(z - proj)))


def _pts_to_polyline_dist(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to a polyline (segment-aware)."""
    a, b = poly[:-1], poly[1:]
    d = b - a
    L2 = np.abs(d) ** 2
    L2 = np.where(L2 > 0, L2, 1.0)
    t = np.real(np.conj(d)[None, :] * (pts[:, None] - a[None, :])) / L2[None, :]
    t = np.clip(t, 0.0, 1.0)
    proj = a[None, :] + t * d[None, :]
    return np.min(np.abs(pts[:, None] - proj), axis=1)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two curves given as polylines.

    Uses point-to-segment distances, so differently sampled copies of the
    same curve compare as equal up to the sagitta of the coarser sampling.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if len(a) < 2 or len(b) < 2:
        d = np.abs(a[:, None] - b[None, :])
        return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
    return float(max(_pts_to_polyline_dist(a, b).max(),
                     _pts_to_polyline_dist(b, a).max()))


def hausdorff_disc(a: np.ndarray, b: np.ndarray) -> float:
    """Hausdorff distance after pullback to the unit disc by the fixed Cayley
    uniformizer (the metric recorded in output metadata)."""
    return hausdorff(cayley(a), cayley(b))


def multichord_hausdorff(chords_a, chords_b) -> float:
    """Max over chords, matched by index."""
    return max(hausdorff(a, b) for a, b in zip(chords_a, chords_b))

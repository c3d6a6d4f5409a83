"""Conformal map chains between marked domains.

A :class:`MapChain` is a composition of elementary maps (real Mobius maps of
H, complex Mobius maps such as the disc-to-H Cayley map, tilted-slit unzips
and half-disc closings).  Every step has an exact inverse, so chains can be
evaluated in both directions and replayed bit-exactly from their JSON form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Numerics
from . import loewner as lw
from ._geometry import face_signature, min_dist_to_polyline


class MapDomainError(Exception):
    """Point left the domain of a chain step (swallowed by a slit)."""


# ---------------------------------------------------------------------------
# elementary steps


@dataclass(frozen=True)
class MobiusStep:
    """(a z + b)/(c z + d); real coefficients with ad - bc > 0 map H to H."""

    a: complex
    b: complex
    c: complex
    d: complex

    def fwd(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.a * z + self.b) / (self.c * z + self.d)

    def inv(self, w):
        w = np.asarray(w, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.d * w - self.b) / (-self.c * w + self.a)

    def dfwd(self, z):
        z = np.asarray(z, dtype=complex)
        det = self.a * self.d - self.b * self.c
        return det / (self.c * z + self.d) ** 2

    def tag(self):
        return {"kind": "mobius", "a": [self.a.real, self.a.imag],
                "b": [self.b.real, self.b.imag], "c": [self.c.real, self.c.imag],
                "d": [self.d.real, self.d.imag]}


@dataclass(frozen=True)
class SlitStep:
    """Unzip of a straight slit based at `base` (forward = remove the slit)."""

    base: float
    alpha: float
    a: float

    def fwd(self, z, cfg: Numerics = DEFAULT):
        z = np.asarray(z, dtype=complex)
        xl, xr = self.a * self.alpha, self.a * (1 - self.alpha)
        re = z.real
        swallowed = (np.abs(z.imag) < 1e-15) & (re > self.base - xl) & (re < self.base + xr)
        if np.any(swallowed):
            raise MapDomainError("real point lies in the swallowed base interval")
        return self.base + lw.slit_map_out(z - self.base, self.alpha, self.a, cfg)

    def inv(self, w):
        w = np.asarray(w, dtype=complex)
        return self.base + lw.slit_map_in(w - self.base, self.alpha, self.a)

    def tag(self):
        return {"kind": "slit", "base": self.base, "alpha": self.alpha, "a": self.a}


@dataclass(frozen=True)
class HalfDiscStep:
    """Mapping-out of the half-disc |z - c| <= r (forward removes it)."""

    c: float
    r: float

    def fwd(self, z, cfg: Numerics = DEFAULT):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z - self.c) < self.r * (1 - 1e-12)):
            raise MapDomainError("point lies inside a swallowed half-disc")
        return lw.halfdisc_map_out(z, self.c, self.r)

    def inv(self, w):
        return lw.halfdisc_map_in(np.asarray(w, dtype=complex), self.c, self.r)

    def tag(self):
        return {"kind": "halfdisc", "c": self.c, "r": self.r}


def _step_from_tag(d):
    if d["kind"] == "mobius":
        return MobiusStep(*(complex(p[0], p[1]) for p in (d["a"], d["b"], d["c"], d["d"])))
    if d["kind"] == "slit":
        return SlitStep(d["base"], d["alpha"], d["a"])
    if d["kind"] == "halfdisc":
        return HalfDiscStep(d["c"], d["r"])
    raise ValueError(f"unknown step kind {d['kind']}")


@dataclass
class MapChain:
    """Composition of elementary conformal maps, applied left to right."""

    steps: list = field(default_factory=list)

    def map_points(self, z, cfg: Numerics = DEFAULT):
        z = np.asarray(z, dtype=complex)
        for s in self.steps:
            z = s.fwd(z, cfg) if not isinstance(s, MobiusStep) else s.fwd(z)
        return z

    def inv_points(self, w):
        w = np.asarray(w, dtype=complex)
        for s in reversed(self.steps):
            w = s.inv(w)
        return w

    def map_real(self, x: float, cfg: Numerics = DEFAULT) -> float:
        z = self.map_points(np.array([x + 0j]), cfg)[0]
        if not np.isfinite(z):
            return float("inf")
        return float(z.real)

    def then(self, other: "MapChain") -> "MapChain":
        return MapChain(self.steps + other.steps)

    def to_json(self) -> str:
        return json.dumps([s.tag() for s in self.steps])

    @classmethod
    def from_json(cls, s: str) -> "MapChain":
        return cls([_step_from_tag(d) for d in json.loads(s)])


# ---------------------------------------------------------------------------
# domain specification


@dataclass(frozen=True)
class DomainSpec:
    """Marked planar domain: the half-plane, the unit disc, or a half-plane
    component cut out by disjoint slit curves; `face_anchor` selects the
    connected component."""

    kind: str = "half_plane"
    slits: tuple = ()
    face_anchor: complex = 1j

    def __post_init__(self):
        if self.kind not in ("half_plane", "disc", "slit_complement"):
            raise ValueError(f"unknown domain kind {self.kind}")
        object.__setattr__(self, "slits", tuple(self.slits))


HALF_PLANE = DomainSpec("half_plane")
DISC = DomainSpec("disc")

# Cayley map z -> i(1-z)/(1+z), unit disc onto H (1 -> 0, -1 -> inf, 0 -> i)
_CAYLEY = MobiusStep(-1j, 1j, 1, 1)


def slit_domain(chords, anchor: complex) -> DomainSpec:
    curves = tuple(c if isinstance(c, lw.Curve) else lw.Curve(points=np.asarray(c, complex))
                   for c in chords)
    return DomainSpec("slit_complement", curves, anchor)


# ---------------------------------------------------------------------------
# operations


def mobius_to_reference(x: float, y: float, unit_deriv_at: float | None = None) -> MapChain:
    """Real Mobius map of H with x -> 0 and y -> infinity.

    Scale fixed by requiring unit derivative at a third point (defaults to the
    midpoint of x and y, or x + 1 when y is infinite).
    """
    if y is not None and np.isfinite(y) and x == y:
        raise ValueError("x and y must differ")
    if y is None or not np.isfinite(y):
        q = unit_deriv_at if unit_deriv_at is not None else x + 1.0
        step = MobiusStep(1.0, -x, 0.0, 1.0)  # derivative 1 everywhere
        _ = q
        return MapChain([step])
    q = unit_deriv_at if unit_deriv_at is not None else 0.5 * (x + y)
    if x < y:
        # s (z - x)/(y - z): det = s (y - x)
        dq = (y - x) / (y - q) ** 2
        s = 1.0 / abs(dq)
        step = MobiusStep(s, -s * x, -1.0, y)
    else:
        # s (z - x)/(z - y): det = s (x - y)
        dq = (x - y) / (q - y) ** 2
        s = 1.0 / abs(dq)
        step = MobiusStep(s, -s * x, 1.0, -y)
    return MapChain([step])


def _chord_arrays(domain: DomainSpec):
    return [np.asarray(c.points, dtype=complex) for c in domain.slits]


def _pick_base_point(chords, sig, avoid, cfg: Numerics):
    """Real point on the boundary of the selected face, away from endpoints."""
    ends = sorted({float(c[0].real) for c in chords} | {float(c[-1].real) for c in chords})
    span = max(ends[-1] - ends[0], 1.0)
    cands = [ends[0] - 0.7 * span, ends[-1] + 0.7 * span]
    for u, v in zip(ends[:-1], ends[1:]):
        if v - u > 10 * cfg.eps_geom:
            cands.append(0.5 * (u + v))
    h = 1e-7 * span
    best, best_d = None, -1.0
    for p in cands:
        if any(abs(p - a) < 10 * cfg.eps_geom for a in avoid):
            continue
        if face_signature(p + 1j * h, chords) != sig:
            continue
        d = min(min_dist_to_polyline(p + 0j, c) for c in chords)
        if d > best_d:
            best, best_d = p, d
    if best is None:
        raise MapDomainError("no real boundary point found for the selected face; "
                             "is the anchor in the right component?")
    return best


def uniformize_face(domain: DomainSpec, cfg: Numerics = DEFAULT,
                    avoid: tuple = ()) -> MapChain:
    """Chain mapping the component of `domain` containing its anchor onto H
    (no normalization of marked points)."""
    if domain.kind == "half_plane":
        return MapChain([])
    if domain.kind == "disc":
        # rotate so no avoided boundary point sits at the Cayley pole z = -1
        best, best_d = 0.0, -1.0
        for th in (0.0, np.pi / 3, 2 * np.pi / 3, np.pi / 7):
            rot = np.exp(1j * th)
            d = min((abs(rot * complex(a) + 1.0) for a in avoid), default=1.0)
            if d > best_d:
                best, best_d = th, d
        steps = [] if best == 0.0 else [MobiusStep(np.exp(1j * best), 0.0, 0.0, 1.0)]
        return MapChain(steps + [_CAYLEY])
    chords = _chord_arrays(domain)
    if not chords:
        return MapChain([])
    anchor = complex(domain.face_anchor)
    sig = face_signature(anchor, chords)
    steps: list = []
    if sig:
        p = _pick_base_point(chords, sig, avoid, cfg)
        pre = MobiusStep(0.0, -1.0, 1.0, -p)  # z -> -1/(z - p), p -> inf
        steps.append(pre)
        chords = [pre.fwd(c) for c in chords]
        anchor = complex(pre.fwd(np.array([anchor]))[0])
    # nesting forest: chord i inside chord j
    n = len(chords)
    inside = np.zeros((n, n), dtype=bool)
    for i in range(n):
        zmid = chords[i][len(chords[i]) // 2]
        for j in range(n):
            if i != j:
                from ._geometry import point_in_closed_chord_region
                inside[i, j] = point_in_closed_chord_region(zmid, chords[j])
    alive = list(range(n))
    while alive:
        roots = [i for i in alive if not any(inside[i, j] for j in alive if j != i)]
        i = roots[0]
        zsteps = lw.zipper_steps(lw.Curve(points=chords[i] - chords[i][0].real), cfg)
        base_shift = chords[i][0].real
        sub = []
        for zs in zsteps:
            if zs.kind == "slit":
                sub.append(SlitStep(zs.base + base_shift, zs.alpha, zs.a))
            else:
                sub.append(HalfDiscStep(zs.base + base_shift, zs.r))
        steps.extend(sub)
        dropped = {i} | {k for k in alive if inside[k, i]}
        alive = [k for k in alive if k not in dropped]
        for k in alive:
            z = chords[k]
            for s in sub:
                z = s.fwd(z, cfg)
            chords[k] = z
    return MapChain(steps)


def uniformize_component(domain: DomainSpec, x: float, y: float,
                         cfg: Numerics = DEFAULT) -> MapChain:
    """Conformal map of the anchored component onto H with x -> 0, y -> inf.

    Built from zipper unzips of the slits and a final Mobius; the scale is
    fixed by sending the face anchor to the unit half-circle.
    """
    y_fin = np.isfinite(y)
    face = uniformize_face(domain, cfg, avoid=(x,) if not y_fin else (x, y))
    zs = np.array([complex(x), complex(y) if y_fin else 0j, complex(domain.face_anchor)])
    img = face.map_points(zs, cfg)
    X = float(img[0].real)
    Y = float(img[1].real) if y_fin else float("inf")
    mob = mobius_to_reference(X, Y)
    chain = face.then(mob)
    za = mob.map_points(img[2:3], cfg)[0]
    if np.isfinite(za) and abs(za) > 0:
        s = 1.0 / abs(za)
        chain = chain.then(MapChain([MobiusStep(s, 0.0, 0.0, 1.0)]))
    return chain


# chord_energy expects this name
def uniformize_to_zero_infty(domain: DomainSpec, x: float, y, cfg: Numerics = DEFAULT) -> MapChain:
    return uniformize_component(domain, x, y, cfg)


def boundary_derivative(chain: MapChain, x, cfg: Numerics = DEFAULT,
                        side: int | None = None, boundary: str = "real") -> float:
    """|phi'(x)| at a regular boundary point, by one-sided Richardson
    extrapolation with steps cfg.deriv_steps.

    ``boundary`` selects the walk direction: along R for half-plane-type
    domains, along the unit circle (arc length) for the disc.
    """

    def diffs(s):
        hs = np.array([0.0] + [s * h for h in cfg.deriv_steps])
        if boundary == "circle":
            zs = complex(x) * np.exp(1j * hs)
        else:
            zs = complex(x) + hs
        w = chain.map_points(zs, cfg)
        if not np.all(np.isfinite(w)):
            raise MapDomainError("probe point maps to infinity")
        f = w.real
        return [(f[k] - f[0]) / hs[k] for k in (1, 2, 3)]

    sides = (side,) if side in (1, -1) else (1, -1)
    last_err = None
    for s in sides:
        try:
            d1, d2, d4 = diffs(s)
        except (MapDomainError, lw.LoewnerError) as e:
            last_err = e
            continue
        if not all(np.isfinite([d1, d2, d4])):
            continue
        r1a = 2 * d2 - d1
        r1b = 2 * d4 - d2
        val = abs((4 * r1b - r1a) / 3.0)
        if val > 0:
            return val
    raise MapDomainError(f"boundary derivative undefined at x={x}"
                         + (f" ({last_err})" if last_err else ""))


def poisson_kernel(domain: DomainSpec, x, y, cfg: Numerics = DEFAULT) -> float:
    """Poisson excursion kernel P_{D;x,y} = |phi'(x)||phi'(y)| |phi(y)-phi(x)|^-2."""
    if x == y:
        raise ValueError("x and y must differ")
    if domain.kind == "half_plane" or (domain.kind == "slit_complement" and not domain.slits):
        return 1.0 / abs(y - x) ** 2
    walk = "circle" if domain.kind == "disc" else "real"
    chain = uniformize_face(domain, cfg, avoid=(x, y))
    X = float(chain.map_points(np.array([complex(x)]), cfg)[0].real)
    Y = float(chain.map_points(np.array([complex(y)]), cfg)[0].real)
    dx = boundary_derivative(chain, x, cfg, boundary=walk)
    dy = boundary_derivative(chain, y, cfg, boundary=walk)
    return dx * dy / abs(Y - X) ** 2


def log_poisson_kernel(domain: DomainSpec, x: float, y: float,
                       cfg: Numerics = DEFAULT) -> float:
    return float(np.log(poisson_kernel(domain, x, y, cfg)))


def hyperbolic_geodesic(domain: DomainSpec, x: float, y: float,
                        samples: int | None = None, cfg: Numerics = DEFAULT) -> lw.Curve:
    """The hyperbolic geodesic of (domain; x, y): preimage of the positive
    imaginary axis under the uniformizing chain, sampled with endpoint
    refinement and adaptive subdivision where the pullback stretches."""
    m = samples or cfg.geodesic_samples
    chain = uniformize_component(domain, x, y, cfg)
    ends_real = np.isfinite(y)

    def pullback(theta):
        inner = chain.inv_points(1j * np.tan(theta[1:-1]))
        left = np.array([complex(x)])
        right = np.array([complex(y) if ends_real else chain.inv_points(
            np.array([1j * np.tan(theta[-2])]))[0]])
        return np.concatenate([left, inner, right])

    theta = np.linspace(0.0, np.pi / 2, m + 2)
    pts = pullback(theta)
    # subdivide (in theta, including the end intervals) wherever the image
    # spacing is far above the median; only new midpoints are evaluated
    for _ in range(10):
        gaps = np.abs(np.diff(pts))
        target = 4.0 * np.median(gaps) + 1e-12
        bad = np.nonzero(gaps > target)[0]
        if len(bad) == 0 or len(theta) > 10 * m:
            break
        mids = 0.5 * (theta[bad] + theta[bad + 1])
        new_pts = chain.inv_points(1j * np.tan(mids))
        theta = np.concatenate([theta, mids])
        pts = np.concatenate([pts, new_pts])
        order = np.argsort(theta)
        theta, pts = theta[order], pts[order]
    if not ends_real:
        pts = pts[:-1]
    return lw.as_halfplane_curve(pts)

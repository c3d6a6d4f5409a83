"""Link patterns, geodesic multichords, and rational functions with
prescribed real critical points.

The geodesic multichord for marked points x_1 < ... < x_2n and a planar link
pattern is computed two independent ways:

* as the fixed point of the sweep replacing each chord by the hyperbolic
  geodesic of its own complementary component, and
* by tracing the real locus of a rational function of degree n+1 whose
  critical points are exactly the marked points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .config import DEFAULT, Numerics
from . import loewner as lw
from . import conformal as cf
from ._geometry import hausdorff, polylines_intersect, multichord_hausdorff


class MultichordError(Exception):
    pass


# ---------------------------------------------------------------------------
# link patterns


@dataclass(frozen=True)
class LinkPattern:
    """Planar pair partition of {1, ..., 2n} (1-based indices)."""

    pairs: tuple

    def __post_init__(self):
        ps = tuple(sorted(tuple(sorted(map(int, p))) for p in self.pairs))
        idx = sorted(i for p in ps for i in p)
        n = len(ps)
        if idx != list(range(1, 2 * n + 1)):
            raise ValueError("pairs must partition {1,...,2n}")
        for a, b in ps:
            for c, d in ps:
                if a < c < b < d:
                    raise ValueError(f"crossing pairs {a,b} and {c,d}")
        object.__setattr__(self, "pairs", ps)

    @property
    def n(self) -> int:
        return len(self.pairs)

    def mirrored(self) -> "LinkPattern":
        m = 2 * self.n + 1
        return LinkPattern(tuple((m - b, m - a) for a, b in self.pairs))

    def __str__(self):
        return "|".join(f"{a}{b}" for a, b in self.pairs)


def catalan(n: int) -> int:
    from math import comb
    return comb(2 * n, n) // (n + 1)


def enumerate_link_patterns(n: int) -> list[LinkPattern]:
    """All non-crossing pair partitions of {1,...,2n}, lexicographically
    ordered by their sorted pair lists."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 8:
        raise ValueError("n capped at 8")

    def rec(idx):
        if not idx:
            return [()]
        a = idx[0]
        out = []
        for k in range(1, len(idx), 2):
            b = idx[k]
            left = idx[1:k]
            right = idx[k + 1:]
            for l in rec(left):
                for r in rec(right):
                    out.append(((a, b),) + l + r)
        return out

    pats = [LinkPattern(p) for p in rec(tuple(range(1, 2 * n + 1)))]
    pats.sort(key=lambda p: p.pairs)
    assert len(pats) == catalan(n)
    return pats


def classify_link_pattern(chords, x, cfg: Numerics = DEFAULT) -> LinkPattern:
    """Read the pattern off chord endpoints (matched to x within eps_geom)."""
    x = np.asarray(x, dtype=float)
    pairs = []
    for c in chords:
        pts = c.points if isinstance(c, lw.Curve) else np.asarray(c, complex)
        ends = []
        for z in (pts[0], pts[-1]):
            d = np.abs(x - z.real) + abs(z.imag)
            k = int(np.argmin(d))
            if d[k] > 10 * cfg.eps_geom:
                raise MultichordError(f"chord endpoint {z} matches no marked point")
            ends.append(k + 1)
        pairs.append(tuple(sorted(ends)))
    return LinkPattern(tuple(pairs))


# ---------------------------------------------------------------------------
# multichords


@dataclass(frozen=True)
class Multichord:
    chords: tuple
    boundary_points: np.ndarray
    pattern: LinkPattern
    domain: cf.DomainSpec = cf.HALF_PLANE

    def __post_init__(self):
        object.__setattr__(self, "chords", tuple(self.chords))
        object.__setattr__(self, "boundary_points",
                           np.asarray(self.boundary_points, dtype=float))

    @property
    def n(self) -> int:
        return len(self.chords)

    def endpoints(self, j: int) -> tuple[float, float]:
        a, b = self.pattern.pairs[j]
        x = self.boundary_points
        return float(x[a - 1]), float(x[b - 1])

    def component_of(self, j: int) -> cf.DomainSpec:
        """The connected component of H minus the other chords containing
        chord j (anchored at its midpoint)."""
        others = [c for i, c in enumerate(self.chords) if i != j]
        mid = self.chords[j].points[len(self.chords[j].points) // 2]
        if not others:
            return cf.HALF_PLANE
        return cf.slit_domain(others, anchor=mid)

    def to_json(self) -> str:
        return json.dumps({
            "x": self.boundary_points.tolist(),
            "pattern": [list(p) for p in self.pattern.pairs],
            "chords": [[[z.real, z.imag] for z in c.points] for c in self.chords],
            "hausdorff_metric": "disc pullback via cayley z->(z-i)/(z+i)",
        })

    @classmethod
    def from_json(cls, s: str) -> "Multichord":
        d = json.loads(s)
        chords = tuple(lw.Curve(points=np.array([complex(re, im) for re, im in c]))
                       for c in d["chords"])
        return cls(chords, np.asarray(d["x"], float),
                   LinkPattern(tuple(tuple(p) for p in d["pattern"])))


def _semicircle(a: float, b: float, m: int) -> lw.Curve:
    c, r = 0.5 * (a + b), 0.5 * abs(b - a)
    th = np.linspace(np.pi, 0.0, m) if a < b else np.linspace(0.0, np.pi, m)
    pts = c + r * np.exp(1j * th)
    pts[0], pts[-1] = a, b
    return lw.Curve(points=pts)


def initial_multichord(x, alpha: LinkPattern, m: int = 121) -> Multichord:
    """Disjoint starting configuration: the semicircle over every pair.

    For a planar pattern these are pairwise disjoint (nested pairs give
    strictly nested half-discs)."""
    x = np.asarray(x, dtype=float)
    chords = tuple(_semicircle(x[a - 1], x[b - 1], m) for a, b in alpha.pairs)
    return Multichord(chords, x, alpha)


def geodesic_multichord(x, alpha: LinkPattern, tol: float | None = None,
                        max_sweeps: int | None = None, cfg: Numerics = DEFAULT,
                        init: Multichord | None = None,
                        fixed_sweeps: int | None = None,
                        samples: int | None = None) -> Multichord:
    """Fixed point of the chord-resampling sweep: replace chord j by the
    hyperbolic geodesic of its component, cycling j, until the largest
    per-sweep displacement drops below tol."""
    x = np.asarray(x, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise ValueError("marked points must be strictly increasing")
    alpha = alpha if isinstance(alpha, LinkPattern) else LinkPattern(tuple(alpha))
    tol = cfg.sweep_tol if tol is None else tol
    max_sweeps = cfg.max_sweeps if max_sweeps is None else max_sweeps
    mc = init if init is not None else initial_multichord(x, alpha)
    if init is not None and (init.pattern.pairs != alpha.pairs
                             or not np.allclose(init.boundary_points, x)):
        mc = initial_multichord(x, alpha)
    n = alpha.n
    sweeps = fixed_sweeps if fixed_sweeps is not None else max_sweeps
    last_disp = np.inf
    for s in range(sweeps):
        disp = 0.0
        chords = list(mc.chords)
        for j in range(n):
            a, b = mc.endpoints(j)
            others = [c for i, c in enumerate(chords) if i != j]
            if others:
                anchor = chords[j].points[len(chords[j].points) // 2]
                dom = cf.slit_domain(others, anchor=anchor)
            else:
                dom = cf.HALF_PLANE
            new = cf.hyperbolic_geodesic(dom, a, b, samples=samples, cfg=cfg)
            for i, o in enumerate(others):
                if polylines_intersect(new.points[1:-1], o.points[1:-1]):
                    raise MultichordError(
                        f"chord {j} collided with chord {i if i < j else i + 1} during sweep {s}")
            disp = max(disp, hausdorff(chords[j].points, new.points))
            chords[j] = new
        mc = Multichord(tuple(chords), x, alpha)
        last_disp = disp
        if fixed_sweeps is None and disp < tol:
            return mc
    if fixed_sweeps is not None:
        return mc
    raise MultichordError(
        f"geodesic sweep did not converge in {max_sweeps} sweeps (last displacement {last_disp:.3g})")


# ---------------------------------------------------------------------------
# rational functions with prescribed critical points


@dataclass(frozen=True)
class RationalFn:
    """h = P/Q with real coefficient arrays in ascending order.

    Normal form used here: h(z) = z + S(z)/Q(z) with Q monic of degree n and
    deg S < n, i.e. P = z Q + S, which pins down the class of h under real
    Mobius post-composition and z -> -z.
    """

    p_coeffs: np.ndarray
    q_coeffs: np.ndarray
    normalization: str = "hydrodynamic (h(z) - z -> 0 at infinity, Q monic)"

    def __post_init__(self):
        p = np.trim_zeros(np.asarray(self.p_coeffs, dtype=float), "b")
        q = np.trim_zeros(np.asarray(self.q_coeffs, dtype=float), "b")
        if len(p) == 0 or len(q) == 0:
            raise ValueError("P and Q must be nonzero")
        object.__setattr__(self, "p_coeffs", p)
        object.__setattr__(self, "q_coeffs", q)

    @property
    def degree(self) -> int:
        return max(len(self.p_coeffs), len(self.q_coeffs)) - 1

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return npoly.polyval(z, self.p_coeffs) / npoly.polyval(z, self.q_coeffs)

    def deriv(self, z):
        z = np.asarray(z, dtype=complex)
        w = wronskian(self)
        return npoly.polyval(z, w) / npoly.polyval(z, self.q_coeffs) ** 2

    def poles(self) -> np.ndarray:
        return npoly.polyroots(self.q_coeffs)


def wronskian(f: RationalFn) -> np.ndarray:
    """Coefficients (ascending) of P'Q - PQ'; its roots are the critical
    points of h = P/Q."""
    p, q = f.p_coeffs, f.q_coeffs
    w = npoly.polysub(npoly.polymul(npoly.polyder(p), q),
                      npoly.polymul(p, npoly.polyder(q)))
    return np.trim_zeros(w, "b")


def _wronskian_residual(q, s, target):
    """Coefficients 0..2n-1 of Q^2 + S'Q - SQ' - T, with Q = z^n + q, S = s."""
    n = len(q)
    Q = np.concatenate([q, [1.0]])
    S = s
    W = npoly.polymul(Q, Q)
    if len(S):
        W = npoly.polyadd(W, npoly.polysub(npoly.polymul(npoly.polyder(S), Q),
                                           npoly.polymul(S, npoly.polyder(Q))))
    r = npoly.polysub(W, target)
    r = np.concatenate([r, np.zeros(max(0, 2 * n - len(r)))])
    return r[: 2 * n]


def _wronskian_jacobian(q, s):
    """Derivative of the W = Q^2 + S'Q - SQ' coefficients w.r.t. (q, s)."""
    n = len(q)
    Q = np.concatenate([q, [1.0]])
    S = s if len(s) else np.zeros(1)
    dQ = npoly.polyder(Q)
    dS = npoly.polyder(S) if len(S) > 1 else np.zeros(1)
    J = np.zeros((2 * n, 2 * n))

    def put(col, poly):
        c = np.concatenate([poly, np.zeros(max(0, 2 * n - len(poly)))])[: 2 * n]
        J[:, col] = c

    for j in range(n):
        zj = np.zeros(j + 1)
        zj[j] = 1.0
        # d/dq_j: 2 Q z^j + S' z^j - S (z^j)'
        dW = npoly.polymul(2.0 * Q, zj)
        dW = npoly.polyadd(dW, npoly.polymul(dS, zj))
        if j >= 1:
            zjm = np.zeros(j)
            zjm[j - 1] = float(j)
            dW = npoly.polysub(dW, npoly.polymul(S, zjm))
        put(j, dW)
    for j in range(n):
        zj = np.zeros(j + 1)
        zj[j] = 1.0
        # d/ds_j: (z^j)' Q - z^j Q'
        dW = -npoly.polymul(zj, dQ)
        if j >= 1:
            zjm = np.zeros(j)
            zjm[j - 1] = float(j)
            dW = npoly.polyadd(npoly.polymul(zjm, Q), dW)
        put(n + j, dW)
    return J


def _newton_polish(q, s, target, tol=1e-13, maxit=60):
    u = np.concatenate([q, s])
    n = len(q)
    for _ in range(maxit):
        r = _wronskian_residual(u[:n], u[n:], target)
        if np.max(np.abs(r)) < tol * max(1.0, np.max(np.abs(target))):
            return u[:n], u[n:], True
        J = _wronskian_jacobian(u[:n], u[n:])
        try:
            du = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return u[:n], u[n:], False
        u = u - du
    r = _wronskian_residual(u[:n], u[n:], target)
    return u[:n], u[n:], np.max(np.abs(r)) < 1e-8 * max(1.0, np.max(np.abs(target)))


def _fit_from_multichord(mc: Multichord, cfg: Numerics) -> tuple[np.ndarray, np.ndarray]:
    """Linear seed for (Q, S): the hydrodynamically normalized mapping-out of
    the whole multichord equals h = z + S/Q on the unbounded face, so samples
    of g on the real boundary fit S - (g(z)-z) Q = 0 linearly."""
    x = mc.boundary_points
    n = mc.n
    span = x[-1] - x[0]
    chords = [c.points for c in mc.chords]
    high = complex(0.5 * (x[0] + x[-1]), 2.5 * span + 2.0)
    dom = cf.slit_domain(mc.chords, anchor=high)
    chain = cf.uniformize_face(dom, cfg)
    # sample real points on the unbounded face: outside all chord footprints
    cands = []
    ends = np.sort(x)
    cands += list(np.linspace(ends[0] - 1.5 * span, ends[0] - 0.05 * span, n + 2))
    cands += list(np.linspace(ends[-1] + 0.05 * span, ends[-1] + 1.5 * span, n + 2))
    for u, v in zip(ends[:-1], ends[1:]):
        cands += list(np.linspace(u + 0.2 * (v - u), v - 0.2 * (v - u), 3))
    from ._geometry import face_signature
    pts = [p for p in cands if not face_signature(complex(p, 1e-9 * span), chords)]
    pts = np.asarray(pts, dtype=float)
    g = np.array([chain.map_real(p, cfg) for p in pts])
    ok = np.isfinite(g)
    pts, g = pts[ok], g[ok]
    # S(z) - (g - z) (z^n + sum q_j z^j) = 0:  unknowns (q_0..q_{n-1}, s_0..s_{n-1})
    A = np.zeros((len(pts), 2 * n))
    rhs = (g - pts) * pts**n
    for j in range(n):
        A[:, j] = -(g - pts) * pts**j
        A[:, n + j] = pts**j
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return sol[:n], sol[n:]


def rational_solutions(x, cfg: Numerics = DEFAULT,
                       patterns: list[LinkPattern] | None = None) -> list[RationalFn]:
    """All classes of real rational functions of degree n+1 whose critical
    points are exactly x_1 < ... < x_2n; one normalized representative per
    class, seeded from the geodesic multichord of each link pattern and
    polished by Newton iteration on the Wronskian coefficient system."""
    x = np.asarray(x, dtype=float)
    if len(x) % 2 or np.any(np.diff(x) <= 0):
        raise ValueError("x must be an increasing sequence of even length")
    n = len(x) // 2
    if n > 4:
        raise ValueError("n capped at 4")
    target = npoly.polyfromroots(x)
    pats = patterns if patterns is not None else enumerate_link_patterns(n)
    out, failures = [], []
    for alpha in pats:
        try:
            mc = geodesic_multichord(x, alpha, cfg=cfg)
            q0, s0 = _fit_from_multichord(mc, cfg)
            q, s, ok = _newton_polish(q0, s0, target)
        except Exception as e:  # seed or sweep failure: try homotopy below
            ok, q, s = False, None, None
            failures.append((alpha, str(e)))
        if not ok:
            q, s, ok = _homotopy_solve(x, alpha, target, cfg)
        if not ok:
            failures.append((alpha, "newton did not converge"))
            continue
        Q = np.concatenate([q, [1.0]])
        P = npoly.polyadd(npoly.polymul([0.0, 1.0], Q),
                          np.concatenate([s, np.zeros(1)]) if len(s) else [0.0])
        out.append(RationalFn(p_coeffs=P, q_coeffs=Q))
    # deduplicate (distinct patterns give distinct normal forms)
    uniq = []
    for f in out:
        if not any(len(f.q_coeffs) == len(g.q_coeffs)
                   and np.allclose(f.q_coeffs, g.q_coeffs, atol=1e-7)
                   and np.allclose(f.p_coeffs, g.p_coeffs, atol=1e-7) for g in uniq):
            uniq.append(f)
    if failures and len(uniq) < catalan(n):
        raise MultichordError(f"rational classes missing for patterns: {failures}")
    return uniq


def _homotopy_solve(x, alpha, target, cfg):
    """Continuation from the evenly spaced symmetric configuration."""
    n = len(x) // 2
    x0 = np.linspace(-1.0, 1.0, 2 * n) * (x[-1] - x[0]) / 2 + (x[-1] + x[0]) / 2
    try:
        mc = geodesic_multichord(x0, alpha, cfg=cfg)
        q, s = _fit_from_multichord(mc, cfg)
        q, s, ok = _newton_polish(q, s, npoly.polyfromroots(x0))
        if not ok:
            return None, None, False
    except Exception:
        return None, None, False
    for lam in np.linspace(0.0, 1.0, 21)[1:]:
        xt = (1 - lam) * x0 + lam * x
        q, s, ok = _newton_polish(q, s, npoly.polyfromroots(xt))
        if not ok:
            return None, None, False
    return q, s, True


# ---------------------------------------------------------------------------
# real locus tracing


class TracerError(MultichordError):
    pass


def _locus_trace(f: RationalFn, x0: float, scale: float, window, step: float):
    """Trace the branch of the level set |(h-i)/(h+i)| = 1 leaving x0
    vertically into the upper half-plane; returns the polyline."""
    wcoef = wronskian(f)

    def L_and_dL(z):
        h = f(z)
        dh = npoly.polyval(z, wcoef) / npoly.polyval(z, f.q_coeffs) ** 2
        H = (h - 1j) / (h + 1j)
        u = np.log(abs(H))
        dL = 2j * dh / (h * h + 1.0)
        return u, dL

    re_lo, re_hi, im_hi = window
    z = complex(x0, 1e-6 * scale)
    pts = [complex(x0, 0.0), z]
    ds = step
    prev_tau = 1j
    min_ds = 1e-6 * scale
    for _ in range(200000):
        u, dL = L_and_dL(z)
        if dL == 0:
            raise TracerError(f"tracer hit a critical point at {z}")
        tau = 1j * np.conj(dL)
        tau /= abs(tau)
        if np.real(tau * np.conj(prev_tau)) < 0:
            tau = -tau
        zp = z + ds * tau
        # corrector: newton back onto the level set
        ok = False
        for _ in range(8):
            u2, dL2 = L_and_dL(zp)
            corr = -u2 * np.conj(dL2) / abs(dL2) ** 2
            zp = zp + corr
            if abs(corr) < 1e-12 * scale + 1e-9 * ds:
                ok = True
                break
        moved = abs(zp - z)
        if (not ok) or moved > 3.0 * ds or moved < 0.05 * ds:
            ds *= 0.5
            if ds < min_ds:
                raise TracerError(f"tracer stalled near {z}")
            continue
        prev_tau = (zp - z) / moved
        z = zp
        pts.append(z)
        ds = min(step, ds * 1.4)
        if z.imag <= 1.2e-6 * scale and len(pts) > 8:
            break
        if not (re_lo <= z.real <= re_hi and z.imag <= im_hi):
            raise TracerError(f"trace left the window at {z}")
    else:
        raise TracerError("trace did not terminate")
    return np.asarray(pts, dtype=complex)


def real_locus(f: RationalFn, window=None, step: float | None = None,
               cfg: Numerics = DEFAULT) -> Multichord:
    """Chords of the real locus of h in the upper half-plane, traced from
    each critical point by predictor-corrector continuation; the link pattern
    is read off the traced connectivity."""
    crit = np.sort(np.real(npoly.polyroots(wronskian(f))))
    if np.max(np.abs(np.imag(npoly.polyroots(wronskian(f))))) > 1e-8:
        raise ValueError("critical points must be real")
    x = crit
    span = x[-1] - x[0]
    if window is None:
        window = (x[0] - 1.5 * span, x[-1] + 1.5 * span, 3.0 * span)
    step = step if step is not None else span / 400.0
    traces = {}
    for k, xk in enumerate(x):
        traces[k] = _locus_trace(f, float(xk), span, window, step)
    pairs, chords, used = [], [], set()
    for k, tr in traces.items():
        if k in used:
            continue
        endp = tr[-1].real
        m = int(np.argmin(np.abs(x - endp)))
        if abs(x[m] - endp) > 50 * cfg.eps_geom * span or m == k:
            raise TracerError(f"trace from x_{k + 1} landed at {endp}, not a critical point")
        used |= {k, m}
        pairs.append((k + 1, m + 1))
        pts = tr.copy()
        pts[-1] = x[m]
        lo, hi = (k, m) if x[k] < x[m] else (m, k)
        if pts[0].real > pts[-1].real:
            pts = pts[::-1]
        chords.append(lw.as_halfplane_curve(pts))
        _ = (lo, hi)
    alpha = LinkPattern(tuple(pairs))
    return Multichord(tuple(chords), x, alpha)


def cross_validate(x, alpha: LinkPattern, cfg: Numerics = DEFAULT):
    """Geodesic multichord by both methods; returns (fixed-point mc,
    traced mc, Hausdorff distance matched by pattern)."""
    mc = geodesic_multichord(x, alpha, cfg=cfg)
    sols = rational_solutions(x, cfg=cfg, patterns=[alpha])
    traced = real_locus(sols[0], cfg=cfg)
    if traced.pattern.pairs != alpha.pairs:
        raise MultichordError(
            f"real locus produced pattern {traced.pattern}, expected {alpha}")
    # match chords by pattern pair
    order = {p: i for i, p in enumerate(traced.pattern.pairs)}
    t_chords = [traced.chords[order[p]] for p in mc.pattern.pairs]
    d = multichord_hausdorff([c.points for c in mc.chords],
                             [c.points for c in t_chords])
    return mc, traced, d

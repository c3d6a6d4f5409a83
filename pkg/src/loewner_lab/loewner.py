"""Chordal Loewner evolution in the upper half-plane.

Forward evolution and driving-function recovery both use tilted-slit
elementary maps: each step removes (or attaches) a straight segment from the
current driver position, which absorbs one driver increment exactly and keeps
every step an exact conformal map of H.

Conventions: capacity time with hcap = 2t; drivers start at 0; curves are
polylines with a real base point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Numerics
from . import _geometry


class LoewnerError(Exception):
    pass


class NonSimpleCurveError(LoewnerError):
    def __init__(self, vertex: int, msg: str = ""):
        self.vertex = vertex
        super().__init__(f"curve is not simple near vertex {vertex}" + (f": {msg}" if msg else ""))


class DegenerateStepError(LoewnerError):
    def __init__(self, step: int, msg: str = ""):
        self.step = step
        super().__init__(f"degenerate Loewner step {step}" + (f": {msg}" if msg else ""))


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class DrivingFunction:
    """Piecewise-linear driver t -> W_t sampled on an increasing time grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        w = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or len(t) < 1:
            raise ValueError("times/values must be 1d arrays of equal length")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and be strictly increasing")
        if abs(w[0]) > 0:
            raise ValueError("values[0] must be 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", w)

    @property
    def total_capacity(self) -> float:
        return 2.0 * float(self.times[-1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def to_json(self) -> str:
        return json.dumps({"times": self.times.tolist(), "values": self.values.tolist()})

    @classmethod
    def from_json(cls, s: str) -> "DrivingFunction":
        d = json.loads(s)
        return cls(np.asarray(d["times"], float), np.asarray(d["values"], float))

    def to_csv(self) -> str:
        lines = ["t,w"] + [f"{t!r},{w!r}" for t, w in zip(self.times, self.values)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Curve:
    """Polyline in the closed upper half-plane with a real base point."""

    points: np.ndarray
    capacity_times: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=complex)
        if p.ndim != 1 or len(p) < 2:
            raise ValueError("need at least two points")
        if abs(p[0].imag) > 1e-9 * (1 + abs(p[0])):
            raise ValueError("points[0] must lie on the real axis")
        p = p.copy()
        p[0] = p[0].real
        if np.any(p[1:-1].imag <= 0):
            raise ValueError("interior points must have positive imaginary part")
        object.__setattr__(self, "points", p)
        if self.capacity_times is not None:
            object.__setattr__(self, "capacity_times", np.asarray(self.capacity_times, float))

    @property
    def base(self) -> complex:
        return self.points[0]

    @property
    def tip(self) -> complex:
        return self.points[-1]

    def to_json(self) -> str:
        return json.dumps({"points": [[z.real, z.imag] for z in self.points]})

    @classmethod
    def from_json(cls, s: str) -> "Curve":
        d = json.loads(s)
        return cls(np.asarray([complex(re, im) for re, im in d["points"]]))

    def to_csv(self) -> str:
        lines = ["re,im"] + [f"{z.real!r},{z.imag!r}" for z in self.points]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SLEParams:
    """kappa in (0, 4]: simple curves.  Multichordal reweighting additionally
    needs kappa < 8/3 (negative central charge); samplers enforce that."""

    kappa: float
    central_charge: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.kappa <= 4.0:
            raise ValueError("kappa must lie in (0, 4]")
        c = (3 * self.kappa - 8) * (6 - self.kappa) / (2 * self.kappa)
        object.__setattr__(self, "central_charge", c)


def as_halfplane_curve(points, lift: float = 1e-12, close_tol: float = 0.0) -> Curve:
    """Sanitize raw points into a Curve: snap the base to R, lift interior
    points that sit numerically on or below R, drop repeated vertices.

    close_tol > 0 additionally prunes interior points within that distance
    of the final point (degenerately fine tails break later unzipping)."""
    p = np.asarray(points, dtype=complex).copy()
    p[0] = p[0].real
    scale = 1.0 + np.max(np.abs(p))
    if close_tol > 0 and len(p) > 3:
        near = np.abs(p[1:-1] - p[-1]) < close_tol
        keep = np.concatenate([[True], ~near, [True]])
        p = p[keep]
    inner = p[1:]
    low = inner.imag < lift * scale
    inner.imag[low] = lift * scale
    p[1:] = inner
    keep = np.concatenate([[True], np.abs(np.diff(p)) > 1e-15 * scale])
    return Curve(points=p[keep])


def resample_curve(curve: Curve, m: int) -> Curve:
    """Arclength resampling to ~m vertices with mild clustering toward both
    endpoints; endpoints are kept exactly."""
    p = curve.points
    if len(p) <= m:
        return curve
    s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(p)))])
    L = s[-1]
    u = np.linspace(0.0, 1.0, m)
    w = u - 0.5 * np.sin(2 * np.pi * u) / (2 * np.pi)
    st = w * L
    re = np.interp(st, s, p.real)
    im = np.interp(st, s, p.imag)
    q = re + 1j * im
    q[0], q[-1] = p[0], p[-1]
    return as_halfplane_curve(q)


# ---------------------------------------------------------------------------
# tilted-slit elementary maps
#
# A straight slit from 0 with opening angle pi*alpha, scale a > 0:
#   x_l = a*alpha, x_r = a*(1-alpha)
#   map_in  f(w) = (w + x_l)^(1-alpha) * (w - x_r)^alpha  : H -> H minus slit
#   tip     f(w*) = a * (1-alpha)^(1-alpha) * alpha^alpha * e^(i pi alpha),
#           w* = a*(1-2*alpha)
#   capacity increment dt = a^2 alpha (1-alpha) / 4 (Loewner time, hcap = 2dt)
#   driver increment delta = a*(1-2*alpha)


def slit_params_from_increment(delta: float, dt: float) -> tuple[float, float]:
    """(alpha, a) of the slit absorbing driver increment delta over time dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = delta / np.sqrt(dt)
    u = rho / np.sqrt(16.0 + rho * rho)
    alpha = 0.5 * (1.0 - u)
    a = delta / u if abs(u) > 1e-14 else 4.0 * np.sqrt(dt)
    return float(alpha), float(a)


def slit_params_from_target(zeta: complex) -> tuple[float, float, float, float]:
    """(alpha, a, delta, dt) of the slit from 0 with tip at zeta in H."""
    alpha = np.angle(zeta) / np.pi
    alpha = min(max(alpha, 1e-9), 1.0 - 1e-9)
    k = (1.0 - alpha) ** (1.0 - alpha) * alpha**alpha
    a = abs(zeta) / k
    delta = a * (1.0 - 2.0 * alpha)
    dt = a * a * alpha * (1.0 - alpha) / 4.0
    return float(alpha), float(a), float(delta), float(dt)


def slit_tip(alpha: float, a: float) -> complex:
    k = (1.0 - alpha) ** (1.0 - alpha) * alpha**alpha
    return a * k * np.exp(1j * np.pi * alpha)


def slit_map_in(w, alpha: float, a: float):
    """Closed-form map H -> H minus slit (based coordinates)."""
    w = np.asarray(w, dtype=complex)
    xl, xr = a * alpha, a * (1.0 - alpha)
    return np.exp((1.0 - alpha) * np.log(w + xl) + alpha * np.log(w - xr))


def _newton_run(wa, target, omega, alpha, a, xl, xr, tol, maxit):
    act = np.ones(len(omega), dtype=bool)
    scale = tol * (a + np.abs(wa))
    for _ in range(maxit):
        om = omega[act]
        L = (1.0 - alpha) * np.log(om + xl) + alpha * np.log(om - xr)
        dL = (1.0 - alpha) / (om + xl) + alpha / (om - xr)
        step = (L - target[act]) / dL
        mag = np.abs(step) + 1e-300
        cap = 0.5 * (np.abs(om) + a) + 1e-300
        step = np.where(mag > cap, step * (cap / mag), step)
        om = om - step
        om = np.where(om.imag < 0, om.real + 0j, om)
        omega[act] = om
        done = np.abs(step) < scale[act]
        idx = np.nonzero(act)[0]
        act[idx[done]] = False
        if not act.any():
            break
    return omega


def _slit_map_out_newton(w, alpha, a, tol, maxit):
    xl, xr = a * alpha, a * (1.0 - alpha)
    wa = np.atleast_1d(np.asarray(w, dtype=complex))
    target = np.log(wa)
    wstar = a * (1.0 - 2.0 * alpha)
    tip = slit_tip(alpha, a)
    # curvature of the fold at the tip: f(om) ~ tip + C (om - w*)^2
    C = -tip / (2.0 * a * a * alpha * (1.0 - alpha))

    def residual(omega):
        return np.abs(slit_map_in(omega, alpha, a) - wa)

    omega = _newton_run(wa, target, wa.copy(), alpha, a, xl, xr, tol, maxit)
    res = residual(omega)
    scale = tol * 100 * (a + np.abs(wa))
    bad = res > scale
    if np.any(bad):
        # quadratic init near the fold tip, then the generic ones
        root = np.sqrt((wa[bad] - tip) / C)
        root = np.where(root.imag >= 0, root, -root)
        for init in (wstar + root, wa[bad] + 1j * a, np.full(bad.sum(), wstar + 0.5j * a)):
            om2 = _newton_run(wa[bad], target[bad], np.asarray(init, complex).copy(),
                              alpha, a, xl, xr, tol, maxit)
            r2 = residual(om2) if len(om2) == len(wa) else np.abs(
                slit_map_in(om2, alpha, a) - wa[bad])
            improve = r2 < res[bad]
            omega[bad] = np.where(improve, om2, omega[bad])
            res[bad] = np.where(improve, r2, res[bad])
            if not np.any(res > scale):
                break
    if np.any(res > 1e-6 * (a + np.abs(wa))):
        i = int(np.argmax(res))
        raise DegenerateStepError(i, f"slit map inversion failed at w={wa[i]}")
    return omega


def slit_map_out(w, alpha: float, a: float, cfg: Numerics = DEFAULT):
    """Inverse of :func:`slit_map_in` (removes the slit), via guarded Newton."""
    w = np.asarray(w, dtype=complex)
    scalar = w.ndim == 0
    out = _slit_map_out_newton(w, alpha, a, cfg.newton_tol, cfg.newton_maxit)
    return out[0] if scalar else out.reshape(w.shape)


# half-disc closing map, used when a curve returns to the real axis: the
# remaining hull is approximated by the half-disc on its base diameter


def halfdisc_map_out(z, c: float, r: float):
    z = np.asarray(z, dtype=complex)
    u = z - c
    return c + u + (r * r) / u


def halfdisc_map_in(w, c: float, r: float):
    w = np.asarray(w, dtype=complex)
    v = w - c
    disc = np.sqrt(v * v - 4.0 * r * r)
    u1 = 0.5 * (v + disc)
    u2 = 0.5 * (v - disc)
    u = np.where(np.abs(u1) >= np.abs(u2), u1, u2)
    u = np.where(u.imag < 0, (r * r) / u, u)  # keep the branch outside the half-disc
    return c + u


# ---------------------------------------------------------------------------
# forward evolution


def end_refined_grid(T: float, steps: int, q: float = 0.985, eps: float = 1e-9) -> np.ndarray:
    """Uniform grid refined geometrically toward t = T, for drivers with a
    terminal square-root blowup (chords completing at a boundary point)."""
    n0 = max(2, steps // 2)
    head = np.linspace(0.0, T / 2, n0, endpoint=False)
    tail = [T / 2]
    while T - tail[-1] > eps * T:
        tail.append(T - (T - tail[-1]) * q)
    return np.concatenate([head, tail, [T]])


def evolve_forward(driver: DrivingFunction, steps_per_unit: int, grading: float = 1.0,
                   cfg: Numerics = DEFAULT, grid: np.ndarray | None = None) -> Curve:
    """Trace generated by the driver, by composing tilted-slit maps.

    ``steps_per_unit`` is the number of elementary steps per unit of capacity
    time; ``grading`` > 1 refines the grid near t = 0 where the curve meets
    the real line.  An explicit strictly increasing ``grid`` (starting at 0,
    ending at the driver's final time) overrides both.
    """
    if steps_per_unit < 1:
        raise ValueError("steps_per_unit must be >= 1")
    T = float(driver.times[-1])
    if grid is None:
        n = max(1, int(round(steps_per_unit * T)))
        s = np.linspace(0.0, 1.0, n + 1)
        grid = T * s**grading if grading != 1.0 else T * s
    else:
        grid = np.asarray(grid, dtype=float)
        n = len(grid) - 1
    W = driver(grid)
    alphas = np.empty(n)
    scales = np.empty(n)
    tips = np.empty(n, dtype=complex)
    for k in range(n):
        alpha, a = slit_params_from_increment(W[k + 1] - W[k], grid[k + 1] - grid[k])
        alphas[k], scales[k] = alpha, a
        tips[k] = W[k] + slit_tip(alpha, a)
    # gamma after step j equals f_0 o ... o f_{j-1}(tips[j]), where f_k is the
    # map attaching slit k (based at W[k]) and tips[j] already lives in the
    # post-(j-1) coordinates; accumulate from the last step backwards
    pts = np.array([tips[n - 1]], dtype=complex)
    for k in range(n - 2, -1, -1):
        rel = pts - W[k]
        pts = W[k] + slit_map_in(rel, alphas[k], scales[k])
        pts = np.concatenate([[tips[k]], pts])
    if np.any(pts.imag < -cfg.eps_geom):
        bad = int(np.argmin(pts.imag))
        raise DegenerateStepError(bad, "map evaluation left the half-plane")
    pts.imag[pts.imag <= 0] = 1e-300
    pts = np.concatenate([[W[0] + 0j], pts])
    return Curve(points=pts, capacity_times=grid)


# ---------------------------------------------------------------------------
# driving-function recovery (zipper)


@dataclass
class ZipperStep:
    kind: str  # "slit" | "halfdisc"
    base: float  # driver value before the step (slit) / center (halfdisc)
    alpha: float = 0.5
    a: float = 0.0
    r: float = 0.0
    dt: float = 0.0
    w_new: float = 0.0  # driver value after the step

    def map_out(self, z, cfg: Numerics = DEFAULT):
        if self.kind == "slit":
            return self.base + slit_map_out(np.asarray(z, complex) - self.base,
                                            self.alpha, self.a, cfg)
        return halfdisc_map_out(z, self.base, self.r)

    def map_in(self, w):
        if self.kind == "slit":
            return self.base + slit_map_in(np.asarray(w, complex) - self.base,
                                           self.alpha, self.a)
        return halfdisc_map_in(w, self.base, self.r)


def zipper_steps(curve: Curve, cfg: Numerics = DEFAULT) -> list[ZipperStep]:
    """Unzip the curve vertex by vertex; returns the elementary map sequence.

    The composition of ``map_out`` over the returned steps is the discrete
    mapping-out function of the curve's hull (hydrodynamically normalized).
    A final vertex on the real axis closes the hull with a half-disc step.
    """
    pts = np.asarray(curve.points, dtype=complex).copy()
    base = pts[0].real
    lift = cfg.eps_geom * 1e-3
    closes = abs(pts[-1].imag) <= lift * (1 + abs(pts[-1]))
    inner = pts[1:-1] if closes else pts[1:]
    # tie-break vertices that sit numerically on R
    low = inner.imag < lift
    if np.any(low):
        inner = inner.copy()
        inner.imag[low] = lift
    steps: list[ZipperStep] = []
    # the closing vertex rides along so its image is known when we close
    cur = np.concatenate([inner, [pts[-1].real + 0j]]) if closes else inner
    W = base
    for k in range(len(inner)):
        zeta = cur[0] - W
        if zeta.imag <= 0:
            raise NonSimpleCurveError(k + 1, "vertex image fell on or below the real line")
        alpha, a, delta, dt = slit_params_from_target(zeta)
        step = ZipperStep("slit", base=W, alpha=alpha, a=a, dt=dt, w_new=W + delta)
        W = W + delta
        rest = cur[1:]
        if len(rest):
            try:
                rest = step.base + slit_map_out(rest - step.base, alpha, a, cfg)
            except DegenerateStepError as e:
                raise NonSimpleCurveError(k + 1 + e.step, "unzipping failed") from e
            if np.any(rest.imag < -cfg.eps_geom):
                raise NonSimpleCurveError(k + 2 + int(np.argmin(rest.imag)),
                                          "image left the half-plane")
            rest = np.where(rest.imag < lift, rest.real + 1j * lift, rest)
        steps.append(step)
        cur = rest
    if closes:
        if len(cur):
            v = float(cur[0].real)
        else:
            v = float(pts[-1].real)
        lo, hi = min(W, v), max(W, v)
        c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
        if r > 0:
            steps.append(ZipperStep("halfdisc", base=c, r=r, dt=r * r / 2.0, w_new=c))
    return steps


def compute_driving(curve: Curve, cfg: Numerics = DEFAULT) -> DrivingFunction:
    """Driving function of a simple curve, in capacity time, via the zipper.

    The curve is translated so its base sits at 0 (drivers start at 0);
    ``evolve_forward`` of the result reproduces the translated curve.
    """
    base = curve.points[0].real
    shifted = Curve(points=curve.points - base)
    steps = zipper_steps(shifted, cfg)
    times = np.concatenate([[0.0], np.cumsum([s.dt for s in steps])])
    values = np.concatenate([[0.0], [s.w_new for s in steps]])
    # guard against zero-length steps from repeated vertices
    keep = np.concatenate([[True], np.diff(times) > 0])
    return DrivingFunction(times=times[keep], values=values[keep])


def half_plane_capacity(curve: Curve, cfg: Numerics = DEFAULT) -> float:
    """hcap of the hull generated by the curve (= 2 * total capacity time)."""
    if curve.capacity_times is not None:
        return 2.0 * float(curve.capacity_times[-1])
    base = curve.points[0].real
    steps = zipper_steps(Curve(points=curve.points - base), cfg)
    return 2.0 * float(sum(s.dt for s in steps))


# ---------------------------------------------------------------------------
# energies


def dirichlet_energy(driver: DrivingFunction, up_to: float | None = None) -> float:
    """(1/2) int |dW/dt|^2 dt of the piecewise-linear interpolant."""
    t, w = driver.times, driver.values
    if up_to is not None:
        if up_to > t[-1] + 1e-12:
            raise ValueError("up_to exceeds the driver's time range")
        up_to = min(up_to, t[-1])
    dt = np.diff(t)
    dw = np.diff(w)
    if up_to is None:
        return 0.5 * float(np.sum(dw * dw / dt))
    full = t[1:] <= up_to
    e = 0.5 * float(np.sum((dw * dw / dt)[full]))
    k = int(np.sum(full))
    if k < len(dt) and up_to > t[k]:
        frac = (up_to - t[k]) / dt[k]
        e += 0.5 * (dw[k] * dw[k] / dt[k]) * frac
    return e


def chord_energy(curve: Curve, domain, x: float, y, cfg: Numerics = DEFAULT,
                 with_info: bool = False):
    """Loewner energy of a chord of (domain; x, y).

    Maps the marked domain to (H; 0, infinity), recovers the image driver and
    returns its Dirichlet energy.  Chords with infinite total capacity are
    truncated at cfg.t_max (flagged in the info dict).
    """
    from . import conformal  # deferred: conformal builds on this module

    chain = conformal.uniformize_to_zero_infty(domain, x, y, cfg)
    pts = np.asarray(curve.points, dtype=complex)
    # drop endpoints that coincide with the marked points (they map to 0/inf)
    if abs(pts[0] - x) < cfg.eps_geom:
        pts = pts[1:]
    if not np.isinf(np.real(y)) and abs(pts[-1] - y) < cfg.eps_geom:
        pts = pts[:-1]
    img = chain.map_points(pts)
    img = img[np.isfinite(img)]
    img = np.concatenate([[0.0 + 0j], img])
    driver = compute_driving(as_halfplane_curve(img), cfg)
    T = float(driver.times[-1])
    truncated = False
    if T > cfg.t_max:
        truncated = True
        energy = dirichlet_energy(driver, up_to=cfg.t_max)
    else:
        energy = dirichlet_energy(driver)
    if with_info:
        return energy, {"truncated": truncated, "capacity": 2 * min(T, cfg.t_max)}
    return energy

"""Loewner potential, minimal potential, multichordal energy, loop-measure
term, semiclassical PDE residuals, and the minimizer's Loewner flow.

The potential of a multichord gamma = (gamma_1, ..., gamma_n) in (D; x) is

    H = (1/12) sum_j I_D(gamma_j) + m_D(gamma) - (1/4) sum_j log P_{D; a_j, b_j}

with I the chordal Loewner energy, m_D the mass of Brownian loops hitting at
least two chords (counted with multiplicity), and P the Poisson excursion
kernel.  All logs are natural; potentials are reported in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Numerics
from . import loewner as lw
from . import conformal as cf
from . import multichord as mch
from ._geometry import polylines_intersect


@dataclass(frozen=True)
class PotentialReport:
    H: float
    energy_terms: np.ndarray  # I_D(gamma_j) / 12
    loop_term: float
    poisson_terms: np.ndarray  # -(1/4) log P_{D; a_j, b_j}
    method: str
    stderr: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "energy_terms", np.asarray(self.energy_terms, float))
        object.__setattr__(self, "poisson_terms", np.asarray(self.poisson_terms, float))

    def as_dict(self):
        return {
            "H": self.H,
            "terms": {
                "energy": self.energy_terms.tolist(),
                "loop": self.loop_term,
                "poisson": self.poisson_terms.tolist(),
            },
            "method": self.method,
            "stderr": self.stderr,
        }


def _chord_energy_in(mc: mch.Multichord, j: int, domain, cfg: Numerics) -> float:
    a, b = mc.endpoints(j)
    return lw.chord_energy(mc.chords[j], domain, a, b, cfg)


def _log_poisson(domain, a, b, cfg) -> float:
    return float(np.log(cf.poisson_kernel(domain, a, b, cfg)))


# ---------------------------------------------------------------------------
# loop-measure term


def loop_term_deterministic(mc: mch.Multichord, cfg: Numerics = DEFAULT,
                            order=None) -> float:
    """m_D by peeling chords through the conformal restriction identity:

        B_D(D - Dhat_j, gamma_j)
            = [I_{Dhat_j} - I_D](gamma_j)/12 - (1/4)[log P_{Dhat_j} - log P_D]

    where Dhat_j is the component of D minus the *remaining* chords that
    contains gamma_j; the result is independent of the peeling order."""
    if mc.domain.kind != "half_plane":
        raise NotImplementedError("deterministic loop term implemented for H")
    n = mc.n
    if n <= 1:
        return 0.0
    idx = list(order) if order is not None else list(range(n))
    if sorted(idx) != list(range(n)):
        raise ValueError("order must be a permutation of the chord indices")
    active = list(idx)
    total = 0.0
    while len(active) >= 2:
        j = active[0]
        rest = active[1:]
        a, b = mc.endpoints(j)
        others = [mc.chords[i] for i in rest]
        anchor = mc.chords[j].points[len(mc.chords[j].points) // 2]
        sub = cf.slit_domain(others, anchor=anchor)
        I_sub = _chord_energy_in(mc, j, sub, cfg)
        I_full = _chord_energy_in(mc, j, cf.HALF_PLANE, cfg)
        lp_sub = _log_poisson(sub, a, b, cfg)
        lp_full = float(np.log(1.0 / (b - a) ** 2))
        total += (I_sub - I_full) / 12.0 - 0.25 * (lp_sub - lp_full)
        active = rest
    return total


def loop_term_mc(mc: mch.Multichord, mesh: float = 0.05, t_cutoff: float = 0.02,
                 n_samples: int = 20000, seed: int = 0,
                 cfg: Numerics = DEFAULT) -> tuple[float, float]:
    """Monte Carlo estimate of m_D: sample Brownian loops (bridges rooted in
    a box, durations from dt/t on [t_cutoff, T1], killed outside H) and
    average max(#chords hit - 1, 0) against the loop measure.

    Small loops below the cutoff cannot hit two disjoint chords, so the
    cutoff bias vanishes as the chords separate; box and duration truncation
    are recorded in the estimate's docstring contract.  Returns (estimate,
    standard error)."""
    if mc.n <= 1:
        return 0.0, 0.0
    pts_all = np.concatenate([c.points for c in mc.chords])
    re_lo, re_hi = pts_all.real.min(), pts_all.real.max()
    im_hi = pts_all.imag.max()
    diam = max(re_hi - re_lo, im_hi)
    T1 = max((0.75 * diam) ** 2, 4.0 * t_cutoff)
    pad = 1.0 * diam
    box = (re_lo - pad, re_hi + pad, 0.0, im_hi + pad)
    area = (box[1] - box[0]) * (box[3] - box[2])
    logratio = np.log(T1 / t_cutoff)

    # rasterize chords to lattice cells of the given spacing
    def cells(points):
        dense = []
        for p, q in zip(points[:-1], points[1:]):
            k = max(2, int(np.ceil(abs(q - p) / (0.5 * mesh))) + 1)
            dense.append(p + (q - p) * np.linspace(0, 1, k))
        d = np.concatenate(dense)
        ia = np.round(d.real / mesh).astype(np.int64)
        ib = np.round(d.imag / mesh).astype(np.int64)
        return np.unique(ia * (2**31) + ib)

    chord_cells = [cells(c.points) for c in mc.chords]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    vals = np.zeros(n_samples)
    u = rng.random(n_samples)
    taus = t_cutoff * np.exp(u * logratio)
    roots = (box[0] + (box[1] - box[0]) * rng.random(n_samples)
             + 1j * (box[2] + (box[3] - box[2]) * rng.random(n_samples)))
    for i in range(n_samples):
        tau = taus[i]
        m = int(min(3000, max(24, np.ceil(tau / (mesh * mesh / 4.0)))))
        h = tau / m
        # Brownian bridge at speed 2 (variance 2h per coordinate per step)
        steps = rng.normal(0.0, np.sqrt(2.0 * h), size=(m, 2))
        w = np.cumsum(steps, axis=0)
        tgrid = np.arange(1, m + 1) * h
        bx = w[:, 0] - (tgrid / tau) * w[-1, 0]
        by = w[:, 1] - (tgrid / tau) * w[-1, 1]
        zx = roots[i].real + bx
        zy = roots[i].imag + by
        if np.min(zy) <= 0.0:
            continue  # loop leaves H: killed
        ia = np.round(zx / mesh).astype(np.int64)
        ib = np.round(zy / mesh).astype(np.int64)
        keys = np.unique(ia * (2**31) + ib)
        nhit = sum(1 for cc in chord_cells if np.any(np.isin(keys, cc, assume_unique=True)))
        if nhit >= 2:
            vals[i] = (nhit - 1) * area * logratio / (4.0 * np.pi * tau)
    est = float(np.mean(vals))
    err = float(np.std(vals, ddof=1) / np.sqrt(n_samples))
    return est, err


# ---------------------------------------------------------------------------
# potential / minimal potential / energy


def loewner_potential(mc: mch.Multichord, method: str = "deterministic",
                      cfg: Numerics = DEFAULT, **mc_kwargs) -> PotentialReport:
    """Loewner potential H of a multichord, with the loop term computed
    either deterministically (restriction identity) or by Monte Carlo."""
    n = mc.n
    D = mc.domain
    energy = np.zeros(n)
    poisson = np.zeros(n)
    for j in range(n):
        a, b = mc.endpoints(j)
        energy[j] = _chord_energy_in(mc, j, D, cfg) / 12.0
        if D.kind == "half_plane":
            poisson[j] = -0.25 * float(np.log(1.0 / (b - a) ** 2))
        else:
            poisson[j] = -0.25 * _log_poisson(D, a, b, cfg)
    stderr = None
    if method == "deterministic":
        loop = loop_term_deterministic(mc, cfg) if n > 1 else 0.0
    elif method == "monte_carlo":
        loop, stderr = loop_term_mc(mc, cfg=cfg, **mc_kwargs)
    else:
        raise ValueError("method must be 'deterministic' or 'monte_carlo'")
    H = float(np.sum(energy) + loop + np.sum(poisson))
    return PotentialReport(H=H, energy_terms=energy, loop_term=loop,
                           poisson_terms=poisson, method=method, stderr=stderr)


def _minimal(x, alpha, cfg: Numerics = DEFAULT, init=None, samples=None):
    mc = mch.geodesic_multichord(x, alpha, cfg=cfg, init=init, samples=samples)
    rep = loewner_potential(mc, "deterministic", cfg)
    return rep.H, mc


def minimal_potential(x, alpha, cfg: Numerics = DEFAULT, certify: bool = False,
                      n_perturbations: int = 5, seed: int = 7) -> float:
    """M(x, alpha): potential of the geodesic multichord.

    With certify=True, checks that H increases under random admissible
    perturbations of the minimizer."""
    M, mc = _minimal(x, alpha, cfg)
    if certify:
        rng = np.random.default_rng(seed)
        for _ in range(n_perturbations):
            pert = perturb_multichord(mc, eps=0.05 + 0.1 * rng.random(), seed=int(rng.integers(1 << 31)))
            Hp = loewner_potential(pert, "deterministic", cfg).H
            if Hp < M - 1e-6:
                raise mch.MultichordError(
                    f"perturbation lowered the potential: {Hp} < {M}")
    return M


def perturb_multichord(mc: mch.Multichord, eps: float = 0.1, seed: int = 0,
                       j: int | None = None) -> mch.Multichord:
    """Admissible perturbation: push one chord by a smooth vertical bump."""
    rng = np.random.default_rng(seed)
    j = int(rng.integers(mc.n)) if j is None else j
    chords = list(mc.chords)
    pts = chords[j].points.copy()
    s = np.linspace(0.0, 1.0, len(pts))
    k = 1 + int(rng.integers(2))
    bump = np.sin(np.pi * k * s) * eps
    pts = pts + 1j * np.abs(bump) + 0.3 * bump * 1.0
    pts[0] = chords[j].points[0]
    pts[-1] = chords[j].points[-1]
    cand = lw.as_halfplane_curve(pts)
    for i, o in enumerate(chords):
        if i != j and polylines_intersect(cand.points[1:-1], o.points[1:-1]):
            return perturb_multichord(mc, eps=0.5 * eps, seed=seed + 1, j=j)
    chords[j] = cand
    return mch.Multichord(tuple(chords), mc.boundary_points, mc.pattern, mc.domain)


def multichord_energy(mc: mch.Multichord, cfg: Numerics = DEFAULT) -> float:
    """I^alpha = 12 (H(mc) - M(x, alpha)) >= 0; zero exactly at the geodesic
    multichord."""
    H = loewner_potential(mc, "deterministic", cfg).H
    M = minimal_potential(mc.boundary_points, mc.pattern, cfg)
    return 12.0 * (H - M)


# ---------------------------------------------------------------------------
# semiclassical PDE residual


def _grad_U(x, alpha, h, cfg: Numerics, init=None):
    """Central-difference gradient of U = 12 M, reusing the central minimizer
    as warm start for every perturbed solve."""
    x = np.asarray(x, dtype=float)
    _, mc0 = _minimal(x, alpha, cfg, init=init)
    g = np.zeros(len(x))
    for i in range(len(x)):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        Up = 12.0 * _minimal(xp, alpha, cfg, init=mc0)[0]
        Um = 12.0 * _minimal(xm, alpha, cfg, init=mc0)[0]
        g[i] = (Up - Um) / (2.0 * h)
    return g, mc0


def pde_residual(x, alpha, j: int, h_fd: float, cfg: Numerics = DEFAULT,
                 grad: np.ndarray | None = None) -> float:
    """Null-state residual at marked point j (1-based):

        (1/2) (d_j U)^2 - sum_{i!=j} 2/(x_i - x_j) d_i U
            - sum_{i!=j} 6/(x_i - x_j)^2,   U = 12 M.
    """
    x = np.asarray(x, dtype=float)
    gaps = np.diff(np.sort(x))
    if h_fd >= 0.5 * gaps.min():
        raise ValueError("h_fd must be below half the minimal gap")
    if grad is None:
        grad, _ = _grad_U(x, alpha, h_fd, cfg)
    xj = x[j - 1]
    others = [i for i in range(len(x)) if i != j - 1]
    res = 0.5 * grad[j - 1] ** 2
    res -= sum(2.0 / (x[i] - xj) * grad[i] for i in others)
    res -= sum(6.0 / (x[i] - xj) ** 2 for i in others)
    return float(res)


def pde_residuals_all(x, alpha, h_fd: float, cfg: Numerics = DEFAULT) -> np.ndarray:
    grad, _ = _grad_U(x, alpha, h_fd, cfg)
    return np.array([pde_residual(x, alpha, j, h_fd, cfg, grad=grad)
                     for j in range(1, len(x) + 1)])


# ---------------------------------------------------------------------------
# minimizer flow


@dataclass(frozen=True)
class FlowState:
    t: float
    W: float
    V: np.ndarray
    curve_so_far: lw.Curve | None = None

    def __post_init__(self):
        object.__setattr__(self, "V", np.asarray(self.V, float))


@dataclass
class FlowResult:
    states: list
    lifetime_reached: bool
    driver: lw.DrivingFunction
    trace: lw.Curve


def _dU_component(x, alpha, idx0: int, h: float, cfg: Numerics, warm=None,
                  samples=None):
    """One component of grad U = 12 grad M; closed form for n = 1 where
    M(x1, x2) = (1/2) log |x2 - x1|."""
    x = np.asarray(x, dtype=float)
    if len(x) == 2:
        other = 1 - idx0
        return 6.0 / (x[idx0] - x[other]), warm
    xp = x.copy(); xp[idx0] += h
    xm = x.copy(); xm[idx0] -= h
    Up, mcp = _minimal(xp, alpha, cfg, init=warm, samples=samples)
    Um, _ = _minimal(xm, alpha, cfg, init=warm, samples=samples)
    return 12.0 * (Up - Um) / (2.0 * h), mcp


def minimizer_flow(x, alpha, j: int, dt: float, cfg: Numerics = DEFAULT,
                   t_end: float | None = None, grad_h: float | None = None,
                   keep_every: int = 1, samples: int | None = None) -> FlowResult:
    """Loewner flow of the minimizer's chord j (1-based pair index):

        dW/dt = -d_{a_j} U(V^1, ..., W, ..., V^{2n}),
        dV^i/dt = 2 / (V^i - W).

    Integrated by classical RK4 with adaptive step halving near the
    collision; the gradient of U is re-evaluated at the evolved points
    (closed form for n = 1, central differences otherwise).
    """
    x = np.asarray(x, dtype=float)
    alpha = alpha if isinstance(alpha, mch.LinkPattern) else mch.LinkPattern(tuple(alpha))
    a_j = alpha.pairs[j - 1][0]
    ia = a_j - 1
    y0 = x.copy()
    gaps = np.diff(np.sort(x))
    h = grad_h if grad_h is not None else 1e-3 * gaps.min()
    warm = {"mc": None}

    def rhs(y):
        dU, mc = _dU_component(y, alpha, ia, h, cfg, warm["mc"], samples=samples)
        if mc is not None:
            warm["mc"] = mc
        diff = y - y[ia]
        diff[ia] = 1.0
        dy = 2.0 / diff
        dy[ia] = -dU
        return dy

    t, y = 0.0, y0.copy()
    times, drivers, states = [0.0], [y0[ia]], []
    others_idx = [i for i in range(len(x)) if i != ia]
    states.append(FlowState(0.0, y0[ia], y0[others_idx]))
    lifetime = False
    t_cap = t_end if t_end is not None else np.inf
    # finite-difference gradients need room between W and the marked points
    gap_stop = 1e-3 * gaps.min() if len(x) == 2 else 12.0 * h
    while t < t_cap - 1e-15:
        gap = np.min(np.abs(y[others_idx] - y[ia]))
        if gap <= gap_stop:
            lifetime = True
            break
        step = min(dt, 0.02 * gap * gap, t_cap - t)
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * step * k1)
        k3 = rhs(y + 0.5 * step * k2)
        k4 = rhs(y + step * k3)
        y = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += step
        times.append(t)
        drivers.append(y[ia])
        states.append(FlowState(t, y[ia], y[others_idx]))
        if not np.all(np.isfinite(y)):
            lifetime = True
            break
    drv = lw.DrivingFunction(np.asarray(times), np.asarray(drivers) - drivers[0])
    T = float(times[-1])
    if lifetime:
        grid = lw.end_refined_grid(T, 2400)
        trace_curve = lw.evolve_forward(drv, 1, cfg=cfg, grid=grid)
    else:
        spu = int(np.clip(2400.0 / max(T, 1e-6), 200, 40000))
        trace_curve = lw.evolve_forward(drv, steps_per_unit=spu, cfg=cfg)
    pts = trace_curve.points + drivers[0]
    tgrid = trace_curve.capacity_times
    if lifetime:
        # the chord completes at its far endpoint
        b_j = alpha.pairs[j - 1][1]
        pts = np.concatenate([pts, [complex(x[b_j - 1])]])
        tgrid = np.concatenate([tgrid, [tgrid[-1]]])
    shifted = lw.Curve(points=pts, capacity_times=tgrid)
    out_states = []
    for k, st in enumerate(states):
        if k % keep_every == 0 or k == len(states) - 1:
            tk = st.t
            sel = shifted.capacity_times <= tk + 1e-12
            pts = shifted.points[np.concatenate([[True], sel[1:]])] if k else shifted.points[:1]
            cur = lw.Curve(points=pts) if len(pts) >= 2 else None
            out_states.append(FlowState(st.t, st.W, st.V, cur))
    return FlowResult(states=out_states, lifetime_reached=lifetime,
                      driver=drv, trace=shifted)


# ---------------------------------------------------------------------------
# partition function probe


def partition_limit_probe(x, alpha, kappas, n_samples: int = 40, seed: int = 0,
                          cfg: Numerics = DEFAULT, sle_T: float = 12.0,
                          sle_dt: float = 2e-3,
                          loop_mc=(0.06, 0.02, 4000)) -> list[dict]:
    """Estimate kappa * log Z_alpha across kappas and report the trend toward
    -12 M (no convergence rate is asserted; desk-scale trend only).

    Z_alpha is the normalization of the multichordal SLE reweighting
    exp(c(kappa)/2 * m_D) over independent chordal SLEs; the full partition
    function multiplies in the Poisson-kernel power (6-kappa)/(2 kappa).
    """
    from . import mc_sle

    x = np.asarray(x, dtype=float)
    alpha = alpha if isinstance(alpha, mch.LinkPattern) else mch.LinkPattern(tuple(alpha))
    n = alpha.n
    M = minimal_potential(x, alpha, cfg)
    logP = [float(np.log(1.0 / (x[b - 1] - x[a - 1]) ** 2)) for a, b in alpha.pairs]
    rows = []
    mesh, tcut, nloop = loop_mc
    for kappa in kappas:
        if n == 1:
            klogz = (6.0 - kappa) / 2.0 * sum(logP)
            rows.append({"kappa": kappa, "k_log_Z": klogz, "target": -12.0 * M,
                         "n_eff": None, "stderr": None})
            continue
        params = lw.SLEParams(kappa=kappa)
        c = params.central_charge
        ss = np.random.SeedSequence([seed, int(kappa * 1e6)])
        weights = np.zeros(n_samples)
        for i, child in enumerate(ss.spawn(n_samples)):
            rngs = child.spawn(n + 1)
            chords = []
            for jj, (a, b) in enumerate(alpha.pairs):
                crv = mc_sle.sample_chord_in(x[a - 1], x[b - 1], params,
                                             seed_seq=rngs[jj], T=sle_T, dt=sle_dt, cfg=cfg)
                chords.append(crv)
            disjoint = not any(
                polylines_intersect(chords[p].points[1:-1], chords[q].points[1:-1])
                for p in range(n) for q in range(p + 1, n))
            if not disjoint:
                weights[i] = 0.0
                continue
            sample_mc = mch.Multichord(tuple(chords), x, alpha)
            m_hat, _ = loop_term_mc(sample_mc, mesh=mesh, t_cutoff=tcut,
                                    n_samples=nloop,
                                    seed=int(rngs[n].generate_state(1)[0]), cfg=cfg)
            weights[i] = np.exp(0.5 * c * m_hat)
        zbar = float(np.mean(weights))
        sz = float(np.std(weights, ddof=1) / np.sqrt(n_samples))
        klogz = (6.0 - kappa) / 2.0 * sum(logP) + kappa * np.log(max(zbar, 1e-300))
        rows.append({"kappa": kappa, "k_log_Z": float(klogz), "target": -12.0 * M,
                     "n_eff": float(np.sum(weights > 0)),
                     "stderr": float(kappa * sz / max(zbar, 1e-300))})
    return rows

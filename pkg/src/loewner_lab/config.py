"""Shared numerical knobs.

All geometric comparisons in the package use a single ``eps_geom`` (curve
units) and energy comparisons use ``eps_en``.  Everything here is plain data;
functions take an optional ``Numerics`` and fall back to ``DEFAULT``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Numerics:
    # geometric tolerance, in curve units
    eps_geom: float = 1e-3
    # energy tolerance (Dirichlet energy of drivers, nats for potentials)
    eps_en: float = 1e-2
    # capacity at which chords heading to an unbounded marked point are cut
    t_max: float = 25.0
    # default number of sample points on a constructed geodesic chord
    geodesic_samples: int = 281
    # one-sided Richardson steps for boundary derivatives
    deriv_steps: tuple[float, float, float] = (1e-3, 5e-4, 2.5e-4)
    # Newton controls for slit-map inversion
    newton_tol: float = 1e-13
    newton_maxit: int = 60
    # fixed-point controls for geodesic multichords
    sweep_tol: float = 5e-4
    max_sweeps: int = 60
    # parallelism hint only; results never depend on it
    threads: int = int(os.environ.get("LOEWNER_LAB_THREADS", "1") or 1)

    def with_(self, **kw) -> "Numerics":
        return replace(self, **kw)


DEFAULT = Numerics()

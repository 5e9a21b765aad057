"""Spatial operator of the reduced front equation, with and without the speed cutoff.

The operator evaluated here is

    rhs = s * M_central  -  |s| * LF_dissipation  +  A * p_last * f(x)

where s = 1 - d*kappa (clamped at 0 when the cutoff is on), kappa is the
conservative face-flux curvature of fields.curvature_kappa, and the
first-order magnitude sqrt(p_last^2 + |p + Dv|^2) is discretized with a
local Lax-Friedrichs splitting: central value minus per-axis dissipation
alpha_i * (v(x+h e_i) - 2 v(x) + v(x-h e_i)) / (2h), alpha_i a local bound
on the Hamiltonian slope (<= 1 per axis).

The dissipation coefficient is |s|, which equals the clamped speed whenever
the cutoff is on; using the magnitude keeps the splitting dissipative on the
non-cutoff branch where 1 - d*kappa can be negative.  Where the clamped
speed vanishes the operator degenerates to the pure drift term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Direction, ScalarField, curvature_kappa
from .profiles import ShearProfile


@dataclass(frozen=True)
class PhysParams:
    d: float          # curvature coefficient (Markstein number), >= 0
    A: float          # flow intensity, >= 0
    cutoff: bool      # clamp the local speed at zero

    def __post_init__(self):
        if self.d < 0.0:
            raise ValueError("d must be >= 0")
        if self.A < 0.0:
            raise ValueError("A must be >= 0")


@dataclass
class OperatorOutput:
    rhs: ScalarField
    speed: ScalarField   # s = 1 - d*kappa, after the clamp if cutoff
    kappa: ScalarField


def _one_sided(vals: np.ndarray, axis: int, h: float):
    fwd = (np.roll(vals, -1, axis=axis) - vals) / h
    bwd = (vals - np.roll(vals, 1, axis=axis)) / h
    return fwd, bwd


def g_operator(v: ScalarField, P: Direction, params: PhysParams, f: ShearProfile) -> OperatorOutput:
    """Evaluate the spatial operator on a field (reference implementation).

    Requires p_last != 0.  For p_last = 0 the evolution has the closed-form
    solution v = -|P| t and callers must take that path instead.
    """
    if P.p_last == 0.0:
        raise ValueError("p_last = 0: use the trivial solution path, rhs = |P|")
    if f.grid.shape != v.grid.shape:
        raise ValueError("profile and field live on different grids")
    n, h = v.grid.n, v.grid.h
    vals = v.values
    pl2 = P.p_last ** 2

    kappa = curvature_kappa(v, P)
    speed = 1.0 - params.d * kappa.values
    if params.cutoff:
        speed = np.maximum(speed, 0.0)

    central = [(np.roll(vals, -1, axis=i) - np.roll(vals, 1, axis=i)) / (2.0 * h)
               for i in range(n)]
    mag = np.sqrt(pl2 + sum((P.p[i] + central[i]) ** 2 for i in range(n)))

    diss = np.zeros(v.grid.shape)
    for i in range(n):
        fwd, bwd = _one_sided(vals, i, h)
        m = np.maximum(np.abs(P.p[i] + fwd), np.abs(P.p[i] + bwd))
        alpha = m / np.sqrt(pl2 + m * m)
        diss += alpha * (np.roll(vals, -1, axis=i) - 2.0 * vals + np.roll(vals, 1, axis=i)) / (2.0 * h)

    rhs = speed * mag - np.abs(speed) * diss + params.A * P.p_last * f.values
    return OperatorOutput(
        rhs=ScalarField(v.grid, rhs),
        speed=ScalarField(v.grid, speed),
        kappa=kappa,
    )


def stable_dt(v: ScalarField, P: Direction, params: PhysParams, f: ShearProfile) -> float:
    """Explicit-marching time step: half the parabolic/CFL limit.

    dt = 0.5 * min( h^2 / (4 d n (1 + |p+Dv|^2_max / p_last^2)),
                    h / (2 n s_max (1 + |p| + |Dv|_max)) ),
    with the parabolic constraint dropped when d = 0.
    """
    if P.p_last == 0.0:
        raise ValueError("p_last = 0: use the trivial solution path")
    n, h = v.grid.n, v.grid.h
    vals = v.values
    central = [(np.roll(vals, -1, axis=i) - np.roll(vals, 1, axis=i)) / (2.0 * h)
               for i in range(n)]
    q2_max = float(max(np.max(sum((P.p[i] + central[i]) ** 2 for i in range(n))), 0.0))
    dv_max = float(np.sqrt(np.max(sum(c ** 2 for c in central))))
    p_norm = float(np.sqrt(sum(c * c for c in P.p)))

    kappa = curvature_kappa(v, P)
    speed = 1.0 - params.d * kappa.values
    if params.cutoff:
        speed = np.maximum(speed, 0.0)
    s_max = float(np.max(np.abs(speed)))
    s_max = max(s_max, 1e-12)

    dt_hyp = h / (2.0 * n * s_max * (1.0 + p_norm + dv_max))
    if params.d > 0.0:
        dt_par = h * h / (4.0 * params.d * n * (1.0 + q2_max / P.p_last ** 2))
        return 0.5 * min(dt_par, dt_hyp)
    return 0.5 * dt_hyp

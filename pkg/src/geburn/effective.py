"""Effective-value extraction: vanishing-discount and long-time routes.

The discounted route solves the stationary problem along a decreasing
discount schedule, warm-starting each solve from the previous one, and
extrapolates the per-discount means of -lam*v linearly in lam.  The
long-time route marches the initial-value problem and reads the mean slope
-v/T.  Both report a uniformity figure (the oscillation of the scaled
field) and a homogenization verdict: uniformity below a calibrated
threshold and shrinking across the last schedule points.  The verdict is a
finite-resolution heuristic, not a proof; near the bifurcation it can read
either way and every report carries the raw series.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import config as cfg
from .fields import Direction, ScalarField, TorusGrid, oscillation
from .operators import PhysParams, g_operator
from .profiles import ShearProfile, driven_force, _finalize
from .solvers import (DiscountedSolution, SolverDivergence, evolve,
                      solve_discounted, _resample_periodic_1d)


@dataclass
class EffectiveEstimate:
    value: float
    method: str                     # discount-extrapolated | long-time-slope | inviscid-quadrature
    error_bar: float
    uniformity: float
    homogenized: bool
    valid: bool
    grid_N: int
    schedule: Optional[tuple] = None
    horizon: Optional[float] = None
    means: list = field(default_factory=list)
    oscillations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    corrector_residual: Optional[float] = None
    failure: Optional[str] = None
    final_solution: Optional[DiscountedSolution] = None

    def report_dict(self) -> dict:
        return {
            "method": self.method,
            "value": self.value,
            "error_bar": self.error_bar,
            "uniformity": self.uniformity,
            "homogenized": self.homogenized,
            "valid": self.valid,
            "grid_N": self.grid_N,
            "schedule": list(self.schedule) if self.schedule else None,
            "horizon": self.horizon,
            "means": list(self.means),
            "oscillations": list(self.oscillations),
            "residuals": list(self.residuals),
            "corrector_residual": self.corrector_residual,
            "failure": self.failure,
        }


def _richardson(schedule, means):
    """Linear-in-lam extrapolation from the last two schedule points."""
    l_prev, l_last = schedule[-2], schedule[-1]
    m_prev, m_last = means[-2], means[-1]
    return m_last + (m_last - m_prev) * l_last / (l_prev - l_last)


def _shrinking(tail) -> bool:
    return all(b <= a * (1.0 + 1e-12) for a, b in zip(tail, tail[1:]))


def _validate_schedule(schedule):
    if len(schedule) < 3:
        raise ValueError("schedule needs at least 3 entries")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")
    if schedule[-1] <= 0:
        raise ValueError("schedule entries must be > 0")


def _trivial_estimate(P: Direction, method: str, grid_N: int, **extra) -> EffectiveEstimate:
    # p_last = 0: the transverse evolution is exactly v = -|P| t
    return EffectiveEstimate(
        value=P.norm, method=method, error_bar=0.0, uniformity=0.0,
        homogenized=True, valid=True, grid_N=grid_N, **extra,
    )


def estimate_discount(P: Direction, params: PhysParams, f: ShearProfile,
                      schedule=cfg.LAMBDA_SCHEDULE, tol: float = cfg.TOL,
                      theta_u: float = cfg.THETA_U, max_iter: int = cfg.MAX_ITER,
                      v_init: Optional[np.ndarray] = None,
                      recorder=None) -> EffectiveEstimate:
    """Vanishing-discount estimate of the effective value.

    Solves the discounted problem for each lam in the (strictly decreasing)
    schedule, warm-starting from the previous solution; when the previous
    solve ended with pinned nodes the warm start is rescaled to preserve
    lam*v, which keeps the pinned branch values exact.  A non-converged or
    diverged solve marks the whole estimate invalid; nothing is guessed.
    """
    schedule = tuple(schedule)
    _validate_schedule(schedule)
    if P.p_last == 0.0:
        return _trivial_estimate(P, "discount-extrapolated", f.grid.N, schedule=schedule)

    means, oscs, residuals = [], [], []
    v0 = np.array(v_init, dtype=np.float64) if v_init is not None else None
    sol = None
    pinned_prev = False
    lam_prev = None
    for lam in schedule:
        if sol is not None:
            v0 = sol.v.values * (lam_prev / lam) if pinned_prev else sol.v.values
        try:
            sol = solve_discounted(lam, P, params, f, tol=tol, max_iter=max_iter, v0=v0)
        except SolverDivergence as exc:
            return EffectiveEstimate(
                value=float("nan"), method="discount-extrapolated", error_bar=float("inf"),
                uniformity=float("inf"), homogenized=False, valid=False, grid_N=f.grid.N,
                schedule=schedule, means=means, oscillations=oscs, residuals=residuals,
                failure=f"solver diverged at lam={lam}: {exc}",
            )
        if recorder is not None:
            recorder.record(kind="discounted", lam=lam, P=list(P.p) + [P.p_last],
                            d=params.d, A=params.A, cutoff=params.cutoff,
                            grid_N=f.grid.N, iterations=sol.iterations,
                            residual=sol.residual, converged=sol.converged)
        scaled = sol.scaled()
        means.append(float(-scaled.mean()))
        oscs.append(float(scaled.max() - scaled.min()))
        residuals.append(sol.residual)
        if not sol.converged:
            return EffectiveEstimate(
                value=float("nan"), method="discount-extrapolated", error_bar=float("inf"),
                uniformity=float("inf"), homogenized=False, valid=False, grid_N=f.grid.N,
                schedule=schedule, means=means, oscillations=oscs, residuals=residuals,
                failure=f"no convergence at lam={lam} within {max_iter} iterations "
                        f"(residual {sol.residual:.3g})",
            )
        pinned_prev = sol.stalled_nodes > 0
        lam_prev = lam

    value = _richardson(schedule, means)
    uniformity = oscs[-1]
    error_bar = abs(means[-1] - value) + uniformity
    homogenized = uniformity <= theta_u and _shrinking(oscs[-3:])
    rhs_final = g_operator(sol.v, P, params, f).rhs.values
    corr = float(np.abs(rhs_final - rhs_final.mean()).max())
    return EffectiveEstimate(
        value=value, method="discount-extrapolated", error_bar=error_bar,
        uniformity=uniformity, homogenized=homogenized, valid=True, grid_N=f.grid.N,
        schedule=schedule, means=means, oscillations=oscs, residuals=residuals,
        corrector_residual=corr, final_solution=sol,
    )


def estimate_longtime(P: Direction, params: PhysParams, f: ShearProfile,
                      T: float = cfg.T_HORIZON, theta_u: float = cfg.THETA_U,
                      recorder=None) -> EffectiveEstimate:
    """Long-time estimate: mean of -v(.,T)/T from the initial-value problem."""
    if T < 8.0:
        raise ValueError("horizon T must be >= 8 for a meaningful slope")
    if P.p_last == 0.0:
        return _trivial_estimate(P, "long-time-slope", f.grid.N, horizon=T)
    times = (0.25 * T, 0.5 * T, T)
    try:
        trace = evolve(P, params, f, T, snapshot_times=times)
    except SolverDivergence as exc:
        return EffectiveEstimate(
            value=float("nan"), method="long-time-slope", error_bar=float("inf"),
            uniformity=float("inf"), homogenized=False, valid=False, grid_N=f.grid.N,
            horizon=T, failure=str(exc),
        )
    slopes = {t: s for t, s in trace.slope}
    s_quarter, s_half, s_full = (slopes[t] for t in times)
    value = s_full.mean()
    value_half = s_half.mean()
    uniformity = oscillation(s_full)
    osc_series = [oscillation(s_quarter), oscillation(s_half), uniformity]
    error_bar = abs(value - value_half) + uniformity
    homogenized = uniformity <= theta_u and _shrinking(osc_series)
    if recorder is not None:
        recorder.record(kind="evolve", T=T, P=list(P.p) + [P.p_last], d=params.d,
                        A=params.A, cutoff=params.cutoff, grid_N=f.grid.N,
                        iterations=None, residual=None, converged=True)
    return EffectiveEstimate(
        value=value, method="long-time-slope", error_bar=error_bar,
        uniformity=uniformity, homogenized=homogenized, valid=True, grid_N=f.grid.N,
        horizon=T, means=[s_quarter.mean(), value_half, value], oscillations=osc_series,
    )


@dataclass
class ConnectionReport:
    hbar: float
    hbar_plus: float
    a_f: float              # A * F(P)
    gap: float
    valid: bool
    hbar_estimate: EffectiveEstimate
    hbar_plus_estimate: EffectiveEstimate


def connection_check(P: Direction, d: float, A: float, f: ShearProfile,
                     schedule=cfg.LAMBDA_SCHEDULE, tol: float = cfg.TOL,
                     theta_u: float = cfg.THETA_U, recorder=None) -> ConnectionReport:
    """Compare the cutoff value against max(non-cutoff value, A*F(P)).

    Meaningful only when both estimates carry a positive homogenization
    verdict; otherwise the report is flagged invalid and the gap is NaN.
    """
    est_nc = estimate_discount(P, PhysParams(d, A, cutoff=False), f,
                               schedule=schedule, tol=tol, theta_u=theta_u, recorder=recorder)
    est_c = estimate_discount(P, PhysParams(d, A, cutoff=True), f,
                              schedule=schedule, tol=tol, theta_u=theta_u, recorder=recorder)
    a_f = A * driven_force(P, f)
    ok = est_nc.valid and est_c.valid and est_nc.homogenized and est_c.homogenized
    gap = abs(est_c.value - max(est_nc.value, a_f)) if ok else float("nan")
    return ConnectionReport(
        hbar=est_nc.value, hbar_plus=est_c.value, a_f=a_f, gap=gap, valid=ok,
        hbar_estimate=est_nc, hbar_plus_estimate=est_c,
    )


def inviscid_hbar_1d(P2: Direction, A: float, f1: ShearProfile,
                     n_dense: int = 4096, tol_h: float = 1e-12) -> float:
    """Effective Hamiltonian of the d = 0 problem at n = 1 by quadrature.

    The stationary equation sqrt(p_last^2 + (p + v')^2) = H - A p_last f(x)
    is solvable on the torus iff H >= |p_last| + A max(p_last f) and the
    absolute slope budget I(H) = integral sqrt((H - A p_last f)^2 - p_last^2)
    reaches |p|.  I is continuous and strictly increasing, so the answer is
    the smallest H in the bracket with I(H) >= |p|.
    """
    if P2.n != 1 or f1.grid.n != 1:
        raise ValueError("inviscid quadrature is the n=1 specialization")
    if A < 0:
        raise ValueError("A must be >= 0")
    if P2.p_last == 0.0:
        raise ValueError("p_last must be nonzero")
    if n_dense < 4096:
        raise ValueError("n_dense must be >= 4096")
    if f1.grid.N == n_dense:
        fv = f1.values
    else:
        fv = _resample_periodic_1d(f1.values, n_dense)
    pf = P2.p_last * fv
    pl = abs(P2.p_last)
    p_abs = abs(P2.p[0])
    h_min = pl + A * pf.max()

    def budget(H):
        return float(np.sqrt(np.maximum((H - A * pf) ** 2 - pl * pl, 0.0)).mean())

    if budget(h_min) >= p_abs:
        return h_min
    lo, hi = h_min, h_min + p_abs + 1.0
    while budget(hi) < p_abs:
        hi += p_abs + 1.0
    while hi - lo > tol_h:
        mid = 0.5 * (lo + hi)
        if budget(mid) >= p_abs:
            hi = mid
        else:
            lo = mid
    return hi

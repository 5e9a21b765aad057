"""Stationary discounted solves and the initial-value evolution.

solve_discounted finds the periodic field with  lam*v + rhs(v) = 0  where
rhs is the (cutoff or non-cutoff) operator of operators.g_operator.  The
default scheme is a damped fixed-point iteration with a per-node step
1/(lam + D(x)), D(x) an upper bound on the local stiffness, a per-step move
cap of one grid spacing, and the a-priori comparison box as a hard clamp.
A mean correction accelerates the translation-neutral mode but is switched
off while any node has clamped speed: pinned nodes anchor absolute values
and a uniform shift fights them.

scheme="global" is the plain explicit marching v <- v - dt*(lam v + rhs)
with the conservative global step of operators.stable_dt recomputed every
100 steps.  It is unconditionally robust but its step collapses once steep
pinned structure appears, so it is practical only away from that regime;
the two schemes are cross-checked in the tests.

Converged cutoff solves are checked on the spot against the comparison
bounds (value box and discounted gradient bound) with slack
10*residual + C*h; a violation raises InvariantViolation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import config as cfg
from .fields import Direction, ScalarField, TorusGrid, grad_sup_norm, oscillation
from .operators import OperatorOutput, PhysParams, g_operator, stable_dt
from .profiles import ShearProfile, _finalize
from . import _kernels


class SolverDivergence(RuntimeError):
    """Marching blew up or stagnated at a high residual."""


class InvariantViolation(RuntimeError):
    """A converged solve violated a comparison-principle bound beyond slack."""


@dataclass
class DiscountedSolution:
    v: ScalarField
    lam: float
    residual: float
    iterations: int
    converged: bool
    stalled_nodes: int = 0

    def scaled(self) -> np.ndarray:
        """lam * v, the quantity whose limit is the effective value."""
        return self.lam * self.v.values


@dataclass
class EvolutionTrace:
    snapshots: list = field(default_factory=list)   # (t, ScalarField)
    slope: list = field(default_factory=list)       # (t, ScalarField of -v/t), t >= 1
    grad_sup: list = field(default_factory=list)    # (t, sup|Dv|)


def comparison_box(P: Direction, params: PhysParams, f: ShearProfile, lam: float):
    """A-priori bounds on v from constant sub/supersolutions."""
    pf_max = max(P.p_last * f.f_max, P.p_last * f.f_min)
    pf_min = min(P.p_last * f.f_max, P.p_last * f.f_min)
    lo = (-P.norm - params.A * pf_max) / lam
    hi = (-P.norm - params.A * pf_min) / lam
    return lo, hi


def _initial_field(P, params, f, lam) -> np.ndarray:
    return np.full(f.grid.shape, -(P.norm + params.A * P.p_last * f.field.mean()) / lam)


def _check_discounted_bounds(sol: DiscountedSolution, P: Direction, params: PhysParams,
                             f: ShearProfile):
    """Value box and gradient bound for converged cutoff solves."""
    h = f.grid.h
    lam_v = sol.scaled()
    lo, hi = comparison_box(P, params, f, 1.0)   # bounds on lam*v directly
    slack = 10.0 * sol.residual + cfg.SLACK_C_VALUE * h
    if lam_v.min() < lo - slack or lam_v.max() > hi + slack:
        raise InvariantViolation(
            f"discounted value bounds violated: lam*v in [{lam_v.min():.6g}, {lam_v.max():.6g}], "
            f"allowed [{lo:.6g}, {hi:.6g}] +- {slack:.3g}"
        )
    grad_bound = params.A * abs(P.p_last) * f.lip_bound + cfg.SLACK_C_GRAD * h \
        + 10.0 * sol.residual
    lam_grad = sol.lam * grad_sup_norm(sol.v)
    if lam_grad > grad_bound:
        raise InvariantViolation(
            f"discounted gradient bound violated: lam*sup|Dv| = {lam_grad:.6g} "
            f"> {grad_bound:.6g}"
        )


def check_lipschitz_in_A(sol1: DiscountedSolution, sol2: DiscountedSolution,
                         P: Direction, f: ShearProfile, A1: float, A2: float,
                         tol: float = cfg.TOL):
    """lam*sup|v1 - v2| <= |A1 - A2| * max|p_last f| + slack, for equal lam."""
    if sol1.lam != sol2.lam:
        raise ValueError("Lipschitz-in-A check needs solves at equal lam")
    lam = sol1.lam
    lhs = lam * float(np.abs(sol1.v.values - sol2.v.values).max())
    bound = abs(A1 - A2) * abs(P.p_last) * f.abs_max() \
        + 2.0 * (tol + cfg.SLACK_C_LIPA * f.grid.h)
    if lhs > bound:
        raise InvariantViolation(
            f"Lipschitz-in-A violated: lam*sup|v1-v2| = {lhs:.6g} > {bound:.6g} "
            f"for A1={A1}, A2={A2}"
        )
    return lhs, bound


def _rhs_diag_reference(v: np.ndarray, P: Direction, params: PhysParams, f: ShearProfile):
    """Numpy residual ingredients + stiffness bound; mirrors the fused kernels."""
    grid = f.grid
    n, h = grid.n, grid.h
    sf = ScalarField(grid, v)
    out = g_operator(sf, P, params, f)
    speed = out.speed.values
    sa = np.abs(speed)
    pl2 = P.p_last ** 2

    alphas = []
    for i in range(n):
        fwd = (np.roll(v, -1, axis=i) - v) / h
        bwd = (v - np.roll(v, 1, axis=i)) / h
        m = np.maximum(np.abs(P.p[i] + fwd), np.abs(P.p[i] + bwd))
        alphas.append(m / np.sqrt(pl2 + m * m))
    central = [(np.roll(v, -1, axis=i) - np.roll(v, 1, axis=i)) / (2.0 * h) for i in range(n)]
    mag = np.sqrt(pl2 + sum((P.p[i] + central[i]) ** 2 for i in range(n)))
    diss = sum(alphas[i] * (np.roll(v, -1, axis=i) - 2.0 * v + np.roll(v, 1, axis=i)) / (2.0 * h)
               for i in range(n))

    # per-face curvature sensitivity factors, gathered from both faces per axis
    csum = np.zeros(grid.shape)
    for i in range(n):
        normal = (np.roll(v, -1, axis=i) - v) / h + P.p[i]
        t2 = np.zeros(grid.shape)
        tcross = np.zeros(grid.shape)
        for j in range(n):
            if j == i:
                continue
            tang = 0.5 * (central[j] + np.roll(central[j], -1, axis=i)) + P.p[j]
            t2 += tang * tang
            tcross += np.abs(normal * tang)
        W2 = pl2 + normal * normal + t2
        C = ((pl2 + t2) + tcross) / (W2 * np.sqrt(W2))
        csum += C + np.roll(C, 1, axis=i)

    diag = 2.0 * sa * sum(alphas) / h
    active = sa > 0.0
    diag = diag + np.where(active, params.d * (mag + np.abs(diss) + np.abs(mag - diss)) * csum / (h * h), 0.0)
    return out.rhs.values, speed, diag


def _run_local_numpy(v, P, params, f, lam, tol, max_steps):
    """Fallback driver for n=3: same update policy as the fused kernels."""
    grid = f.grid
    h = grid.h
    lo, hi = comparison_box(P, params, f, lam)
    margin = 2.0 + 0.5 * (hi - lo)
    blo, bhi = lo - margin, hi + margin
    omega = 0.5
    rn = np.inf
    nstall = 0
    for step in range(max_steps):
        rhs, speed, diag = _rhs_diag_reference(v, P, params, f)
        res = lam * v + rhs
        rn = float(np.abs(res).max())
        nstall = int((speed == 0.0).sum())
        if rn <= tol:
            return step, rn, True, nstall
        dv = np.clip(omega * res / (lam + diag), -h, h)
        v -= dv
        if nstall == 0:
            shift = float(np.clip(-omega * res.mean() / lam, -0.5 * h, 0.5 * h))
            v += shift
        np.clip(v, blo, bhi, out=v)
    return max_steps, rn, False, nstall


def solve_discounted(lam: float, P: Direction, params: PhysParams, f: ShearProfile,
                     tol: float = cfg.TOL, max_iter: int = cfg.MAX_ITER,
                     v0: Optional[np.ndarray] = None, scheme: str = "local",
                     check_bounds: bool = True) -> DiscountedSolution:
    """Solve lam*v + rhs(v) = 0 on the torus.

    Parameters
    ----------
    lam : discount, > 0.
    P, params, f : direction, physical parameters, shear profile.
    tol : sup-norm residual target.
    max_iter : iteration budget; exceeding it returns converged=False with
        the partial field rather than raising.
    v0 : optional warm-start values (copied); default is the mean-drift
        constant -(|P| + A p_last mean f)/lam.
    scheme : "local" (default) or "global" explicit marching.

    Raises SolverDivergence if the residual blows up (10x above its initial
    level with no progress for a long window, or non-finite).
    """
    if lam <= 0.0:
        raise ValueError("lam must be > 0")
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    if P.p_last == 0.0:
        raise ValueError("p_last = 0: the stationary problem is the constant -|P|/lam")
    if P.n != f.grid.n:
        raise ValueError("direction/profile dimension mismatch")

    grid = f.grid
    v = _initial_field(P, params, f, lam) if v0 is None else np.array(v0, dtype=np.float64)
    if v.shape != grid.shape:
        raise ValueError("v0 shape does not match the profile grid")

    if scheme == "global":
        return _solve_global(lam, P, params, f, tol, max_iter, v, check_bounds)
    if scheme != "local":
        raise ValueError(f"unknown scheme {scheme!r}")

    lo, hi = comparison_box(P, params, f, lam)
    margin = 2.0 + 0.5 * (hi - lo)
    blo, bhi = lo - margin, hi + margin
    np.clip(v, blo, bhi, out=v)

    done = 0
    omega = 0.5
    rn_prev = np.inf
    r0 = None
    best = np.inf
    stale_chunks = 0
    converged = False
    rn = np.inf
    nstall = 0
    chunk = 2000

    if grid.n in (1, 2):
        fvals = f.values
        work = [np.empty(grid.shape) for _ in range(5 if grid.n == 1 else 7)]
        while done < max_iter:
            m = min(chunk, max_iter - done)
            if grid.n == 2:
                F0, F1, C0, C1, res, speed, diag = work
                nit, rn, conv, nstall = _kernels.discounted_chunk_2d(
                    v, fvals, P.p[0], P.p[1], P.p_last, params.d, params.A, params.cutoff,
                    grid.h, lam, tol, omega, m, blo, bhi, F0, F1, C0, C1, res, speed, diag)
            else:
                F0, C0, res, speed, diag = work
                nit, rn, conv, nstall = _kernels.discounted_chunk_1d(
                    v, fvals, P.p[0], P.p_last, params.d, params.A, params.cutoff,
                    grid.h, lam, tol, omega, m, blo, bhi, F0, C0, res, speed, diag)
            done += (nit + 1) if conv else m
            if conv:
                converged = True
                break
            if not np.isfinite(rn):
                raise SolverDivergence(f"non-finite residual after {done} iterations")
            if r0 is None:
                r0 = max(rn, 10.0 * tol)
            if rn < best:
                best = rn
                stale_chunks = 0
            else:
                stale_chunks += 1
            if rn > 10.0 * r0 and stale_chunks > 50:
                raise SolverDivergence(
                    f"residual stagnated at {rn:.3g} (initial {r0:.3g}) after {done} iterations"
                )
            omega = min(0.9, omega * 1.08) if rn < rn_prev else 0.5
            rn_prev = rn
    else:
        nit, rn, converged, nstall = _run_local_numpy(v, P, params, f, lam, tol, max_iter)
        done = nit if converged else max_iter

    sol = DiscountedSolution(
        v=ScalarField(grid, v), lam=lam, residual=float(rn),
        iterations=int(done), converged=bool(converged), stalled_nodes=int(nstall),
    )
    if converged and check_bounds and params.cutoff:
        _check_discounted_bounds(sol, P, params, f)
    return sol


def _solve_global(lam, P, params, f, tol, max_iter, v, check_bounds):
    """Explicit marching with the conservative global step; dt refreshed every 100 steps."""
    grid = f.grid
    r0 = None
    rn = np.inf
    it = 0
    converged = False
    while it < max_iter:
        sf = ScalarField(grid, v)
        dt = stable_dt(sf, P, params, f)
        for _ in range(100):
            out = g_operator(ScalarField(grid, v), P, params, f)
            res = lam * v + out.rhs.values
            rn = float(np.abs(res).max())
            if r0 is None:
                r0 = max(rn, 10.0 * tol)
            if rn <= tol:
                converged = True
                break
            if not np.isfinite(rn) or rn > 10.0 * r0:
                raise SolverDivergence(
                    f"global marching diverged: residual {rn:.3g} vs initial {r0:.3g}"
                )
            v -= dt * res
            it += 1
            if it >= max_iter:
                break
        if converged:
            break
    out = g_operator(ScalarField(grid, v), P, params, f)
    nstall = int((out.speed.values == 0.0).sum())
    sol = DiscountedSolution(
        v=ScalarField(grid, v), lam=lam, residual=float(rn),
        iterations=int(it), converged=bool(converged), stalled_nodes=nstall,
    )
    if converged and check_bounds and params.cutoff:
        _check_discounted_bounds(sol, P, params, f)
    return sol


def evolve(P: Direction, params: PhysParams, f: ShearProfile, T: float,
           snapshot_times=(), enforce_gradient_bound: bool = True) -> EvolutionTrace:
    """March v_t + rhs(v) = 0 from v = 0 to time T, recording snapshots.

    The step comes from operators.stable_dt, refreshed every 100 steps, with
    the final step of each segment shortened to land exactly on snapshot
    times.  Aborts if sup|v| exceeds 10*(|P| + A max|p_last f|)*T.  The
    comparison gradient bound sup|Dv(t)| <= A |p_last| Lip(f) t (+ C*h*t
    slack) is enforced at every recording time.
    """
    if T <= 0:
        raise ValueError("T must be > 0")
    if P.p_last == 0.0:
        raise ValueError("p_last = 0: v(x,t) = -|P| t exactly; no marching needed")
    grid = f.grid
    times = sorted(set(float(t) for t in snapshot_times if 0.0 < float(t) <= T))
    if not times or times[-1] < T:
        times.append(T)

    v = np.zeros(grid.shape)
    trace = EvolutionTrace()
    blow_limit = 10.0 * (P.norm + params.A * abs(P.p_last) * f.abs_max()) * max(T, 1.0)

    use_kernel = grid.n in (1, 2)
    rhs_buf = np.empty(grid.shape)
    speed_buf = np.empty(grid.shape)
    kappa_buf = np.empty(grid.shape)

    t = 0.0
    for t_target in times:
        while t < t_target - 1e-13:
            sf = ScalarField(grid, v)
            dt = stable_dt(sf, P, params, f)
            remaining = t_target - t
            if dt >= remaining:
                steps, dt = 1, remaining
            else:
                steps = min(100, int(remaining / dt))
            if use_kernel:
                if grid.n == 2:
                    vmax = _kernels.evolve_chunk_2d(
                        v, f.values, P.p[0], P.p[1], P.p_last, params.d, params.A,
                        params.cutoff, grid.h, dt, steps, rhs_buf, speed_buf, kappa_buf)
                else:
                    vmax = _kernels.evolve_chunk_1d(
                        v, f.values, P.p[0], P.p_last, params.d, params.A,
                        params.cutoff, grid.h, dt, steps, rhs_buf, speed_buf, kappa_buf)
            else:
                for _ in range(steps):
                    out = g_operator(ScalarField(grid, v), P, params, f)
                    v -= dt * out.rhs.values
                vmax = float(np.abs(v).max())
            t += steps * dt
            if not np.isfinite(vmax) or vmax > blow_limit:
                raise SolverDivergence(f"evolution unstable at t={t:.4g}: sup|v| = {vmax:.3g}")
        t = t_target
        snap = ScalarField(grid, v.copy())
        trace.snapshots.append((t, snap))
        gs = grad_sup_norm(snap)
        trace.grad_sup.append((t, gs))
        if t >= 1.0:
            trace.slope.append((t, ScalarField(grid, -v / t)))
        if enforce_gradient_bound:
            bound = params.A * abs(P.p_last) * f.lip_bound * t + cfg.SLACK_C_GRAD * grid.h * t
            if gs > bound:
                raise InvariantViolation(
                    f"gradient growth bound violated at t={t:.4g}: sup|Dv| = {gs:.6g} > {bound:.6g}"
                )
    return trace


def _resample_periodic_1d(values: np.ndarray, N_dense: int) -> np.ndarray:
    """Periodic linear interpolation onto a finer uniform grid."""
    N = values.shape[0]
    x_dense = np.arange(N_dense) / N_dense
    pos = x_dense * N
    i0 = np.floor(pos).astype(int) % N
    frac = pos - np.floor(pos)
    return (1.0 - frac) * values[i0] + frac * values[(i0 + 1) % N]


def solve_line(lam: float, P2: Direction, params: PhysParams, f1: ShearProfile,
               N_dense: int = 2048, tol: float = cfg.TOL,
               max_iter: int = cfg.MAX_ITER) -> DiscountedSolution:
    """Discounted solve on a dense 1-d grid; the near-oracle reference at n=1.

    The profile is resampled onto N_dense nodes by periodic linear
    interpolation when its own grid differs.
    """
    if P2.n != 1 or f1.grid.n != 1:
        raise ValueError("solve_line is the n=1 specialization")
    if N_dense < 1024:
        raise ValueError("N_dense must be >= 1024")
    if f1.grid.N == N_dense:
        dense = f1
    else:
        grid = TorusGrid(1, N_dense)
        dense = _finalize(ScalarField(grid, _resample_periodic_1d(f1.values, N_dense)),
                          c1_compliant=f1.c1_compliant, q_shift=f1.q_shift)
    return solve_discounted(lam, P2, params, dense, tol=tol, max_iter=max_iter)


def save_checkpoint(path_prefix, sol: DiscountedSolution, P: Direction,
                    params: PhysParams):
    """Write node values as CSV plus a JSON metadata sidecar; resumable."""
    values_path = f"{path_prefix}.values.csv"
    meta_path = f"{path_prefix}.meta.json"
    flat = sol.v.values.reshape(-1)
    with open(values_path, "w") as fh:
        fh.write("v\n")
        for val in flat:
            fh.write(repr(float(val)) + "\n")
    meta = {
        "lambda": sol.lam,
        "P": list(P.p) + [P.p_last],
        "d": params.d,
        "A": params.A,
        "cutoff": params.cutoff,
        "iteration": sol.iterations,
        "residual": sol.residual,
        "converged": sol.converged,
        "grid_n": sol.v.grid.n,
        "grid_N": sol.v.grid.N,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return values_path, meta_path


def load_checkpoint(path_prefix):
    """Read back a checkpoint; returns (values, metadata dict)."""
    with open(f"{path_prefix}.values.csv") as fh:
        header = fh.readline()
        if header.strip() != "v":
            raise ValueError("bad checkpoint values file")
        flat = np.array([float(line) for line in fh if line.strip()])
    with open(f"{path_prefix}.meta.json") as fh:
        meta = json.load(fh)
    shape = (meta["grid_N"],) * meta["grid_n"]
    return flat.reshape(shape), meta

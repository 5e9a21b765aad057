"""Shear-flow profiles f and the driven-force functional.

A profile is a sampled field plus metadata (extrema, a numerical Lipschitz
bound, and a flag for the cellular-extremum normalization: max attained only
on the integer lattice, min only on the lattice shifted by q_shift).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import Direction, ScalarField, TorusGrid, grad_central

LIP_SAFETY = 1.1  # numerical sup|Df| carries a 10% safety factor


@dataclass
class ShearProfile:
    field: ScalarField
    f_max: float
    f_min: float
    lip_bound: float
    c1_compliant: bool
    q_shift: Optional[tuple] = None

    @property
    def grid(self) -> TorusGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def abs_max(self) -> float:
        return max(abs(self.f_max), abs(self.f_min))


def _finalize(field: ScalarField, c1_compliant: bool, q_shift=None) -> ShearProfile:
    g = grad_central(field)
    s = np.zeros(field.grid.shape)
    for comp in g:
        s += comp.values ** 2
    lip = LIP_SAFETY * float(np.sqrt(s).max())
    return ShearProfile(
        field=field,
        f_max=field.max(),
        f_min=field.min(),
        lip_bound=lip,
        c1_compliant=c1_compliant,
        q_shift=tuple(q_shift) if q_shift is not None else None,
    )


def cellular_profile(n: int, grid: TorusGrid) -> ShearProfile:
    """f(x) = (1/n) * sum_i (cos(2 pi x_i) - 1).

    Max 0 attained exactly on the integer lattice, min -2 on the lattice
    shifted by (1/2, ..., 1/2).
    """
    if grid.n != n:
        raise ValueError(f"grid dimension {grid.n} != requested n={n}")
    field = ScalarField.sample(
        grid, lambda *X: sum(np.cos(2.0 * np.pi * Xi) - 1.0 for Xi in X) / n
    )
    return _finalize(field, c1_compliant=True, q_shift=(0.5,) * n)


def constant_profile(c: float, grid: TorusGrid) -> ShearProfile:
    """Spatially constant flow; the analytic test case."""
    return _finalize(ScalarField.full(grid, c), c1_compliant=False)


def counterexample_profile(psi_amplitude: float, d: float, grid: TorusGrid):
    """Profile built so the cutoff cell problem has the exact smooth solution Psi.

    Psi(x) = a * sum_i sin(2 pi x_i);  W = (1 - d div(DPsi/sqrt(1+|DPsi|^2)))
    * sqrt(1+|DPsi|^2) evaluated in closed form on the nodes, and
    f = -max(0, W).  Returns (profile, W field, Psi field).  Raises if W does
    not change sign on the grid (increase psi_amplitude or d).
    """
    if grid.n < 2:
        raise ValueError("construction needs n >= 2")
    if psi_amplitude <= 0.0:
        raise ValueError("psi_amplitude must be > 0")
    a = float(psi_amplitude)
    twopi = 2.0 * np.pi
    X = grid.meshgrid()
    dpsi = [twopi * a * np.cos(twopi * Xi) for Xi in X]
    d2psi = [-(twopi ** 2) * a * np.sin(twopi * Xi) for Xi in X]
    g2 = sum(c * c for c in dpsi)
    w0 = np.sqrt(1.0 + g2)
    lap = sum(d2psi)
    # q . D^2Psi . q with diagonal Hessian
    corr = sum(dpsi[i] ** 2 * d2psi[i] for i in range(grid.n)) / (1.0 + g2)
    w = w0 - d * (lap - corr)
    if not (w.min() < 0.0 < w.max()):
        raise ValueError(
            f"W does not change sign on the grid (range [{w.min():.3g}, {w.max():.3g}]); "
            f"increase psi_amplitude or d"
        )
    f_vals = -np.maximum(0.0, w)
    psi = ScalarField(grid, a * sum(np.sin(twopi * Xi) for Xi in X))
    profile = _finalize(ScalarField(grid, f_vals), c1_compliant=False)
    return profile, ScalarField(grid, w), psi


def driven_force(P: Direction, f: ShearProfile) -> float:
    """Maximal driven force along P: max_x of p_last * f(x)."""
    if P.p_last >= 0.0:
        return P.p_last * f.f_max
    return P.p_last * f.f_min


def profile_to_csv(f: ShearProfile, path):
    """Write `x1,...,xn,f` rows in lexicographic node order."""
    grid = f.grid
    coords = grid.axis_coordinates()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i+1}" for i in range(grid.n)] + ["f"])
        flat = f.values.reshape(-1)
        for k, idx in enumerate(np.ndindex(*grid.shape)):
            writer.writerow([repr(coords[i]) for i in idx] + [repr(float(flat[k]))])


def profile_from_csv(path) -> ShearProfile:
    """Read a profile written in the CSV interchange format.

    Header `x1,...,xn,f`; one row per node in lexicographic index order;
    the grid size is inferred from the row count, which must be N^n.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1].strip() != "f":
            raise ValueError("profile CSV must end with an 'f' column")
        n = len(header) - 1
        if n < 1:
            raise ValueError("profile CSV needs at least one coordinate column")
        rows = [float(row[-1]) for row in reader if row]
    count = len(rows)
    N = round(count ** (1.0 / n))
    # search the neighborhood of the float root for the exact integer root
    for cand in (N - 1, N, N + 1):
        if cand >= 1 and cand ** n == count:
            N = cand
            break
    else:
        raise ValueError(f"row count {count} is not N^{n} for any integer N")
    grid = TorusGrid(n, N)
    values = np.asarray(rows).reshape(grid.shape)
    return _finalize(ScalarField(grid, values), c1_compliant=False)

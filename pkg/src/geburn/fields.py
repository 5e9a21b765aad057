"""Periodic grids, discrete differential operators, and field statistics.

Everything downstream (profiles, operators, solvers) works on uniform node
grids over the unit torus [0,1)^n.  Nodes sit at coordinates i/N; index
arithmetic wraps modulo N on every axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteFieldError(ValueError):
    """A field operation produced or received NaN/Inf values."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on [0,1)^n with N cells per axis.

    The spacing h = 1/N is derived, never stored independently, and N is
    restricted to sizes where h*N rounds back to 1.0 exactly so that
    periodic wrap-around never accumulates coordinate error.
    """

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        if self.N < 8:
            raise ValueError(f"need at least 8 cells per axis, got {self.N}")
        if (1.0 / self.N) * self.N != 1.0:
            raise ValueError(
                f"N={self.N} does not give an exactly representable spacing "
                f"(h*N != 1 in float64); pick a nearby size such as a power of two"
            )

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def num_nodes(self) -> int:
        return self.N ** self.n

    def axis_coordinates(self) -> np.ndarray:
        """Node coordinates along one axis: i/N for i = 0..N-1."""
        return np.arange(self.N) / self.N

    def meshgrid(self) -> list:
        """Coordinate arrays X_1..X_n, each of full grid shape ('ij' indexing)."""
        x = self.axis_coordinates()
        return list(np.meshgrid(*([x] * self.n), indexing="ij"))


@dataclass
class ScalarField:
    """Real values sampled at the nodes of a TorusGrid."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteFieldError("field contains non-finite values")

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def full(cls, grid: TorusGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def sample(cls, grid: TorusGrid, fn) -> "ScalarField":
        """Sample fn(X_1, ..., X_n) at the grid nodes.

        fn must be periodic with period 1 in every argument; this is the
        caller's contract and is not verified here.
        """
        return cls(grid, np.asarray(fn(*grid.meshgrid()), dtype=np.float64))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class Direction:
    """Front normal parameters (p, p_last) in R^{n+1}.

    p is the transverse part, p_last the component along the shear axis.
    The norm is recomputed on access, never cached.
    """

    p: tuple
    p_last: float

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(c) for c in self.p))
        object.__setattr__(self, "p_last", float(self.p_last))
        if self.norm == 0.0:
            raise ValueError("direction must be nonzero")

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def norm(self) -> float:
        return float(np.sqrt(sum(c * c for c in self.p) + self.p_last ** 2))

    def scaled(self, factor: float) -> "Direction":
        return Direction(tuple(factor * c for c in self.p), factor * self.p_last)


def _check_finite(v: ScalarField, what: str = "input field"):
    if not np.all(np.isfinite(v.values)):
        raise NonFiniteFieldError(f"{what} contains non-finite values")


def grad_central(v: ScalarField) -> list:
    """Central-difference gradient with periodic wrap.

    Component i at node x is (v(x+h e_i) - v(x-h e_i)) / (2h).
    """
    _check_finite(v)
    h = v.grid.h
    out = []
    for axis in range(v.grid.n):
        d = (np.roll(v.values, -1, axis=axis) - np.roll(v.values, 1, axis=axis)) / (2.0 * h)
        out.append(ScalarField(v.grid, d))
    return out


def grad_sup_norm(v: ScalarField) -> float:
    """sup_x |Dv(x)| with Dv from grad_central."""
    g = grad_central(v)
    s = np.zeros(v.grid.shape)
    for comp in g:
        s += comp.values ** 2
    return float(np.sqrt(s).max())


def curvature_kappa(v: ScalarField, P: Direction, f_reg: float = 0.0) -> ScalarField:
    """Discrete divergence of (p + Dv) / sqrt(p_last^2 + |p + Dv|^2).

    Face-flux form: the flux through the face between x and x+h e_i uses the
    one-sided difference across the face as normal derivative and the average
    of the two adjacent central differences for the tangential components.
    The result is conservative: the grid sum is zero up to roundoff.

    With p_last != 0 the flux denominator is bounded below by |p_last| and
    f_reg is ignored; f_reg > 0 is required only for the p_last = 0 path.
    """
    _check_finite(v)
    if P.n != v.grid.n:
        raise ValueError(f"direction has {P.n} transverse components, grid is {v.grid.n}-d")
    if f_reg < 0.0:
        raise ValueError("regularization floor must be >= 0")
    if P.p_last == 0.0 and f_reg == 0.0:
        raise ValueError("p_last = 0 needs a positive regularization floor f_reg")
    n = v.grid.n
    h = v.grid.h
    vals = v.values
    pl2 = P.p_last ** 2
    central = [(np.roll(vals, -1, axis=j) - np.roll(vals, 1, axis=j)) / (2.0 * h)
               for j in range(n)]
    kappa = np.zeros(v.grid.shape)
    for i in range(n):
        normal = (np.roll(vals, -1, axis=i) - vals) / h + P.p[i]
        t2 = np.zeros(v.grid.shape)
        for j in range(n):
            if j == i:
                continue
            tang = 0.5 * (central[j] + np.roll(central[j], -1, axis=i)) + P.p[j]
            t2 += tang * tang
        denom = np.sqrt(pl2 + normal * normal + t2)
        if f_reg > 0.0:
            denom = np.maximum(denom, f_reg)
        flux = normal / denom
        kappa += (flux - np.roll(flux, 1, axis=i)) / h
    return ScalarField(v.grid, kappa)


def oscillation(v: ScalarField) -> float:
    """max(v) - min(v); the non-uniformity of a sampled field."""
    _check_finite(v)
    return float(v.values.max() - v.values.min())

"""Radial grids, grid functions and the discrete radial Laplacian.

A radial function u(|x|) on the ball B_R of R^n is stored by its nodal values
on a graded mesh 0 = r_0 < r_1 < ... < r_M = R.  The Laplacian

    Δu = r^{1-n} (r^{n-1} u')'

is discretized in conservative form: fluxes through the cell midpoints
r_{i+1/2} and dual-cell volumes.  The stencil is exact on constants and on r^2,
and at the origin it reduces to Δu(0) ≈ 2n (u_1 - u_0) / h^2 on uniform grids.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_INTERVALS = 8

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class GridError(ValueError):
    pass


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int, radius: float = 1.0) -> float:
    return sphere_area(n) * radius**n / n


def _power_difference(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """a**n - b**n for 0 <= b < a without cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = a**n
    pos = b > 0
    ratio = (a[pos] - b[pos]) / b[pos]
    out[pos] = b[pos] ** n * np.expm1(n * np.log1p(ratio))
    return out


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Graded mesh on [0, R] for radial functions in dimension n."""

    nodes: np.ndarray
    dimension: int
    radius: float
    grading: str = "uniform"
    exponent: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < MIN_INTERVALS + 1:
            raise GridError(f"need at least {MIN_INTERVALS} intervals")
        if self.dimension < 2:
            raise GridError("dimension below 2")
        if not self.radius > 0:
            raise GridError("radius must be positive")
        if r[0] != 0.0 or not np.isclose(r[-1], self.radius, rtol=1e-14, atol=0):
            raise GridError("nodes must run from 0 to R")
        if np.any(np.diff(r) <= 0):
            raise GridError("nodes must be strictly increasing")
        r = r.copy()
        r[-1] = self.radius
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def n(self) -> int:
        return self.dimension

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def omega(self) -> float:
        return sphere_area(self.dimension)

    def same_as(self, other: "RadialGrid") -> bool:
        return (
            self is other
            or (
                self.dimension == other.dimension
                and self.nodes.size == other.nodes.size
                and np.array_equal(self.nodes, other.nodes)
            )
        )

    def refined(self, factor: int = 2) -> "RadialGrid":
        return build_grid(self.M * factor, self.grading, self.dimension, self.radius, self.exponent)

    def with_dimension(self, n: int) -> "RadialGrid":
        return RadialGrid(self.nodes, n, self.radius, self.grading, self.exponent)

    # -- discrete operator ------------------------------------------------

    @property
    def faces(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def conductance(self) -> np.ndarray:
        """Flux coefficients r_{i+1/2}^{n-1} / h_i, one per cell."""
        return self.faces ** (self.dimension - 1) / self.spacing

    @property
    def volumes(self) -> np.ndarray:
        """Dual-cell volumes ∫ r^{n-1} dr over [r_{i-1/2}, r_{i+1/2}] (no ω factor)."""
        n = self.dimension
        edges = np.concatenate(([0.0], self.faces, [self.radius]))
        return _power_difference(edges[1:], edges[:-1], n) / n

    def stiffness_bands(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of the symmetric stiffness K on nodes 0..M.

        u^T K u = Σ_i κ_i (u_{i+1} - u_i)^2 approximates ∫ |u'|^2 r^{n-1} dr.
        """
        k = self.conductance
        diag = np.zeros(self.M + 1)
        diag[:-1] += k
        diag[1:] += k
        return diag, -k


def build_grid(M: int, grading: str = "power", n: int = 3, R: float = 1.0, g: float = 2.0) -> RadialGrid:
    """Mesh with M intervals; ``grading`` is "uniform" or "power" (node i at R (i/M)^g)."""
    if M < MIN_INTERVALS:
        raise GridError(f"M={M} is below the minimum of {MIN_INTERVALS}")
    if n < 2:
        raise GridError(f"dimension {n} is below 2")
    if not R > 0:
        raise GridError("radius must be positive")
    t = np.arange(M + 1) / M
    if grading == "uniform":
        nodes, g = R * t, 1.0
    elif grading == "power":
        if not 1.0 <= g <= 4.0:
            raise GridError(f"grading exponent {g} outside [1, 4]")
        nodes = R * t**g
    else:
        raise GridError(f"unknown grading {grading!r}")
    return RadialGrid(nodes, int(n), float(R), grading, float(g))


@dataclass(eq=False)
class GridFunction:
    """Nodal values of a radial function.

    ``singular=True`` marks a profile that blows up at the origin; its value at
    r = 0 is ignored by every pointwise evaluation and integral.
    """

    grid: RadialGrid
    values: np.ndarray
    singular: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise GridError("values do not match the grid")
        if self.singular:
            v[0] = np.nan
            if not np.all(np.isfinite(v[1:])):
                raise GridError("non-finite values away from the origin")
        elif not np.all(np.isfinite(v)):
            raise GridError("non-finite nodal values")
        self.values = v

    @classmethod
    def from_callable(cls, grid: RadialGrid, fn, singular: bool = False, **meta) -> "GridFunction":
        r = grid.nodes
        vals = np.full(r.shape, np.nan)
        start = 1 if singular else 0
        with np.errstate(divide="ignore"):
            vals[start:] = fn(r[start:])
        return cls(grid, vals, singular, dict(meta))

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def first(self) -> int:
        """Index of the first node taking part in evaluations."""
        return 1 if self.singular else 0

    def sup(self) -> float:
        return float(np.max(np.abs(self.values[self.first:])))

    def __call__(self, r):
        lo = self.first
        return np.interp(r, self.r[lo:], self.values[lo:])

    def derivative(self) -> np.ndarray:
        """Nodal u' from three-point nonuniform stencils (NaN at 0 if singular)."""
        r, u = self.r, self.values
        d = np.empty_like(u)
        hm = r[1:-1] - r[:-2]
        hp = r[2:] - r[1:-1]
        # difference form, so constants differentiate to exactly 0
        du = np.diff(u)
        d[1:-1] = hp / (hm * (hm + hp)) * du[:-1] + hm / (hp * (hm + hp)) * du[1:]
        h1, h2 = r[-2] - r[-3], r[-1] - r[-2]
        d[-1] = (2 * h2 + h1) / (h2 * (h1 + h2)) * du[-1] - h2 / (h1 * (h1 + h2)) * du[-2]
        if self.singular:
            d[0] = np.nan
            d[1] = _forward_derivative(r[1:4], u[1:4])
        else:
            d[0] = 0.0
        return d

    def to_csv(self, path) -> Path:
        path = Path(path)
        lo = self.first
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "value"])
            for ri, vi in zip(self.r[lo:], self.values[lo:]):
                w.writerow([f"{ri:.17g}", f"{vi:.17g}"])
        return path


def _forward_derivative(r: np.ndarray, u: np.ndarray) -> float:
    h1, h2 = r[1] - r[0], r[2] - r[1]
    return float((2 * h1 + h2) / (h1 * (h1 + h2)) * (u[1] - u[0]) - h1 / (h2 * (h1 + h2)) * (u[2] - u[1]))


def read_csv(path, grid: RadialGrid, singular: bool = False) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = np.full(grid.nodes.shape, np.nan)
    vals[grid.nodes.size - data.shape[0]:] = data[:, 1]
    return GridFunction(grid, vals, singular)


def radial_laplacian(u: GridFunction, interior_only: bool = False) -> GridFunction:
    """Nodal Δu = u'' + (n-1)/r u'.

    Singular profiles need ``interior_only=True``; the origin is skipped and
    node 1 uses a one-sided quadratic fit.
    """
    if u.singular and not interior_only:
        raise GridError("singular profile: request interior-only evaluation")
    g = u.grid
    k, w = g.conductance, g.volumes
    v = u.values
    flux = k * np.diff(v)
    out = np.empty_like(v)
    out[1:-1] = (flux[1:] - flux[:-1]) / w[1:-1]
    out[0] = flux[0] / w[0]
    # boundary node: quadratic through the last three nodes
    r = g.nodes[-3:]
    c = np.polyfit(r - r[-1], v[-3:], 2)
    out[-1] = 2 * c[0] + (g.n - 1) / g.radius * c[1]
    if u.singular:
        # node 1: quadratic through nodes 1..3, away from the origin
        r = g.nodes[1:4]
        c = np.polyfit(r - r[0], v[1:4], 2)
        out[1] = 2 * c[0] + (g.n - 1) / r[0] * c[1]
    return GridFunction(g, out, singular=u.singular)


def radial_integral(grid: RadialGrid, integrand, lower: float = 0.0, upper: float | None = None, skip_origin: bool = False) -> float:
    """ω ∫_lower^upper g(r) r^{n-1} dr by the trapezoid rule on the mesh.

    Partial cells at the ends interpolate g(r) r^{n-1} as a local power law.  ``skip_origin`` starts the integral at the first positive node.
    """
    h = np.asarray(integrand, dtype=float) * grid.nodes ** (grid.n - 1)
    return density_integral(grid, h, lower, upper, skip_origin)


def density_integral(grid: RadialGrid, density, lower: float = 0.0, upper: float | None = None, skip_origin: bool = False) -> float:
    """ω ∫_lower^upper h(r) dr for a radial density h that already carries r^{n-1}."""
    r = grid.nodes
    upper = grid.radius if upper is None else float(upper)
    if upper > grid.radius * (1 + 1e-12):
        raise GridError("upper limit beyond the grid radius")
    upper = min(upper, grid.radius)
    lo_node = 1 if skip_origin else 0
    lower = max(float(lower), r[lo_node])
    if upper <= lower:
        return 0.0
    h = np.asarray(density, dtype=float)
    rr, hh = r[lo_node:], h[lo_node:]
    inside = (rr > lower) & (rr < upper)
    xs = np.concatenate(([lower], rr[inside], [upper]))
    ys = np.concatenate(([_interp_density(lower, rr, hh)], hh[inside], [_interp_density(upper, rr, hh)]))
    if skip_origin:
        return grid.omega * _power_law_sum(xs, ys)
    return grid.omega * float(_trapezoid(ys, xs))


def _power_law_sum(x: np.ndarray, y: np.ndarray) -> float:
    """Cellwise exact integral of the power law through both cell ends.

    Used for singular profiles, whose densities behave like r^k near the origin
    where the trapezoid rule overestimates badly on graded cells.  Cells with a
    nonpositive end value fall back to the trapezoid rule.
    """
    a, b = x[:-1], x[1:]
    ya, yb = y[:-1], y[1:]
    trap = 0.5 * (b - a) * (ya + yb)
    ok = (a > 0) & (ya > 0) & (yb > 0) & (b > a)
    out = trap.copy()
    if np.any(ok):
        ratio = b[ok] / a[ok]
        k1 = np.log(yb[ok] / ya[ok]) / np.log(ratio) + 1.0  # exponent + 1
        lr = np.log(ratio)
        # a y_a ((b/a)^{k+1} - 1)/(k+1), stable as k+1 -> 0
        out[ok] = a[ok] * ya[ok] * lr * np.where(np.abs(k1 * lr) > 1e-8, np.expm1(k1 * lr) / np.where(k1 * lr == 0, 1, k1 * lr), 1.0)
    return float(np.sum(out))


def _interp_density(x: float, r: np.ndarray, h: np.ndarray) -> float:
    """Density at x inside a cell: power-law interpolation when both ends are
    positive (exact for h ~ r^k, which near the origin is the typical shape),
    linear otherwise."""
    j = int(np.searchsorted(r, x, side="right")) - 1
    j = min(max(j, 0), r.size - 2)
    r0, r1, h0, h1 = r[j], r[j + 1], h[j], h[j + 1]
    if x <= r0:
        return float(h0)
    if x >= r1:
        return float(h1)
    if r0 > 0 and h0 > 0 and h1 > 0:
        t = math.log(x / r0) / math.log(r1 / r0)
        return float(h0 * (h1 / h0) ** t)
    return float(h0 + (h1 - h0) * (x - r0) / (r1 - r0))

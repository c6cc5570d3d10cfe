"""Norms of radial grid functions and checkers for the quantitative estimates
satisfied by stable solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import betainc

from .nonlinearity import Nonlinearity
from .radial import GridError, GridFunction, RadialGrid, density_integral, radial_integral
from .solvers import Solution
from .stability import EstimateReport

MORREY_RADII = 64
MORREY_CENTERS = 33


# -- Lebesgue and Hölder ----------------------------------------------------


def _values(u: GridFunction, gradient: bool) -> np.ndarray:
    return np.abs(u.derivative() if gradient else u.values)


def lebesgue_norm(u: GridFunction, p: float, rho: float | None = None, gradient: bool = False) -> float:
    """(∫_{B_ρ} |u|^p)^{1/p}, or of |u'| with ``gradient``; p = inf is the nodal max on [0, ρ]."""
    g = u.grid
    rho = g.radius if rho is None else float(rho)
    if not 0 < rho <= g.radius * (1 + 1e-12):
        raise GridError("rho must lie in (0, R]")
    v = _values(u, gradient)
    if math.isinf(p):
        sel = g.nodes <= rho
        sel[: u.first] = False
        return float(np.max(v[sel]))
    if p < 1:
        raise ValueError("p must be >= 1")
    with np.errstate(invalid="ignore"):
        integral = radial_integral(g, np.nan_to_num(v**p), 0.0, rho, skip_origin=u.singular)
    return integral ** (1.0 / p)


def holder_seminorm(u: GridFunction, alpha: float, rho: float | None = None, chunk: int = 512) -> float:
    """sup |u(x) - u(y)| / |x - y|^α over x, y in the closed ball B_ρ.

    For radial u, |x - y| >= ||x| - |y|| with equality on a ray, so the sup
    over the ball equals the sup over node pairs in [0, ρ].
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    g = u.grid
    rho = g.radius if rho is None else float(rho)
    if rho > g.radius * (1 + 1e-12):
        raise GridError("rho beyond the grid radius")
    sel = g.nodes <= rho * (1 + 1e-14)
    sel[: u.first] = False
    r = g.nodes[sel]
    v = u.values[sel]
    best = 0.0
    for i0 in range(0, r.size, chunk):
        ri, vi = r[i0 : i0 + chunk, None], v[i0 : i0 + chunk, None]
        dr = np.abs(ri - r[None, :])
        dv = np.abs(vi - v[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dr > 0, dv / dr**alpha, 0.0)
        best = max(best, float(np.max(q)))
    return best


def holder_norm(u: GridFunction, alpha: float, rho: float | None = None) -> float:
    """‖u‖_{C^α(B̄_ρ)} = sup |u| + [u]_α."""
    g = u.grid
    rho = g.radius if rho is None else rho
    return lebesgue_norm(u, math.inf, rho) + holder_seminorm(u, alpha, rho)


# -- Morrey ---------------------------------------------------------------


@dataclass(frozen=True)
class MorreyParams:
    p: float
    beta: float

    def check(self, n: int) -> None:
        if not (math.isfinite(self.p) and self.p >= 1):
            raise ValueError("Morrey p must be finite and >= 1")
        if not 0 < self.beta <= n:
            raise ValueError("Morrey beta must lie in (0, n]")


def cap_fraction(s, c: float, r: float, n: int) -> np.ndarray:
    """Fraction of the sphere |x| = s (in R^n) lying inside B_r(y), |y| = c."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    if c == 0:
        out[s < r] = 1.0
        return out
    inside = s + c <= r
    out[inside] = 1.0
    part = (~inside) & (np.abs(s - c) < r)
    sp = s[part]
    cos_t = np.clip((sp * sp + c * c - r * r) / (2 * sp * c), -1.0, 1.0)
    sin2 = 1.0 - cos_t**2
    half = 0.5 * betainc((n - 1) / 2, 0.5, sin2)
    out[part] = np.where(cos_t >= 0, half, 1.0 - half)
    return out


def _ball_integral(grid: RadialGrid, dens: np.ndarray, c: float, r: float, skip_origin: bool) -> float:
    """∫_{B_R ∩ B_r(y)} g(|x|) dx for |y| = c, with dens = g(s) s^{n-1}."""
    if c == 0:
        return density_integral(grid, dens, 0.0, min(r, grid.radius), skip_origin)
    frac = cap_fraction(grid.nodes, c, r, grid.n)
    lo = max(0.0, c - r)
    hi = min(grid.radius, c + r)
    return density_integral(grid, dens * frac, lo, hi, skip_origin)


def morrey_scan(u: GridFunction, mp: MorreyParams, center_samples: int = MORREY_CENTERS, gradient: bool = False):
    """Table r^{β-n} ∫_{B_r(y)} |u|^p over centers |y| and radii r."""
    g = u.grid
    mp.check(g.n)
    if center_samples < 8:
        raise ValueError("center_samples must be >= 8")
    v = np.nan_to_num(_values(u, gradient) ** mp.p)
    dens = v * g.nodes ** (g.n - 1)
    centers = np.linspace(0.0, g.radius, center_samples)
    radii = np.union1d(np.geomspace(g.nodes[1], 2 * g.radius, MORREY_RADII), [g.radius])
    table = np.empty((centers.size, radii.size))
    for i, c in enumerate(centers):
        for j, r in enumerate(radii):
            table[i, j] = r ** (mp.beta - g.n) * _ball_integral(g, dens, c, r, u.singular)
    return centers, radii, table


def morrey_norm(
    u: GridFunction,
    mp: MorreyParams,
    center_samples: int = MORREY_CENTERS,
    gradient: bool = False,
    rooted: bool = True,
) -> float:
    """‖u‖_{M^{p,β}}: the p-th root of sup_{y,r} r^{β-n} ∫_{B_R ∩ B_r(y)} |u|^p.

    ``rooted=False`` returns the sup itself.
    """
    _, _, table = morrey_scan(u, mp, center_samples, gradient)
    top = float(np.max(table))
    return top ** (1.0 / mp.p) if rooted else top


# -- radial quantities -------------------------------------------------------


def _integrable_at_origin(u: GridFunction, du: np.ndarray) -> bool:
    """Local exponent of r u'^2 near the origin must exceed -1.

    Fitted on nodes 8..24, clear of the one-sided stencils at the first nodes;
    there the fitted exponent is accurate to a few hundredths.
    """
    hi = min(25, u.grid.M - 1)
    r = u.grid.nodes[8:hi]
    y = r * du[8:hi] ** 2
    if np.any(y <= 0):
        return True
    slope = np.polyfit(np.log(r), np.log(y), 1)[0]
    return slope > -1 + 0.05


def radial_quantities(u: GridFunction, rho: float) -> dict:
    """D(ρ) = ρ^{2-n} ∫_{B_ρ} |∇u|^2 and Rq(ρ) = ∫_{B_ρ} |x|^{-n} |x·∇u|^2."""
    g = u.grid
    if not 0 < rho <= g.radius * (1 + 1e-12):
        raise GridError("rho must lie in (0, R]")
    du = u.derivative()
    if u.singular and not _integrable_at_origin(u, du):
        raise GridError("r u'^2 is not integrable at the origin")
    du = np.nan_to_num(du)
    r = g.nodes
    dirichlet = density_integral(g, du**2 * r ** (g.n - 1), 0.0, rho, u.singular)
    radial = density_integral(g, du**2 * r, 0.0, rho, u.singular)
    return {"D": rho ** (2 - g.n) * dirichlet, "Rq": radial}


# -- geometric decay -------------------------------------------------------


@dataclass
class DecayInput:
    a: np.ndarray
    b: np.ndarray
    L: float
    M_bound: float

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.shape != self.b.shape or self.a.ndim != 1 or self.a.size < 2:
            raise ValueError("a and b must be sequences of equal length >= 2")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("sequences must be finite")
        if np.any(self.a < 0) or np.any(self.b < 0):
            raise ValueError("sequences must be nonnegative")
        if not (self.L > 0 and self.M_bound > 0):
            raise ValueError("L and M must be positive")


def decay_epsilon(L: float, tol: float = 1e-13) -> float:
    """Root ε > 0 of 2^{-ε} = L^{1+ε}/(1+L), by bisection (needs L > 1/2)."""
    if not L > 0.5:
        raise ValueError("L must exceed 1/2")

    def h(e):
        return -e * math.log(2) - (1 + e) * math.log(L) + math.log1p(L)

    lo, hi = 0.0, 1.0
    while h(hi) > 0:
        hi *= 2
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def decay_check(d: DecayInput) -> dict:
    """Hypotheses and conclusion b_j <= C M θ^j of the two-sequence decay lemma."""
    a, b, L, M = d.a, d.b, d.L, d.M_bound
    slack = 1e-12
    hyp = bool(a[0] <= M * (1 + slack) and b[0] <= M * (1 + slack))
    for j in range(1, a.size):
        tol = slack * max(1.0, a[j - 1], b[j - 1])
        hyp &= bool(b[j] <= b[j - 1] + tol)
        hyp &= bool(a[j] + b[j] <= L * a[j - 1] + tol)
        if a[j] >= 0.5 * a[j - 1]:
            hyp &= bool(b[j] <= L * (b[j - 1] - b[j]) + tol)
    # the hypotheses only weaken as L grows, so L <= 1/2 may be replaced by 1
    L_eff = L if L > 0.5 else 1.0
    eps = decay_epsilon(L_eff)
    theta = L_eff / (1 + L_eff) ** (1 / (1 + eps))
    C = max(1.0, L_eff ** (eps / (1 + eps)) / theta)
    j = np.arange(a.size)
    concl = bool(np.all(b <= C * M * theta**j * (1 + 1e-12)))
    return {"hyp_ok": hyp, "theta": theta, "Cc": C, "epsilon": eps, "conclusion_ok": concl}


def random_decay_instance(rng: np.random.Generator, L: float = 2.0, M: float = 1.0, length: int = 40) -> DecayInput:
    """Random sequences satisfying the decay-lemma hypotheses."""
    a = np.empty(length)
    b = np.empty(length)
    a[0] = M * rng.uniform(0.1, 1.0)
    b[0] = M * rng.uniform(0.1, 1.0)
    for j in range(1, length):
        if rng.random() < 0.5:
            a[j] = a[j - 1] * rng.uniform(0.0, 0.5)
            cap = b[j - 1]
        else:
            a[j] = a[j - 1] * rng.uniform(0.5, min(L, 1.5))
            cap = min(b[j - 1], L / (1 + L) * b[j - 1])
        cap = max(0.0, min(cap, L * a[j - 1] - a[j]))
        b[j] = cap * (1.0 if rng.random() < 0.3 else rng.uniform(0.5, 1.0))
    return DecayInput(a, b, L, M)


# -- Pohozaev and L^1 bound -------------------------------------------------


def pohozaev_terms(s: Solution) -> tuple[float, float, float]:
    p = s.problem
    g = p.grid
    u = s.u
    du = u.derivative()
    n, R = g.n, g.radius
    boundary = 0.5 * R * g.omega * R ** (n - 1) * du[-1] ** 2
    potential = n * p.lam * radial_integral(g, p.nonlinearity.primitive(u.values))
    energy = 0.5 * (n - 2) * radial_integral(g, du**2)
    return boundary, potential, energy


def pohozaev_residual(s: Solution) -> float:
    """|(R/2)∫_∂ u_ν^2 - n∫λF(u) + (n-2)/2 ∫|∇u|^2| over the largest term."""
    if not s.converged:
        raise ValueError("pohozaev_residual needs a converged solution")
    t1, t2, t3 = pohozaev_terms(s)
    top = max(abs(t1), abs(t2), abs(t3))
    if top == 0:
        return 0.0
    return abs(t1 - t2 + t3) / top


def affine_gap(A: float, f: Nonlinearity, lam: float, t_max: float = 50.0, samples: int = 5001) -> float:
    """B = max_{t in [0, t_max]} (A t - λ f(t)), clipped at 0."""
    t = np.linspace(0.0, t_max, samples)
    with np.errstate(over="ignore"):
        gap = A * t - lam * f(t)
    i = int(np.nanargmax(gap))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, samples - 1)]
    best = float(gap[i])
    if hi > lo:
        res = minimize_scalar(lambda x: -(A * x - lam * float(f(x))), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return max(best, 0.0)


def _discrete_integral(grid: RadialGrid, v: np.ndarray) -> float:
    return grid.omega * float(np.sum(grid.volumes * v))


def l1_bound_check(s: Solution, A: float, B: float, samples: int = 2001) -> EstimateReport:
    """(A - λ1) ∫ u Φ1 <= B ∫ Φ1 whenever λ f(t) >= A t - B on the range of u."""
    from .oracles import ball_lambda1

    p = s.problem
    g = p.grid
    if B < 0:
        raise ValueError("B must be >= 0")
    eig = ball_lambda1(g.n, g)
    lam1, phi = eig["lambda1"], eig["phi1"].values
    if not A > lam1:
        raise ValueError(f"A = {A} must exceed lambda1 = {lam1:.6g}")
    u = s.u.values
    t = np.union1d(np.linspace(0.0, float(np.max(u)), samples), u)
    if np.any(p.lam * p.nonlinearity(t) < A * t - B - 1e-12 * max(1.0, B)):
        raise ValueError("lambda f(t) >= A t - B fails on the range of u")
    lhs = (A - lam1) * _discrete_integral(g, u * phi)
    rhs = B * _discrete_integral(g, phi)
    return EstimateReport("l1_bound", lhs, rhs, {"n": g.n, "A": A, "B": B, "lambda1": lam1, "lambda": p.lam})


# -- universality ratios -----------------------------------------------------


def universality_ratios(u: GridFunction, alpha: float = 0.1, gamma: float = 0.1) -> dict:
    """Ratios of interior norms on B_{R/2} to ‖u‖_{L^1(B_R)}."""
    g = u.grid
    l1 = lebesgue_norm(u, 1.0)
    half = g.radius / 2
    return {
        "L1": l1,
        "holder": holder_norm(u, alpha, half) / l1,
        "gradient": lebesgue_norm(u, 2.0 + gamma, half, gradient=True) / l1,
        "energy": lebesgue_norm(u, 2.0, half, gradient=True) / l1,
    }

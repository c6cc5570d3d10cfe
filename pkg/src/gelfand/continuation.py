"""Pseudo-arclength continuation of λ ↦ u_λ from (0, 0), fold location and
the extremal profile.

The augmented system for x = (u, λ) is

    G(u, λ) = -Δ_h u - λ f(u) = 0,
    θ_u <t_u, u - u_p> + θ_λ t_λ (λ - λ_p) = 0,

where (u_p, λ_p) is the secant prediction and t the unit secant.  The inner
product <., .> is the nodal mean plus the origin value, so that steps keep
resolving the growth of u(0) when the profile concentrates.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .nonlinearity import Nonlinearity
from .radial import GridFunction, RadialGrid
from .solvers import DEFAULT_TOL, DiscreteLaplacian, NonConvergence, Problem, newton_solve

log = logging.getLogger(__name__)


class NoFold(RuntimeError):
    pass


@dataclass
class ContinuationSettings:
    ds: float = 0.05
    max_points: int = 400
    sup_limit: float = 50.0
    theta_u: float = 1.0
    theta_lam: float = 1.0
    tol: float = DEFAULT_TOL
    max_corrector: int = 12
    stop_after_fold: int | None = None  # points kept past the first fold
    min_halvings: int = 10

    def __post_init__(self):
        if not self.ds > 0:
            raise ValueError("ds must be positive")
        if self.max_points < 2:
            raise ValueError("max_points must be at least 2")
        if not self.sup_limit > 0:
            raise ValueError("sup_limit must be positive")
        if self.theta_u <= 0 or self.theta_lam <= 0:
            raise ValueError("arclength weights must be positive")


@dataclass
class BranchPoint:
    lam: float
    u: GridFunction
    arclength: float
    sup_norm: float
    mu1: float | None = None


@dataclass
class Fold:
    lambda_star: float
    sup_at_fold: float
    index: int
    s_star: float


@dataclass
class Branch:
    grid: RadialGrid
    nonlinearity: Nonlinearity
    points: list = field(default_factory=list)
    fold: Fold | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def sups(self) -> np.ndarray:
        return np.array([p.sup_norm for p in self.points])

    @property
    def arclengths(self) -> np.ndarray:
        return np.array([p.arclength for p in self.points])

    def minimal(self) -> list:
        """Points strictly before the first fold.

        The discrete maximum of λ is excluded: it lies within the step length
        of the turning point and may already sit on the upper branch.
        """
        lam = self.lambdas
        drop = np.nonzero(np.diff(lam) <= 0)[0]
        stop = drop[0] if drop.size else len(self.points)
        return self.points[:stop]

    def fill_mu1(self, indices=None) -> None:
        """Principal eigenvalue at the requested points (all by default)."""
        from .stability import principal_eigenvalue

        idx = range(len(self.points)) if indices is None else indices
        for i in idx:
            pt = self.points[i]
            if pt.mu1 is None:
                pt.mu1 = principal_eigenvalue(pt.u, self.nonlinearity, pt.lam).mu1

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "lambda", "sup_norm", "mu1"])
            for p in self.points:
                mu = "" if p.mu1 is None else f"{p.mu1:.17g}"
                w.writerow([f"{p.arclength:.17g}", f"{p.lam:.17g}", f"{p.sup_norm:.17g}", mu])
        return path


def _metric(theta_u: float, a: np.ndarray, b: np.ndarray) -> float:
    return theta_u * (float(np.mean(a * b)) + float(a[0] * b[0]))


def _bordered(op: DiscreteLaplacian, jac_diag: np.ndarray, col: np.ndarray, row: np.ndarray, corner: float):
    """Sparse (M+1)x(M+1) matrix [[J, col], [row, corner]] with tridiagonal J."""
    m = op.size
    off_up = op.k_off / op.w[:-1]
    off_lo = op.k_off / op.w[1:]
    J = sp.diags([off_lo, jac_diag, off_up], [-1, 0, 1], shape=(m, m), format="csr")
    top = sp.hstack([J, sp.csr_matrix(col.reshape(-1, 1))])
    bottom = sp.csr_matrix(np.append(row, corner).reshape(1, -1))
    return sp.vstack([top, bottom], format="csc")


def _correct(op, f, lam_p, u_p, t_u, t_lam, st: ContinuationSettings):
    """Newton corrector on the augmented system; returns (u, λ, iterations)."""
    u, lam = u_p.copy(), lam_p
    m = u.size
    # gradient of the constraint w.r.t. u, including the metric weights
    row = st.theta_u * (t_u / m)
    row[0] += st.theta_u * t_u[0]
    for it in range(1, st.max_corrector + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            fu = f(u)
            g = op.apply(u) - lam * fu
            c = _metric(st.theta_u, t_u, u - u_p) + st.theta_lam * t_lam * (lam - lam_p)
            jd = op.diag - lam * f.dleft(u)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(jd))):
            raise NonConvergence("non-finite residual in corrector")
        mat = _bordered(op, jd, -fu, row, st.theta_lam * t_lam)
        try:
            step = splu(mat).solve(-np.append(g, c))
        except RuntimeError as exc:
            raise NonConvergence("singular augmented Jacobian") from exc
        if not np.all(np.isfinite(step)):
            raise NonConvergence("singular augmented Jacobian")
        u = u + step[:m]
        lam = lam + step[m]
        if np.max(np.abs(step[:m])) <= st.tol and abs(step[m]) <= st.tol * max(1.0, abs(lam)):
            return u, lam, it
    raise NonConvergence("corrector did not converge")


def _unit(theta_u, theta_lam, du, dlam):
    norm = math.sqrt(_metric(theta_u, du, du) + theta_lam * dlam * dlam)
    return du / norm, dlam / norm


def trace_branch(grid: RadialGrid, f: Nonlinearity, settings: ContinuationSettings | None = None) -> Branch:
    """Follow the solution branch from (λ, u) = (0, 0) by pseudo-arclength.

    Stops at ``max_points`` points, once the sup norm exceeds ``sup_limit``, or
    ``stop_after_fold`` points past the first fold.
    """
    st = settings or ContinuationSettings()
    op = DiscreteLaplacian(grid)
    branch = Branch(grid, f)
    u = np.zeros(op.size)
    lam, s = 0.0, 0.0
    branch.points.append(_point(grid, u, lam, s))

    # initial tangent: d u / d λ at λ = 0 solves -Δ_h v = f(0)
    v = op.solve(f(np.zeros(op.size)))
    t_u, t_lam = _unit(st.theta_u, st.theta_lam, v, 1.0)
    scale = 1.0
    past_fold = None
    while len(branch.points) < st.max_points:
        nominal = st.ds * (float(np.max(np.abs(u))) + 1.0)
        while True:
            h = nominal * scale
            u_p = u + h * t_u
            lam_p = lam + h * t_lam
            try:
                u_new, lam_new, its = _correct(op, f, lam_p, u_p, t_u, t_lam, st)
                break
            except NonConvergence:
                scale *= 0.5
                if scale < 2.0**-st.min_halvings:
                    raise NonConvergence(
                        f"corrector failed below ds*2^-{st.min_halvings} at lambda={lam:.6g}"
                    )
                log.debug("halving step at lambda=%g", lam)
        du, dlam = u_new - u, lam_new - lam
        step_len = math.sqrt(_metric(st.theta_u, du, du) + st.theta_lam * dlam * dlam)
        if step_len == 0.0:
            raise NonConvergence("continuation stalled")
        t_u, t_lam = du / step_len, dlam / step_len
        u, lam, s = u_new, lam_new, s + step_len
        branch.points.append(_point(grid, u, lam, s))
        if its <= 4 and scale < 1.0:
            scale = min(1.0, 2.0 * scale)
        if past_fold is None and dlam < 0:
            past_fold = 0
        if past_fold is not None:
            past_fold += 1
            if st.stop_after_fold is not None and past_fold > st.stop_after_fold:
                break
        if branch.points[-1].sup_norm > st.sup_limit:
            break
    try:
        branch.fold = detect_fold(branch)
    except NoFold:
        branch.fold = None
    return branch


def _point(grid, u, lam, s) -> BranchPoint:
    vals = np.append(u, 0.0)
    return BranchPoint(float(lam), GridFunction(grid, vals), float(s), float(np.max(vals)))


def _vertex(s: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Stationary point of the parabola through three (s, y) samples."""
    c = np.polyfit(s - s[1], y, 2)
    if c[0] >= 0:
        return float(s[1]), c
    return float(s[1] - c[1] / (2 * c[0])), c


def detect_fold(b: Branch) -> Fold:
    """First turning point of λ(s): vertex of the parabola through the three
    points around the first sign change of Δλ."""
    lam = b.lambdas
    if lam.size < 3:
        raise NoFold("branch too short")
    dl = np.diff(lam)
    up = np.nonzero(dl > 0)[0]
    if up.size == 0:
        raise NoFold("lambda never increases")
    down = np.nonzero(dl[up[0]:] < 0)[0]
    if down.size == 0:
        raise NoFold("lambda is monotone along the branch")
    k = int(up[0] + down[0])  # λ_k is a discrete local max
    lo = max(k - 1, 0)
    idx = np.arange(lo, lo + 3)
    s = b.arclengths[idx]
    s_star, c = _vertex(s, lam[idx])
    s_star = min(max(s_star, s[0]), s[-1])
    lam_star = float(np.polyval(c, s_star - s[1]))
    cs = np.polyfit(s - s[1], b.sups[idx], 2)
    sup_star = float(np.polyval(cs, s_star - s[1]))
    return Fold(lam_star, sup_star, k, s_star)


def minimal_solution(b: Branch, frac: float, tol: float = DEFAULT_TOL):
    """Minimal solution at λ = frac·λ⋆, by Newton from the nearest lower branch point."""
    if b.fold is None:
        raise NoFold("branch has no fold")
    if not 0 <= frac < 1:
        raise ValueError("frac must lie in [0, 1)")
    target = frac * b.fold.lambda_star
    pts = b.minimal()
    below = [p for p in pts if p.lam <= target]
    start = below[-1] if below else pts[0]
    return newton_solve(Problem(b.grid, b.nonlinearity, target), start.u, tol=tol)


def extremal_profile(b: Branch, tol: float = 1e-6) -> GridFunction:
    """Approximation of u⋆ from below: the minimal solution at λ⋆(1 - tol)."""
    if b.fold is None:
        raise NoFold("branch has no fold")
    lam = b.fold.lambda_star * (1.0 - tol)
    pts = [p for p in b.minimal() if p.lam <= lam]
    if not pts:
        raise NoFold("no minimal-branch point below the fold")
    # Newton toward λ from the last minimal point, halving the gap on failure
    u, reached = pts[-1].u, pts[-1].lam
    target = lam
    for _ in range(40):
        try:
            sol = newton_solve(Problem(b.grid, b.nonlinearity, target), u)
        except NonConvergence:
            target = 0.5 * (reached + target)
            continue
        u, reached = sol.u, target
        if reached == lam:
            break
        target = lam
    if reached < lam:
        log.info("extremal refinement stopped at lambda=%.12g (target %.12g)", reached, lam)
    u.meta.update(lam=reached, lambda_star=b.fold.lambda_star)
    return u

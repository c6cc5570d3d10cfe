"""Discrete solvers for -Δu = λ f(u) in B_R with u = 0 on ∂B_R.

The unknowns are the nodal values u_0..u_{M-1}; u_M is the Dirichlet value.
``Solution.residual_norm`` is the max norm of the Newton correction
J^{-1}(-Δ_h u - λ f(u)), i.e. the discrete residual expressed in units of u.
Raw nodal residuals at the first cells are dominated by roundoff, since the
stencil weights grow like 1/h_1^2.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .nonlinearity import Nonlinearity
from .radial import GridError, GridFunction, RadialGrid, radial_laplacian

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MIN_DAMPING = 2.0**-20


class NonConvergence(RuntimeError):
    pass


class Divergence(RuntimeError):
    pass


class DiscreteLaplacian:
    """-Δ_h on the unknowns 0..M-1 of a grid (Dirichlet node M eliminated)."""

    def __init__(self, grid: RadialGrid):
        self.grid = grid
        k = grid.conductance
        w = grid.volumes[:-1]
        kl = np.concatenate(([0.0], k[:-1]))
        self.k, self.w = k, w
        self.k_diag = kl + k  # diagonal of K restricted to unknowns
        self.k_off = -k[:-1]  # couplings (i, i+1) for i < M-1
        self.k_bdry = k[-1]  # coupling of node M-1 to the Dirichlet node
        self.diag = self.k_diag / w
        self._chol = None

    @property
    def size(self) -> int:
        return self.w.size

    def apply(self, u: np.ndarray, boundary: float = 0.0) -> np.ndarray:
        """(-Δ_h u)_i for i < M; ``u`` holds the M unknowns."""
        out = self.k_diag * u
        out[:-1] += self.k_off * u[1:]
        out[1:] += self.k_off * u[:-1]
        out[-1] -= self.k_bdry * boundary
        return out / self.w

    def banded(self, shift: np.ndarray | float = 0.0) -> np.ndarray:
        """(-Δ_h + diag(shift)) in solve_banded (1, 1) layout."""
        ab = np.zeros((3, self.size))
        ab[1] = self.diag + shift
        ab[0, 1:] = self.k_off / self.w[:-1]
        ab[2, :-1] = self.k_off / self.w[1:]
        return ab

    def solve(self, rhs: np.ndarray, boundary: float = 0.0) -> np.ndarray:
        """Solve -Δ_h u = rhs with u_M = boundary (symmetric Cholesky)."""
        if self._chol is None:
            ab = np.zeros((2, self.size))
            ab[1] = self.k_diag
            ab[0, 1:] = self.k_off
            self._chol = cholesky_banded(ab, lower=False)
        b = rhs * self.w
        b[-1] += self.k_bdry * boundary
        return cho_solve_banded((self._chol, False), b)


@dataclass
class Problem:
    grid: RadialGrid
    nonlinearity: Nonlinearity
    lam: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lambda must be finite and >= 0")


@dataclass
class Solution:
    problem: Problem
    u: GridFunction
    residual_norm: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list, repr=False)

    def record(self, csv_path=None) -> dict:
        f = self.problem.nonlinearity
        rec = {
            "lambda": self.problem.lam,
            "n": self.problem.grid.n,
            "family": f.family,
        }
        if f.q is not None:
            rec["q"] = f.q
        rec.update(
            residual_norm=self.residual_norm,
            converged=self.converged,
            iterations=self.iterations,
            csv_path=None if csv_path is None else str(csv_path),
        )
        return rec

    def save(self, json_path, csv_path=None) -> dict:
        json_path = Path(json_path)
        csv_path = Path(csv_path) if csv_path else json_path.with_suffix(".csv")
        self.u.to_csv(csv_path)
        rec = self.record(csv_path.name)
        json_path.write_text(json.dumps(rec, indent=2) + "\n")
        return rec


def residual(p: Problem, u: GridFunction) -> GridFunction:
    """Nodal Δu + λ f(u); singular profiles are evaluated away from the origin."""
    if not u.grid.same_as(p.grid):
        raise GridError("grid mismatch")
    lap = radial_laplacian(u, interior_only=u.singular)
    with np.errstate(invalid="ignore"):
        vals = lap.values + p.lam * p.nonlinearity(u.values)
    return GridFunction(p.grid, vals, singular=u.singular)


def scaled_residual(op: DiscreteLaplacian, p: Problem, u: np.ndarray) -> np.ndarray:
    """Jacobi-scaled residual D^{-1}(-Δ_h u - λ f(u)) on the unknowns."""
    with np.errstate(over="ignore", invalid="ignore"):
        return (op.apply(u) - p.lam * p.nonlinearity(u)) / op.diag


def _norm(v: np.ndarray) -> float:
    m = float(np.max(np.abs(v)))
    return m if np.isfinite(m) else np.inf


def newton_solve(p: Problem, u0: GridFunction | np.ndarray | None = None, tol: float = DEFAULT_TOL, max_iter: int = 50) -> Solution:
    """Damped Newton iteration for the discrete problem.

    Converged once the Newton correction J^{-1} G is below ``tol`` in max norm.
    Steps are halved until the scaled residual decreases.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    op = DiscreteLaplacian(p.grid)
    f, lam = p.nonlinearity, p.lam
    if u0 is None:
        u = np.zeros(op.size)
    else:
        vals = u0.values if isinstance(u0, GridFunction) else np.asarray(u0, dtype=float)
        u = np.array(vals[: op.size], dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("initial guess must be finite")

    res = scaled_residual(op, p, u)
    rnorm = _norm(res)
    history = []
    for it in range(max_iter + 1):
        step = _newton_step(op, p, u, res)
        snorm = _norm(step)
        history.append(snorm)
        if snorm <= tol:
            return _solution(p, u + step, snorm, True, it, history)
        if it == max_iter:
            break
        t = 1.0
        floor = 1e-13 * max(1.0, float(np.max(np.abs(u))))
        while True:
            trial = u + t * step
            res_t = scaled_residual(op, p, trial)
            rn_t = _norm(res_t)
            if rn_t < rnorm or rn_t <= floor:
                break
            t *= 0.5
            if t < MIN_DAMPING:
                raise NonConvergence(f"damping underflow at iteration {it} (correction {snorm:.3e})")
        u, res, rnorm = trial, res_t, rn_t
        log.debug("newton it=%d damping=%g correction=%.3e", it, t, snorm)
    raise NonConvergence(f"no convergence in {max_iter} iterations (correction {snorm:.3e})")


def _newton_step(op: DiscreteLaplacian, p: Problem, u: np.ndarray, res: np.ndarray) -> np.ndarray:
    jac = op.banded(-p.lam * p.nonlinearity.dleft(u))
    with np.errstate(all="ignore"):
        try:
            step = solve_banded((1, 1), jac, -res * op.diag)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NonConvergence("singular Jacobian") from exc
    if not np.all(np.isfinite(step)):
        raise NonConvergence("singular Jacobian")
    return step


def correction_norm(p: Problem, u: GridFunction) -> float:
    """Max norm of the Newton correction at u, an error estimate in units of u."""
    op = DiscreteLaplacian(p.grid)
    v = u.values[: op.size]
    return _norm(_newton_step(op, p, v, scaled_residual(op, p, v)))


def monotone_iteration(p: Problem, tol: float = DEFAULT_TOL, cap: float = 1e3, max_iter: int = 20000) -> Solution:
    """Minimal solution from u^(0) = 0 and -Δ u^(j) = λ f(u^(j-1)).

    For nondecreasing f >= 0 the iterates increase nodally; the limit is the
    minimal solution.  Exceeding ``cap`` in sup norm means λ is past the fold.
    """
    if not (tol > 0 and cap > 0):
        raise ValueError("tol and cap must be positive")
    op = DiscreteLaplacian(p.grid)
    f, lam = p.nonlinearity, p.lam
    u = np.zeros(op.size)
    history = []
    for it in range(1, max_iter + 1):
        new = op.solve(lam * f(u))
        diff = float(np.max(np.abs(new - u)))
        history.append(diff)
        if not np.isfinite(diff) or np.max(new) > cap:
            raise Divergence(f"sup norm exceeded cap={cap} at iteration {it}")
        u = new
        if diff <= tol:
            sol = _solution(p, u, 0.0, True, it, history)
            sol.residual_norm = correction_norm(p, sol.u)
            return sol
    raise NonConvergence(f"monotone iteration did not settle in {max_iter} steps")


def _solution(p: Problem, u: np.ndarray, rnorm: float, converged: bool, it: int, history) -> Solution:
    vals = np.append(u, 0.0)
    return Solution(p, GridFunction(p.grid, vals), rnorm, converged, it, list(history))

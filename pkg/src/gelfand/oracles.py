"""Closed-form singular solutions, critical exponents and ball eigen-data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nonlinearity import Nonlinearity
from .radial import GridFunction, RadialGrid, build_grid
from .stability import StabilityCertificate, hardy_margin, principal_eigenvalue


@dataclass(frozen=True)
class CriticalExponents:
    n: int
    q_n: float | None
    p_n: float
    alpha_n: float | None
    lambda_star_power: float | None

    def to_dict(self) -> dict:
        def txt(x):
            if x is None:
                return None
            return "inf" if math.isinf(x) else x

        return {
            "n": self.n,
            "q_n": txt(self.q_n),
            "p_n": txt(self.p_n),
            "lambda_star_power": txt(self.lambda_star_power),
            "hardy_margin": hardy_margin(self.n),
        }


def critical_exponents(n: int) -> CriticalExponents:
    """q_n, p_n, 2/(q_n-1) and λ⋆ of the power problem for n >= 10 (q_n needs n >= 11)."""
    if n < 10:
        raise ValueError("critical exponents need n >= 10")
    s = n - 2 * math.sqrt(n - 1)
    if n == 10:
        return CriticalExponents(n, None, math.inf, None, None)
    den = s - 4
    q = s / den
    p = 2 * (s - 2) / den
    alpha = 2 / (q - 1)
    return CriticalExponents(n, q, p, alpha, alpha * (n - 2 - alpha))


def singular_profile(kind: str, n: int, grid: RadialGrid) -> GridFunction:
    """u = log(1/r^2) (kind "log_exponential") or r^{-2/(q_n-1)} - 1 (kind "power").

    The profile solves -Δu = λ f(u) away from the origin with (λ, f) stored in
    ``meta``.
    """
    if grid.n != n:
        grid = grid.with_dimension(n)
    if kind == "log_exponential":
        if n < 3:
            raise ValueError("log profile needs n >= 3")
        lam, f = 2.0 * (n - 2), Nonlinearity.exponential()
        fn = lambda r: -2.0 * np.log(r)  # noqa: E731
    elif kind == "power":
        if n < 11:
            raise ValueError("power profile needs n >= 11")
        ce = critical_exponents(n)
        lam, f = ce.lambda_star_power, Nonlinearity.power(ce.q_n)
        a = ce.alpha_n
        fn = lambda r: r**-a - 1.0  # noqa: E731
    else:
        raise ValueError(f"unknown profile {kind!r}")
    return GridFunction.from_callable(grid, fn, singular=True, kind=kind, lam=lam, f=f)


def ball_lambda1(n: int, grid: RadialGrid | None = None) -> dict:
    """Principal Dirichlet eigenpair of -Δ on B_R, ‖φ1‖_2 = 1."""
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = build_grid(2048, "power", n) if grid is None else grid
    if grid.n != n:
        grid = grid.with_dimension(n)
    zero = GridFunction(grid, np.zeros(grid.M + 1))
    cert = principal_eigenvalue(zero, Nonlinearity.constant(0.0), 0.0)
    return {"lambda1": cert.mu1, "phi1": cert.phi1}


def log_profile_certificate(n: int, M: int = 2048, grading: str = "power") -> StabilityCertificate:
    """Certificate for u = log(1/r^2) with the origin excised below r = 1/M."""
    grid = build_grid(M, grading, n)
    u = singular_profile("log_exponential", n, grid)
    return principal_eigenvalue(u, u.meta["f"], u.meta["lam"], inner_radius=1.0 / M)


def log_profile_verdict(n: int, M: int = 2048, grading: str = "power") -> dict:
    """Stability of the log profile, re-checked at M and 2M.

    Dirichlet truncation at the inner radius raises eigenvalues, so a stable
    verdict is only reported when both resolutions agree.
    """
    coarse = log_profile_certificate(n, M, grading)
    fine = log_profile_certificate(n, 2 * M, grading)
    return {
        "n": n,
        "mu1": coarse.mu1,
        "mu1_fine": fine.mu1,
        "stable": bool(coarse.stable and fine.stable),
        "hardy_margin": hardy_margin(n),
    }


def exponent_table(n_min: int, n_max: int) -> list:
    return [critical_exponents(n).to_dict() for n in range(n_min, n_max + 1)]

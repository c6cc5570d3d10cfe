"""Second variation, principal eigenvalue and the test-function inequalities
that stable solutions satisfy.

Everything discrete here uses the same stiffness K and dual volumes W as the
solvers, so that the Rayleigh quotient of the computed eigenfunction equals
the reported eigenvalue to roundoff.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .nonlinearity import Nonlinearity
from .radial import GridError, GridFunction, density_integral

TOL_EIG = 1e-7
MAX_INVERSE_STEPS = 500


class EigenStagnation(RuntimeError):
    pass


def _finite_or_str(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


@dataclass
class EstimateReport:
    name: str
    lhs: float
    rhs: float
    params: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs

    @property
    def holds(self) -> bool:
        return bool(self.lhs <= self.rhs * (1 + 1e-9))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": _finite_or_str(float(self.lhs)),
            "rhs": _finite_or_str(float(self.rhs)),
            "ratio": _finite_or_str(float(self.ratio)),
            "holds": self.holds,
            "params": {k: _finite_or_str(v) for k, v in self.params.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class StabilityCertificate:
    mu1: float
    phi1: GridFunction
    mode: int = 0
    excised: bool = False
    iterations: int = 0
    tol: float = TOL_EIG

    @property
    def stable(self) -> bool:
        return self.mu1 >= -self.tol

    @property
    def marginal(self) -> bool:
        return abs(self.mu1) < self.tol

    @property
    def verdict(self) -> str:
        if self.marginal:
            return "marginally stable"
        return "stable" if self.stable else "unstable"


def hardy_margin(n: int) -> float:
    """(n-2)^2/4 - 2(n-2): Hardy constant minus the strength of the log-profile potential."""
    if n < 3:
        raise ValueError("hardy_margin needs n >= 3")
    return (n - 2) ** 2 / 4 - 2 * (n - 2)


def _potential(u: GridFunction, f: Nonlinearity, lam: float, mode: int) -> np.ndarray:
    """λ f'_-(u) minus the angular energy of mode k (the zeroth-order term with sign flipped)."""
    r = u.grid.nodes
    with np.errstate(invalid="ignore", over="ignore"):
        v = lam * f.dleft(u.values)
        if mode:
            with np.errstate(divide="ignore"):
                v = v - mode * (mode + u.grid.n - 2) / r**2
    return v


def _first_unknown(u: GridFunction, mode: int, excise: bool, inner_radius: float | None) -> int:
    if excise:
        first = 2
        if inner_radius is not None:
            first = max(first, int(np.searchsorted(u.grid.nodes, inner_radius, side="right")))
        if first >= u.grid.M - 1:
            raise GridError("inner radius leaves too few unknowns")
        return first
    return 1 if mode else 0


def _sturm_count(d: np.ndarray, e2: np.ndarray, x: float) -> int:
    """Number of eigenvalues below x of the symmetric tridiagonal (d, e)."""
    count = 0
    q = d[0] - x
    tiny = 1e-300
    if q < 0:
        count += 1
    for di, ei2 in zip(d[1:].tolist(), e2.tolist()):
        if q == 0.0:
            q = tiny
        q = di - x - ei2 / q
        if q < 0:
            count += 1
    return count


def _gershgorin(d: np.ndarray, e: np.ndarray) -> tuple[float, float]:
    rad = np.zeros_like(d)
    rad[:-1] += np.abs(e)
    rad[1:] += np.abs(e)
    return float(np.min(d - rad)), float(np.max(d + rad))


def _trial_upper(d, e) -> float:
    """Rayleigh quotient of a smooth positive vector: an upper bound for mu1."""
    m = d.size
    x = np.sin(np.pi * (np.arange(m) + 1.0) / (m + 1.0)) + 1e-3
    return float((x @ (d * x) + 2 * x[:-1] @ (e * x[1:])) / (x @ x))


def principal_eigenvalue(
    u: GridFunction,
    f: Nonlinearity,
    lam: float,
    mode: int = 0,
    excise_origin: bool | None = None,
    inner_radius: float | None = None,
    tol: float = TOL_EIG,
    max_iter: int = MAX_INVERSE_STEPS,
) -> StabilityCertificate:
    """Smallest μ with -Δ_h φ - λ f'_-(u) φ = μ φ, φ(R) = 0.

    The symmetric tridiagonal W^{-1/2}(K - W V)W^{-1/2} is bracketed by Sturm
    bisection from its Gershgorin lower bound, then inverse iteration with a
    shift just below μ1 yields the eigenvector.  ``mode`` k >= 1 adds the
    angular term k(k+n-2)/r^2 with φ(0) = 0; ``excise_origin`` (default: the
    profile is singular) imposes φ = 0 at the first positive node, and at
    every node r <= ``inner_radius`` when one is given.
    """
    if mode < 0:
        raise ValueError("mode must be >= 0")
    g = u.grid
    excise = u.singular if excise_origin is None else bool(excise_origin)
    if u.singular and not excise:
        raise GridError("singular profile needs the origin excised")
    s0 = _first_unknown(u, mode, excise, inner_radius)
    k = g.conductance
    w = g.volumes[:-1]
    kl = np.concatenate(([0.0], k[:-1]))
    pot = _potential(u, f, lam, mode)[:-1]
    sl = slice(s0, g.M)
    if not np.all(np.isfinite(pot[sl])):
        raise GridError("potential is not finite at the unknown nodes")
    ws = w[sl]
    d = (kl + k)[sl] / ws - pot[sl]
    e = -k[s0 : g.M - 1] / np.sqrt(ws[:-1] * ws[1:])

    lo, hi = _gershgorin(d, e)
    lo -= 1.0
    hi = min(hi, _trial_upper(d, e))
    e2 = e * e
    scale = max(1.0, abs(lo), abs(hi))
    while hi - lo > 1e-12 * max(1.0, abs(lo), abs(hi)) and hi - lo > 1e-15 * scale:
        mid = 0.5 * (lo + hi)
        if _sturm_count(d, e2, mid) >= 1:
            hi = mid
        else:
            lo = mid
    # inverse iteration, shift below μ1 so the shifted matrix stays SPD
    shift = lo - 1e-9 * max(1.0, abs(lo))
    ab = np.zeros((2, d.size))
    ab[1] = d - shift
    ab[0, 1:] = e
    try:
        chol = cholesky_banded(ab, lower=False)
    except np.linalg.LinAlgError:
        shift = lo - 1e-6 * max(1.0, abs(lo))
        ab[1] = d - shift
        chol = cholesky_banded(ab, lower=False)
    x = np.ones(d.size)
    x /= np.linalg.norm(x)
    mu = np.nan
    for it in range(1, max_iter + 1):
        y = cho_solve_banded((chol, False), x)
        x = y / np.linalg.norm(y)
        sx = d * x
        sx[:-1] += e * x[1:]
        sx[1:] += e * x[:-1]
        mu = float(x @ sx)
        if np.linalg.norm(sx - mu * x) <= 0.1 * tol * max(1.0, abs(mu)):
            break
    else:
        raise EigenStagnation(f"inverse iteration stagnated after {max_iter} steps")

    phi = np.zeros(g.M + 1)
    phi[sl] = x / np.sqrt(ws)
    if phi.sum() < 0:
        phi = -phi
    phi /= math.sqrt(g.omega * float(np.sum(w * phi[:-1] ** 2)))
    # Rayleigh quotient in flux form: the scaled diagonal d cancels two terms of
    # size ~1/h^2 near an excised origin, costing ~1e-13 relative in mu
    v = phi[sl]
    a = max(s0 - 1, 0)
    grad = math.fsum(k[a:] * np.diff(phi[a:]) ** 2)
    mu = (grad - math.fsum(ws * pot[sl] * v * v)) / math.fsum(ws * v * v)
    cert = StabilityCertificate(mu, GridFunction(g, phi), mode, excise, it, tol)
    return cert


def quadratic_form(u: GridFunction, f: Nonlinearity, lam: float, xi: GridFunction, mode: int = 0) -> float:
    """Q(ξ) = ∫ |∇ξ|^2 - λ f'_-(u) ξ^2 with the discrete forms of the eigensolver.

    ``mode`` k adds the angular energy k(k+n-2)/r^2 ξ^2.
    """
    g = u.grid
    if not xi.grid.same_as(g):
        raise GridError("grid mismatch")
    if xi.values[-1] != 0.0:
        raise ValueError("xi must vanish at r = R")
    v = xi.values.copy()
    if xi.singular:
        v[0] = 0.0
    grad = float(np.sum(g.conductance * np.diff(v) ** 2))
    pot = _potential(u, f, lam, mode)
    live = v != 0
    if not np.all(np.isfinite(pot[live])):
        raise GridError("xi is supported where the potential is infinite")
    w = g.volumes
    return g.omega * (grad - float(np.sum(w[live] * pot[live] * v[live] ** 2)))


def weighted_norm2(xi: GridFunction) -> float:
    """ω Σ w_i ξ_i^2, the L^2 norm paired with quadratic_form."""
    v = np.nan_to_num(xi.values)
    return xi.grid.omega * float(np.sum(xi.grid.volumes * v**2))


# -- test-function inequalities ---------------------------------------------


def _weight(kind: str, n: int, a: float | None, delta: float | None):
    """Return (w, r w'/w) as callables for the weight η = w ζ on B_ρ."""
    if kind == "critical":
        a = n - 2
    if kind in ("critical", "power"):
        return (lambda r: r ** (-a / 2)), (lambda r: np.full_like(r, -a / 2))
    if kind == "log10":
        return (
            lambda r: r**-4.0 * (-np.log(r)) ** (-delta / 2),
            lambda r: -4.0 + delta / (2 * (-np.log(r))),
        )
    raise ValueError(f"unknown weight {kind!r}")


def power_weight_coefficient(n: int, a: float) -> float:
    return n - 2 + a - a * a / 4


def _check_weight(n: int, kind: str, a, delta, rho, radius):
    if not 0 < rho < 2 * radius / 3:
        raise ValueError("rho must satisfy 0 < rho < 2R/3")
    if kind == "critical":
        if not 3 <= n <= 9:
            raise ValueError("critical weight needs 3 <= n <= 9")
    elif kind == "power":
        if n < 11:
            raise ValueError("power weight needs n >= 11")
        if a is None or not 8 < a < 2 * (1 + math.sqrt(n - 1)):
            raise ValueError(f"power weight needs 8 < a < {2 * (1 + math.sqrt(n - 1)):.6g}")
    elif kind == "log10":
        if n != 10:
            raise ValueError("log weight needs n = 10")
        if delta is None or not delta > 0:
            raise ValueError("log weight needs delta > 0")
        if not 1.5 * rho < 1:
            raise ValueError("log weight needs 3 rho / 2 < 1")
    else:
        raise ValueError(f"unknown weight {kind!r}")


def weighted_test_inequality(
    u: GridFunction,
    rho: float,
    weight: str = "critical",
    a: float | None = None,
    delta: float | None = None,
    samples: int = 2001,
) -> EstimateReport:
    """Stability tested with c = x·∇u and η = w(|x|) ζ, ζ the cutoff of B_ρ in B_{3ρ/2}.

    For radial u the inequality reads ∫ u'^2 [(n-2)η^2 - 2rηη' - r^2η'^2] dx <= 0.
    On B_ρ the bracket is the kernel K(r) > 0, giving the left side; on the
    annulus its negative is bounded by C ρ^{-a}, giving the right side
    C ρ^{-a} ∫_{annulus} |∇u|^2 (a = n-2 for the critical weight).
    """
    g = u.grid
    n = g.n
    _check_weight(n, weight, a, delta, rho, g.radius)
    wfun, gfun = _weight(weight, n, a, delta)
    r = g.nodes
    du = u.derivative()
    lo = u.first
    rr = r[lo:]

    def kernel(x):
        gx = gfun(x)
        return wfun(x) ** 2 * ((n - 2) - 2 * gx - gx * gx)

    # left side: ∫_{B_ρ} K(r) u'^2 dx, density K r^{n-1} u'^2
    dens = np.zeros_like(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        kr = kernel(rr) * rr ** (n - 1)
    kr = np.where(rr > 0, kr, 0.0)
    dens[lo:] = kr * du[lo:] ** 2
    lhs = density_integral(g, dens, 0.0, rho, skip_origin=u.singular)

    # annulus: D(r) = -[(n-2)η^2 - 2rηη' - r^2η'^2], η = w ζ
    def annulus_d(x):
        z = (1.5 * rho - x) / (0.5 * rho)
        rz = -x / (0.5 * rho)  # r ζ'
        wx, gx = wfun(x), gfun(x)
        reta = wx * (gx * z + rz)  # r η'
        eta = wx * z
        return -((n - 2) * eta**2 - 2 * eta * reta - reta**2)

    xs = np.linspace(rho, 1.5 * rho, samples)
    inner = r[(r > rho) & (r < 1.5 * rho)]
    dvals = annulus_d(np.concatenate((xs, inner)))
    expo = n - 2 if weight == "critical" else (a if weight == "power" else 8.0)
    const = max(float(np.max(dvals)) * rho**expo, 0.0)
    energy = density_integral(g, np.nan_to_num(du**2 * r ** (n - 1)), rho, 1.5 * rho)
    rhs = const * rho ** (-expo) * energy

    dens_ann = np.zeros_like(r)
    sel = (r >= rho) & (r <= 1.5 * rho)
    dens_ann[sel] = annulus_d(r[sel]) * du[sel] ** 2 * r[sel] ** (n - 1)
    exact = density_integral(g, dens_ann, rho, 1.5 * rho)

    params = {"n": n, "rho": rho, "weight": weight, "C": const, "cutoff_rhs": exact, "exponent": expo}
    if weight == "critical":
        params["coefficient"] = (n - 2) * (10 - n) / 4
    elif weight == "power":
        params["a"] = a
        params["coefficient"] = power_weight_coefficient(n, a)
    else:
        params["delta"] = delta
    name = {"critical": "weighted_critical", "power": "weighted_power", "log10": "weighted_log10"}[weight]
    return EstimateReport(name, lhs, rhs, params)


def curvature_quantity(u: GridFunction) -> np.ndarray:
    """Nodal 𝒜^2 = (n-1) u'^2 / r^2 for radial u (origin by the limit u''(0)^2)."""
    g = u.grid
    r = g.nodes
    du = u.derivative()
    out = np.full_like(r, np.nan)
    out[1:] = (g.n - 1) * (du[1:] / r[1:]) ** 2
    if not u.singular:
        # u'(r)/r -> u''(0): quadratic extrapolation from the next nodes
        c = np.polyfit(r[1:4], du[1:4] / r[1:4], 2)
        out[0] = (g.n - 1) * np.polyval(c, 0.0) ** 2
    return out


def curvature_test_inequality(u: GridFunction, eta: GridFunction) -> EstimateReport:
    """∫ 𝒜^2 η^2 <= ∫ |∇u|^2 |∇η|^2 for radial u and cutoff η with η(R) = 0."""
    g = u.grid
    if not eta.grid.same_as(g):
        raise GridError("grid mismatch")
    if eta.values[-1] != 0.0:
        raise ValueError("eta must vanish at r = R")
    n = g.n
    r = g.nodes
    du = u.derivative()
    deta = eta.derivative()
    lo = u.first
    dens_l = np.zeros_like(r)
    dens_l[1:] = (n - 1) * du[1:] ** 2 * eta.values[1:] ** 2 * r[1:] ** (n - 3)
    dens_r = np.zeros_like(r)
    dens_r[lo:] = du[lo:] ** 2 * deta[lo:] ** 2 * r[lo:] ** (n - 1)
    lhs = density_integral(g, dens_l, skip_origin=u.singular)
    rhs = density_integral(g, dens_r, skip_origin=u.singular)
    return EstimateReport("curvature", lhs, rhs, {"n": n})

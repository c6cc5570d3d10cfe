"""Command line front-end: ``gelfand <subcommand> --config run.toml``.

Exit codes: 0 success, 1 solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .continuation import ContinuationSettings, NoFold, extremal_profile, minimal_solution, trace_branch
from .estimates import (
    DecayInput,
    MorreyParams,
    affine_gap,
    decay_check,
    l1_bound_check,
    lebesgue_norm,
    morrey_norm,
    pohozaev_terms,
    random_decay_instance,
)
from .nonlinearity import FAMILIES, Nonlinearity
from .oracles import ball_lambda1, critical_exponents, exponent_table
from .radial import GridError, GridFunction, build_grid
from .solvers import Divergence, NonConvergence, Problem, newton_solve
from .stability import EigenStagnation, EstimateReport, curvature_test_inequality, principal_eigenvalue, weighted_test_inequality

log = logging.getLogger("gelfand")

SUBCOMMANDS = ("solve", "branch", "spectrum", "verify", "atlas", "oracle")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n: int = 3
    family: str = "exp"
    q: float | None = None
    A: float | None = None
    B: float | None = None
    c: float | None = None
    M: int = 2048
    grading: str = "power"
    g: float = 2.0
    R: float = 1.0
    tol: float = 1e-10
    lam: float | None = None
    lambda_frac: float = 0.9
    ds: float = 0.05
    max_points: int = 400
    sup_limit: float = 50.0
    stop_after_fold: int | None = 3
    mu1: bool = True
    mode: int = 0
    rho: float = 0.3
    alpha: float = 0.1
    gamma: float = 0.1
    a: float | None = None
    delta: float = 0.1
    p: float | None = None
    beta: float | None = None
    center_samples: int = 33
    ratio_bound: float = 100.0
    pohozaev_tol: float = 1e-4
    L: float = 2.0
    seed: int = 0
    n_min: int | None = None
    n_max: int | None = None
    families: list = field(default_factory=lambda: ["exp"])

    def nonlinearity(self, family: str | None = None) -> Nonlinearity:
        fam = family or self.family
        if fam == "exp":
            return Nonlinearity.exponential()
        if fam == "power":
            return Nonlinearity.power(self.q)
        if fam == "affine":
            return Nonlinearity.affine(self.A, self.B)
        return Nonlinearity.constant(1.0 if self.c is None else self.c)

    def grid(self, n: int | None = None):
        return build_grid(self.M, self.grading, self.n if n is None else n, self.R, self.g)

    def settings(self) -> ContinuationSettings:
        return ContinuationSettings(
            ds=self.ds, max_points=self.max_points, sup_limit=self.sup_limit,
            tol=self.tol, stop_after_fold=self.stop_after_fold,
        )


_KEYS = {f.name for f in fields(RunConfig)} - {"lam"} | {"lambda"}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    if "lambda" in raw:
        raw["lam"] = raw.pop("lambda")
    types = {f.name: f.type for f in fields(RunConfig)}
    for key, val in raw.items():
        t = types[key]
        if "int" in t and "float" not in t and (isinstance(val, bool) or not isinstance(val, int)):
            raise ConfigError(f"{key}: expected an integer")
        if "float" in t and (isinstance(val, bool) or not isinstance(val, (int, float))):
            raise ConfigError(f"{key}: expected a number")
        if t == "bool" and not isinstance(val, bool):
            raise ConfigError(f"{key}: expected true or false")
    cfg = RunConfig(**raw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    def bad(key, msg):
        raise ConfigError(f"{key}: {msg}")

    if cfg.n < 2:
        bad("n", "dimension below 2")
    if cfg.M < 8:
        bad("M", "need at least 8 intervals")
    if cfg.grading not in ("uniform", "power"):
        bad("grading", "expected 'uniform' or 'power'")
    if cfg.grading == "power" and not 1 <= cfg.g <= 4:
        bad("g", "grading exponent outside [1, 4]")
    if not cfg.R > 0:
        bad("R", "radius must be positive")
    if not cfg.tol > 0:
        bad("tol", "must be positive")
    if cfg.family not in FAMILIES:
        bad("family", f"expected one of {', '.join(FAMILIES)}")
    for fam in [cfg.family] + list(cfg.families):
        if fam not in FAMILIES:
            bad("families", f"unknown family {fam!r}")
        try:
            cfg.nonlinearity(fam)
        except (TypeError, ValueError) as exc:
            key = {"power": "q", "affine": "A"}.get(fam, "c")
            bad(key, str(exc))
    if cfg.lam is not None and not (math.isfinite(cfg.lam) and cfg.lam >= 0):
        bad("lambda", "must be finite and >= 0")
    if not 0 < cfg.lambda_frac < 1:
        bad("lambda_frac", "must lie in (0, 1)")
    if not cfg.ds > 0:
        bad("ds", "must be positive")
    if cfg.max_points < 2:
        bad("max_points", "must be >= 2")
    if not 0 < cfg.alpha <= 1:
        bad("alpha", "must lie in (0, 1]")
    if not cfg.gamma > 0:
        bad("gamma", "must be positive")
    if not 0 < cfg.rho < 2 * cfg.R / 3:
        bad("rho", "must satisfy 0 < rho < 2R/3")
    if cfg.mode < 0:
        bad("mode", "must be >= 0")
    if cfg.center_samples < 8:
        bad("center_samples", "must be >= 8")
    if not cfg.L > 0:
        bad("L", "must be positive")
    if cfg.n_min is not None and cfg.n_max is not None and cfg.n_min > cfg.n_max:
        bad("n_min", "exceeds n_max")
    if cfg.n_min is not None and cfg.n_min < 2:
        bad("n_min", "dimension below 2")


# -- output helpers ---------------------------------------------------------


def _txt(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, dict):
        return {k: _txt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_txt(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


class Outputs:
    """Tracks written files so a failed run leaves nothing behind."""

    def __init__(self, out: Path):
        self.out = out
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(_txt(obj), indent=2) + "\n")
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _num(v) for v in row])
        return p

    def discard(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


# -- subcommands ------------------------------------------------------------


def _need_lambda(cfg: RunConfig) -> float:
    if cfg.lam is None:
        raise ConfigError("lambda: required by this subcommand")
    return cfg.lam


def run_solve(cfg: RunConfig, out: Outputs) -> dict:
    p = Problem(cfg.grid(), cfg.nonlinearity(), _need_lambda(cfg))
    sol = newton_solve(p, tol=cfg.tol)
    csv_path = out.path("solution.csv")
    sol.u.to_csv(csv_path)
    rec = sol.record(csv_path.name)
    out.json("solution.json", rec)
    return rec


def run_branch(cfg: RunConfig, out: Outputs) -> dict:
    branch = trace_branch(cfg.grid(), cfg.nonlinearity(), cfg.settings())
    if cfg.mu1:
        branch.fill_mu1()
    path = out.path("branch.csv")
    branch.to_csv(path)
    fold = branch.fold
    rec = {"n": cfg.n, "family": cfg.family, "points": len(branch.points)}
    if fold is None:
        rec["fold"] = None
    else:
        rec["fold"] = {"lambda_star": fold.lambda_star, "sup_at_fold": fold.sup_at_fold,
                       "index": fold.index, "s_star": fold.s_star}
    out.json("fold.json", rec)
    return rec


def _solution_for(cfg: RunConfig):
    """Solution at ``lambda`` if given, else at lambda_frac·λ⋆ from a traced branch."""
    grid, f = cfg.grid(), cfg.nonlinearity()
    if cfg.lam is not None:
        return newton_solve(Problem(grid, f, cfg.lam), tol=cfg.tol), None
    branch = trace_branch(grid, f, cfg.settings())
    if branch.fold is None:
        raise NoFold("no fold on the traced branch; give lambda explicitly")
    return minimal_solution(branch, cfg.lambda_frac, cfg.tol), branch


def run_spectrum(cfg: RunConfig, out: Outputs) -> dict:
    sol, _ = _solution_for(cfg)
    p = sol.problem
    cert = principal_eigenvalue(sol.u, p.nonlinearity, p.lam, mode=cfg.mode)
    csv_path = out.path("phi1.csv")
    cert.phi1.to_csv(csv_path)
    rec = {"n": cfg.n, "family": cfg.family, "lambda": p.lam, "mode": cfg.mode, "mu1": cert.mu1,
           "stable": cert.stable, "verdict": cert.verdict, "iterations": cert.iterations,
           "phi1_csv": csv_path.name}
    out.json("spectrum.json", rec)
    return rec


def _weight_choice(cfg: RunConfig) -> dict:
    n = cfg.n
    if 3 <= n <= 9:
        return {"weight": "critical"}
    if n == 10:
        return {"weight": "log10", "delta": cfg.delta}
    if n >= 11:
        a = cfg.a if cfg.a is not None else 0.5 * (8 + 2 * (1 + math.sqrt(n - 1)))
        return {"weight": "power", "a": a}
    return {}


def _morrey_params(cfg: RunConfig) -> MorreyParams:
    if cfg.p is not None:
        p = cfg.p
    elif cfg.n >= 11:
        p = critical_exponents(cfg.n).p_n - 0.5
    else:
        p = 2.0 * cfg.n
    beta = cfg.beta if cfg.beta is not None else 2 + 4 / (p - 2)
    return MorreyParams(p, min(beta, cfg.n))


def verify_reports(cfg: RunConfig) -> list:
    sol, _ = _solution_for(cfg)
    p = sol.problem
    u, grid = sol.u, p.grid
    reports = []
    wc = _weight_choice(cfg)
    if wc:
        reports.append(weighted_test_inequality(u, cfg.rho, **wc))
    eta = GridFunction.from_callable(grid, lambda r: 1 - r / grid.radius)
    eta.values[-1] = 0.0
    reports.append(curvature_test_inequality(u, eta))

    l1 = lebesgue_norm(u, 1.0)
    half = grid.radius / 2
    energy = lebesgue_norm(u, 2.0, half, gradient=True)
    reports.append(EstimateReport("energy_vs_l1", energy, cfg.ratio_bound * l1,
                                  {"n": cfg.n, "envelope": cfg.ratio_bound, "constant": energy / l1 if l1 else 0.0}))

    t1, t2, t3 = pohozaev_terms(sol)
    top = max(abs(t1), abs(t2), abs(t3))
    reports.append(EstimateReport("pohozaev", abs(t1 - t2 + t3), cfg.pohozaev_tol * top,
                                  {"n": cfg.n, "boundary": t1, "potential": t2, "energy": t3}))

    lam1 = ball_lambda1(cfg.n, grid)["lambda1"]
    A = 2 * lam1
    B = affine_gap(A, p.nonlinearity, p.lam)
    reports.append(l1_bound_check(sol, A, B))

    mp = _morrey_params(cfg)
    mval = morrey_norm(u, mp, cfg.center_samples)
    reports.append(EstimateReport("morrey_vs_l1", mval, cfg.ratio_bound * l1,
                                  {"n": cfg.n, "p": mp.p, "beta": mp.beta, "envelope": cfg.ratio_bound}))

    rng = np.random.default_rng(cfg.seed)
    inst = random_decay_instance(rng, cfg.L)
    dc = decay_check(inst)
    worst = float(np.max(inst.b / (dc["Cc"] * inst.M_bound * dc["theta"] ** np.arange(inst.b.size))))
    reports.append(EstimateReport("decay_demo", worst, 1.0,
                                  {"L": cfg.L, "theta": dc["theta"], "Cc": dc["Cc"], "hyp_ok": dc["hyp_ok"]}))
    return reports, p.lam


def run_verify(cfg: RunConfig, out: Outputs) -> dict:
    reports, lam = verify_reports(cfg)
    frac = cfg.lambda_frac if cfg.lam is None else None
    out.json("reports.json", [r.to_dict() for r in reports])
    rows = [[r.name, cfg.n, cfg.family, frac, r.lhs, r.rhs, r.ratio, r.holds] for r in reports]
    out.csv("summary.csv", ["name", "n", "family", "lambda_frac", "lhs", "rhs", "ratio", "holds"], rows)
    return {"reports": len(reports), "all_hold": all(r.holds for r in reports), "lambda": lam}


def atlas_cell(cfg: RunConfig, n: int, family: str) -> list:
    grid = cfg.grid(n)
    f = cfg.nonlinearity(family)
    branch = trace_branch(grid, f, cfg.settings())
    if branch.fold is None:
        return [n, family, None, None, None, None]
    sol = minimal_solution(branch, 0.9, cfg.tol)
    mu = principal_eigenvalue(sol.u, f, sol.problem.lam).mu1
    ext = extremal_profile(branch)
    w = lebesgue_norm(ext, 2.0 + cfg.gamma, gradient=True)
    return [n, family, branch.fold.lambda_star, branch.fold.sup_at_fold, mu, w]


def _atlas_job(args):
    cfg, n, fam = args
    return atlas_cell(cfg, n, fam)


def run_atlas(cfg: RunConfig, out: Outputs, workers: int = 1) -> dict:
    lo = cfg.n_min if cfg.n_min is not None else 3
    hi = cfg.n_max if cfg.n_max is not None else 12
    jobs = [(cfg, n, fam) for fam in cfg.families for n in range(lo, hi + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_atlas_job, jobs))
    else:
        rows = [_atlas_job(j) for j in jobs]
    header = ["n", "family", "lambda_star", "sup_at_fold", "mu1_at_90pct", "w12g_extremal"]
    out.csv("atlas.csv", header, rows)
    return {"cells": len(rows)}


def run_oracle(cfg: RunConfig, out: Outputs) -> dict:
    lo = cfg.n_min if cfg.n_min is not None else 10
    hi = cfg.n_max if cfg.n_max is not None else 12
    if lo < 10:
        raise ConfigError("n_min: critical exponents need n >= 10")
    table = exponent_table(lo, hi)
    out.json("oracle.json", table)
    print(json.dumps(_txt(table)))
    return {"rows": len(table)}


def dispatch(cfg: RunConfig, subcommand: str, out_dir=".", workers: int = 1) -> int:
    if subcommand not in SUBCOMMANDS:
        log.error("unknown subcommand %s", subcommand)
        return 2
    out = Outputs(Path(out_dir))
    try:
        if subcommand == "solve":
            rec = run_solve(cfg, out)
        elif subcommand == "branch":
            rec = run_branch(cfg, out)
        elif subcommand == "spectrum":
            rec = run_spectrum(cfg, out)
        elif subcommand == "verify":
            rec = run_verify(cfg, out)
        elif subcommand == "atlas":
            rec = run_atlas(cfg, out, workers)
        else:
            rec = run_oracle(cfg, out)
    except ConfigError as exc:
        out.discard()
        log.error("config error: %s", exc)
        return 2
    except (NonConvergence, Divergence, EigenStagnation, NoFold) as exc:
        out.discard()
        log.error("solver failure: %s", exc)
        return 1
    except (ValueError, GridError) as exc:
        out.discard()
        log.error("invalid input: %s", exc)
        return 2
    except BaseException:
        out.discard()
        raise
    if subcommand != "oracle":
        print(json.dumps(_txt(rec)))
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gelfand", description="Stable solutions of -Δu = λ f(u) on balls.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--workers", type=int, default=1, help="parallel cells for atlas")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    if args.workers < 1:
        log.error("--workers must be >= 1")
        return 2
    return dispatch(cfg, args.subcommand, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())

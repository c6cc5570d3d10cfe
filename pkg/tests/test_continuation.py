import math

import numpy as np
import pytest

from gelfand.continuation import (
    Branch,
    BranchPoint,
    ContinuationSettings,
    NoFold,
    detect_fold,
    extremal_profile,
    minimal_solution,
    trace_branch,
)
from gelfand.nonlinearity import Nonlinearity
from gelfand.radial import GridFunction, build_grid
from gelfand.stability import principal_eigenvalue


def synthetic(lams, s):
    g = build_grid(8, "uniform", 3)
    pts = [BranchPoint(float(l), GridFunction(g, np.zeros(9)), float(si), float(si)) for l, si in zip(lams, s)]
    return Branch(g, Nonlinearity.exponential(), pts)


def test_detect_fold_parabola_exact():
    s = np.arange(0, 2.0001, 0.25)
    fold = detect_fold(synthetic(3 - (s - 1) ** 2, s))
    assert math.isclose(fold.lambda_star, 3.0, rel_tol=0, abs_tol=1e-12)
    assert fold.index == 4
    assert math.isclose(fold.s_star, 1.0, abs_tol=1e-12)


def test_detect_fold_monotone_raises():
    s = np.linspace(0, 1, 9)
    with pytest.raises(NoFold):
        detect_fold(synthetic(s, s))


def test_constant_branch_is_exact_line():
    g = build_grid(128, "power", 3)
    b = trace_branch(g, Nonlinearity.constant(1.0), ContinuationSettings(max_points=30))
    assert b.fold is None
    for p in b.points:
        exact = p.lam * (1 - g.nodes**2) / 6
        assert np.max(np.abs(p.u.values - exact)) < 1e-9 * max(1.0, p.lam)
    with pytest.raises(NoFold):
        detect_fold(b)


def test_fold_reproducible_across_meshes():
    stars = []
    for M in (1024, 2048, 4096):
        b = trace_branch(build_grid(M, "power", 3), Nonlinearity.exponential(), ContinuationSettings(stop_after_fold=3))
        stars.append(b.fold.lambda_star)
    assert len({f"{x:.4g}" for x in stars}) == 1


def test_stability_exchange_at_fold(get_branch):
    b = get_branch(3)
    b.fill_mu1()
    k = b.fold.index
    before, at, after = b.points[:k], b.points[k], b.points[k + 1 :]
    assert before == b.minimal()
    assert all(p.mu1 > 0 for p in before)
    assert all(p.mu1 < 0 for p in after)
    mus = [p.mu1 for p in before]
    assert min(mus) == mus[-1]
    # the point at the discrete maximum is within one step of the fold
    assert abs(at.mu1) < mus[-1]


def test_minimal_branch_ordered(get_branch):
    pts = get_branch(5).minimal()
    for a, b in zip(pts, pts[1:]):
        assert b.lam > a.lam
        assert np.all(b.u.values >= a.u.values - 1e-12)


def test_minimal_solution_is_stable(get_branch):
    b = get_branch(4)
    s = minimal_solution(b, 0.9)
    assert math.isclose(s.problem.lam, 0.9 * b.fold.lambda_star)
    assert principal_eigenvalue(s.u, b.nonlinearity, s.problem.lam).mu1 > 0


def test_mu1_lazy(get_branch):
    b = trace_branch(build_grid(64, "power", 3), Nonlinearity.exponential(), ContinuationSettings(stop_after_fold=2))
    assert all(p.mu1 is None for p in b.points)
    b.fill_mu1([0])
    assert b.points[0].mu1 is not None and b.points[1].mu1 is None


def test_branch_csv(tmp_path, get_branch):
    b = trace_branch(build_grid(64, "power", 3), Nonlinearity.exponential(), ContinuationSettings(stop_after_fold=2))
    b.fill_mu1([0])
    lines = b.to_csv(tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "s,lambda,sup_norm,mu1"
    assert len(lines) == len(b.points) + 1
    assert lines[2].endswith(",")


def test_extremal_log_profile_n10():
    b = trace_branch(build_grid(2048, "power", 10), Nonlinearity.exponential(), ContinuationSettings(stop_after_fold=3))
    e = extremal_profile(b)
    r = np.linspace(0.1, 0.9, 81)
    ref = -2 * np.log(r)
    assert np.max(np.abs(e(r) - ref) / ref) < 0.05


def test_extremal_power_profile_n11(get_branch, q11):
    b = get_branch(11, "power", q11, M=2048)
    e = extremal_profile(b)
    r = np.linspace(0.1, 0.9, 81)
    ref = r ** (-2 / (q11 - 1)) - 1
    assert np.max(np.abs(e(r) - ref) / ref) < 0.05


def test_extremal_bounded_n3():
    sups = []
    for M in (2048, 4096):
        b = trace_branch(build_grid(M, "power", 3), Nonlinearity.exponential(), ContinuationSettings(stop_after_fold=3))
        sups.append(extremal_profile(b).sup())
    assert abs(sups[1] / sups[0] - 1) < 0.02


def test_settings_validation():
    with pytest.raises(ValueError):
        ContinuationSettings(ds=0)
    with pytest.raises(ValueError):
        ContinuationSettings(max_points=1)

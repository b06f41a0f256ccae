import math

import numpy as np
import pytest

from crra_alm.duality import build_strategy, eval_h, solve_kappa
from crra_alm.model import example_config
from crra_alm.simulate import Consumption, Policy, SimulationSpec
from crra_alm.verify import (CONDITION_TOL, PerturbationGrid, budget_identity, check_conditions,
                             objective_dominance, perturbations, run_verification)

SPEC = SimulationSpec(n_paths=20_000, n_steps=128, seed=0)


def solved(family="gamma", **kw):
    cfg = example_config(family, **kw)
    return cfg, solve_kappa(cfg).strategy


@pytest.mark.parametrize("family, rho, eta", [("gamma", -0.6, 1.5), ("gamma", -0.6, 0.15),
                                              ("pareto", 0.3, 1.2), ("pareto", -0.6, 0.35)])
def test_conditions_hold_at_optimum(family, rho, eta):
    cfg, strategy = solved(family, rho=rho, eta=eta)
    res = check_conditions(cfg, strategy)
    assert res.max() <= CONDITION_TOL
    assert all(math.isfinite(v) for v in res.as_dict().values())


def test_corrupted_kappa_shows_in_feasibility():
    cfg, strategy = solved()
    bumped = build_strategy(cfg, strategy.kappa + 0.01)
    res = check_conditions(cfg, bumped)
    step = 1e-6
    slope = (eval_h(cfg, strategy.kappa + step) - eval_h(cfg, strategy.kappa - step)) / (2 * step)
    assert res.feasibility == pytest.approx(abs(eval_h(cfg, strategy.kappa + 0.01)), abs=1e-9)
    assert res.feasibility == pytest.approx(abs(slope) * 0.01, rel=0.05)
    assert res.feasibility > CONDITION_TOL


def test_corrupted_pi_shows_in_portfolio_condition():
    cfg, strategy = solved()
    res = check_conditions(cfg, build_strategy(cfg, strategy.kappa, pi=strategy.pi + 0.01))
    assert res.portfolio == pytest.approx(0.01 * 0.21, rel=1e-9)


@pytest.mark.parametrize("rho", [-1.0, 1.0])
def test_perfect_correlation_diffusion_control(rho):
    cfg, strategy = solved(rho=rho, eta=1.5)
    assert strategy.controls.phi1 == 0.0
    assert check_conditions(cfg, strategy).diffusion_control == 0.0


def test_conditions_do_not_depend_on_initial_wealth():
    cfg, strategy = solved()
    rich, rich_strategy = solved(initial_wealth=25.0)
    assert check_conditions(cfg, strategy) == check_conditions(rich, rich_strategy)


# -- budget identity ---------------------------------------------------------------

def test_budget_identity_at_optimum():
    cfg, strategy = solved()
    est = budget_identity(cfg, strategy, SPEC)
    assert abs(est.mean) <= 3 * est.std_error


def test_budget_for_perturbed_portfolio():
    cfg, strategy = solved()
    policy = Policy(strategy.pi + 0.25 * abs(strategy.pi), strategy.kappa, Consumption.DUAL_OPTIMAL)
    est = budget_identity(cfg, strategy, SPEC, policy)
    assert est.mean <= 3 * est.std_error


def test_budget_deterministic_case():
    cfg = example_config(mu=0.07, lam=0.0)
    strategy = build_strategy(cfg, 0.0)
    est = budget_identity(cfg, strategy, SimulationSpec(n_paths=64, n_steps=8), Policy(0.0, 0.0))
    assert est.mean == pytest.approx(0.0, abs=1e-14)


def test_budget_standard_error_halves():
    cfg, strategy = solved()
    ses = [budget_identity(cfg, strategy, SimulationSpec(n_paths=n, n_steps=64, seed=1)).std_error
           for n in (4_000, 16_000, 64_000)]
    for a, b in zip(ses, ses[1:]):
        assert a / b == pytest.approx(2.0, rel=0.2)


# -- dominance ------------------------------------------------------------------------

def test_perturbation_labels_and_skips():
    _, strategy = solved(eta=0.15)
    entries = list(perturbations(strategy, PerturbationGrid(), 3.0))
    labels = [label for label, _ in entries]
    assert labels == ["pi-25%", "pi-10%", "pi+10%", "pi+25%", "kappa-25%", "kappa-10%", "kappa+10%",
                      "kappa+25%", "consumption x0.75", "consumption x1.25"]
    skipped = [label for label, policy in entries if policy is None]
    assert skipped == ["kappa+10%", "kappa+25%"]


def test_zero_perturbation_difference_is_exact():
    cfg, strategy = solved()
    grid = PerturbationGrid(pi_offsets=(0.0,), kappa_offsets=(0.0,), consumption_scales=(1.0,))
    report = objective_dominance(cfg, strategy, grid, SimulationSpec(n_paths=2000, n_steps=32))
    for diff in report.differences.values():
        assert diff.mean == 0.0 and diff.std_error == 0.0
    assert report.passed


def test_dominance_gamma_example():
    cfg, strategy = solved()
    report = objective_dominance(cfg, strategy, None, SPEC)
    assert report.passed, report.summary()
    assert len(report.differences) == 10


def test_log_utility_consumption_dominates():
    cfg, strategy = solved(rho=0.0, eta=1.0)
    grid = PerturbationGrid(pi_offsets=(), kappa_offsets=(), consumption_scales=(0.75, 1.25))
    report = objective_dominance(cfg, strategy, grid, SPEC)
    assert report.passed, report.summary()
    assert all(d.mean > 0 for d in report.differences.values())


def test_dominance_without_common_random_numbers():
    cfg, strategy = solved()
    spec = SimulationSpec(n_paths=20_000, n_steps=64, common_random_numbers=False)
    report = objective_dominance(cfg, strategy, PerturbationGrid(kappa_offsets=(), consumption_scales=()), spec)
    assert report.passed, report.summary()


def test_negative_control_fails():
    cfg, strategy = solved()
    wrong = build_strategy(cfg, strategy.kappa + 0.01, pi=strategy.pi)
    report = run_verification(cfg, wrong, SPEC)
    assert not report.passed
    failed = {c.name for c in report.checks if not c.passed}
    assert "condition feasibility" in failed
    assert any(name.startswith("dominance") for name in failed)


def test_full_report_rows():
    cfg, strategy = solved(eta=0.15)
    report = run_verification(cfg, strategy, SimulationSpec(n_paths=4000, n_steps=32))
    rows = report.rows()
    assert [r["status"] for r in rows if r["check"].startswith("skipped")] == ["skipped", "skipped"]
    assert all(np.isfinite(r["value"]) for r in rows if r["status"] != "skipped")
    assert report.summary().splitlines()[-1].endswith("checks passed")

"""Checks that a solved strategy is optimal.

Three families of checks:

* the first-order conditions linking ``(pi, kappa)`` to the dual controls,
  and dual feasibility of those controls;
* the budget identity ``E[H_T V_T + int H gamma dt] = x`` at the optimum,
  and ``<= x`` for perturbed strategies;
* objective dominance: with common random numbers, the paired difference
  ``J(optimal) - J(perturbed)`` must not be significantly negative for any
  entry of a perturbation grid.

Grid dominance is evidence of optimality, not a proof: the admissible class
is far larger than any finite grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import claims
from .duality import DualControls, OptimalStrategy
from .model import ModelConfig
from .simulate import (Consumption, McEstimate, Policy, SimulationSpec, realized_utility,
                       simulate_many)

CONDITION_TOL = 1e-9
# rounding floor for zero-variance estimators (log utility makes the budget
# accumulator constant across paths)
FP_FLOOR = 1e-10


@dataclass(frozen=True)
class PerturbationGrid:
    pi_offsets: tuple[float, ...] = (-0.25, -0.10, 0.10, 0.25)
    kappa_offsets: tuple[float, ...] = (-0.25, -0.10, 0.10, 0.25)
    consumption_scales: tuple[float, ...] = (0.75, 1.25)


@dataclass(frozen=True)
class ConditionResiduals:
    portfolio: float
    diffusion_control: float
    jump_control: float
    feasibility: float

    def as_dict(self) -> dict[str, float]:
        return dict(vars(self))

    def max(self) -> float:
        return max(self.as_dict().values())


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    condition_residuals: ConditionResiduals | None = None
    budget_residuals: dict[str, McEstimate] = field(default_factory=dict)
    objective_estimates: dict[str, McEstimate] = field(default_factory=dict)
    differences: dict[str, McEstimate] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def rows(self) -> list[dict]:
        return [
            {"check": c.name, "value": c.value, "threshold": c.threshold,
             "status": "pass" if c.passed else "fail", "detail": c.detail}
            for c in self.checks
        ] + [
            {"check": f"skipped:{label}", "value": float("nan"), "threshold": float("nan"),
             "status": "skipped", "detail": "perturbed kappa violates kappa*c < 1"}
            for label in self.skipped
        ]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"[{flag}] {c.name}: {c.value:.6g} (threshold {c.threshold:.6g}) {c.detail}".rstrip())
        for label in self.skipped:
            lines.append(f"[SKIP] {label}: infeasible perturbation")
        n_fail = sum(not c.passed for c in self.checks)
        lines.append(f"{len(self.checks) - n_fail}/{len(self.checks)} checks passed")
        return "\n".join(lines)


@dataclass(frozen=True)
class _ClaimTimesJumpControl:
    controls: DualControls

    @property
    def kappa(self):
        return self.controls.kappa

    def __call__(self, y, slack=None):
        y = np.asarray(y, dtype=float)
        if slack is None:
            return y * self.controls.phi2(y)
        return y * slack ** (-self.controls.eta)


def check_conditions(config: ModelConfig, strategy: OptimalStrategy, n_grid: int = 201) -> ConditionResiduals:
    """Absolute residuals of the three CRRA first-order conditions and of dual feasibility."""
    l, m = config.liability, config.market
    eta = config.preferences.eta
    theta = config.theta
    ctrl = strategy.controls
    root = math.sqrt(max(0.0, 1.0 - l.rho**2))

    portfolio = strategy.pi * m.sigma - l.rho * l.b * strategy.kappa - theta / eta
    diffusion = ctrl.phi1 + eta * l.b * strategy.kappa * root
    y = np.linspace(0.0, config.claims.limit, n_grid)
    jump = np.max(np.abs((1.0 - strategy.kappa * y) - ctrl.phi2(y) ** (-1.0 / eta)))
    weighted = claims.expect(config.claims, _ClaimTimesJumpControl(ctrl)) if l.lam else 0.0
    feasibility = l.premium - l.a + l.b * (l.rho * theta + root * ctrl.phi1) - l.lam * weighted
    return ConditionResiduals(abs(portfolio), abs(diffusion), float(jump), abs(feasibility))


def budget_identity(config: ModelConfig, strategy: OptimalStrategy, spec: SimulationSpec,
                    policy: Policy | None = None) -> McEstimate:
    """Estimate ``E[H_T V_T + int_0^T H_t gamma_t dt] - x``; the default policy
    is the optimum with the dual consumption stream."""
    policy = policy or Policy.optimal(strategy)
    ens = simulate_many(config, [policy], spec, strategy)[0]
    return McEstimate.from_samples(ens.budget_accumulator - config.preferences.initial_wealth,
                                   ens.antithetic)


def _pct(x: float) -> str:
    return f"{x * 100:+.0f}%"


def perturbations(strategy: OptimalStrategy, grid: PerturbationGrid, limit: float):
    """Yield ``(label, policy)`` for feasible grid entries and ``(label, None)`` for skipped ones.

    Offsets are relative: ``pi + offset * |pi|`` (absolute if ``pi == 0``),
    likewise for ``kappa``; consumption scales multiply the optimal rate.
    """
    def shifted(value, off):
        return value + off * (abs(value) if value != 0 else 1.0)

    for off in grid.pi_offsets:
        yield f"pi{_pct(off)}", Policy(shifted(strategy.pi, off), strategy.kappa, Consumption.FEEDBACK)
    for off in grid.kappa_offsets:
        k = shifted(strategy.kappa, off)
        yield f"kappa{_pct(off)}", (Policy(strategy.pi, k, Consumption.FEEDBACK) if k * limit < 1 else None)
    for s in grid.consumption_scales:
        yield f"consumption x{s:g}", Policy(strategy.pi, strategy.kappa, Consumption.FEEDBACK, s)


def objective_dominance(config: ModelConfig, strategy: OptimalStrategy,
                        grid: PerturbationGrid | None, spec: SimulationSpec,
                        report: VerificationReport | None = None) -> VerificationReport:
    """Compare the strategy with every grid perturbation on common random numbers.

    Every strategy consumes through the optimal consumption-to-wealth ratio
    (times its scale), which keeps perturbed wealth positive.  Budget
    residuals are recorded for each entry as well.
    """
    grid = grid or PerturbationGrid()
    report = report or VerificationReport()
    entries = [("optimal", Policy(strategy.pi, strategy.kappa, Consumption.FEEDBACK))]
    for label, policy in perturbations(strategy, grid, config.claims.limit):
        if policy is None:
            report.skipped.append(label)
        else:
            entries.append((label, policy))

    if spec.common_random_numbers:
        ensembles = simulate_many(config, [p for _, p in entries], spec, strategy)
    else:
        ensembles = [simulate_many(config, [p], replace(spec, seed=(spec.seed + i) % 2**64), strategy)[0]
                     for i, (_, p) in enumerate(entries)]

    x = config.preferences.initial_wealth
    utilities = {}
    for (label, _), ens in zip(entries, ensembles):
        utilities[label] = realized_utility(config, ens)
        report.objective_estimates[label] = McEstimate.from_samples(utilities[label], ens.antithetic)
        report.budget_residuals[label] = McEstimate.from_samples(ens.budget_accumulator - x, ens.antithetic)

    base = utilities["optimal"]
    for label, _ in entries[1:]:
        if spec.common_random_numbers:
            diff = McEstimate.from_samples(base - utilities[label], spec.antithetic)
        else:
            a, b = report.objective_estimates["optimal"], report.objective_estimates[label]
            diff = McEstimate(a.mean - b.mean, math.hypot(a.std_error, b.std_error), a.n)
        report.differences[label] = diff
        report.checks.append(Check(
            f"dominance {label}", diff.mean, -2.0 * diff.std_error, diff.mean >= -2.0 * diff.std_error,
            f"J(opt) - J(pert) = {diff.mean:.4g} +/- {diff.std_error:.2g}",
        ))
        budget = report.budget_residuals[label]
        bound = 3.0 * budget.std_error + FP_FLOOR * x
        report.checks.append(Check(
            f"budget {label}", budget.mean, bound, budget.mean <= bound,
            f"E[H_T V_T + int H gamma] - x = {budget.mean:.3g} +/- {budget.std_error:.2g}",
        ))
    return report


def run_verification(config: ModelConfig, strategy: OptimalStrategy, spec: SimulationSpec,
                     grid: PerturbationGrid | None = None) -> VerificationReport:
    """Conditions, budget identity at the optimum, and grid dominance."""
    report = VerificationReport()
    res = check_conditions(config, strategy)
    report.condition_residuals = res
    for name, value in res.as_dict().items():
        report.checks.append(Check(f"condition {name}", value, CONDITION_TOL, value <= CONDITION_TOL))

    budget = budget_identity(config, strategy, spec)
    report.budget_residuals["optimal (dual consumption)"] = budget
    bound = 3.0 * budget.std_error + FP_FLOOR * config.preferences.initial_wealth
    report.checks.append(Check(
        "budget optimal", abs(budget.mean), bound, abs(budget.mean) <= bound,
        f"E[H_T V_T + int H gamma] - x = {budget.mean:.3g} +/- {budget.std_error:.2g}",
    ))
    return objective_dominance(config, strategy, grid, spec, report)

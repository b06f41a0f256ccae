"""Optimal underwriting ratio, portfolio and dual controls for CRRA utility.

Under CRRA preferences the dual problem collapses to a single scalar: the
underwriting-to-wealth ratio ``kappa``.  It is the unique zero on
``[0, 1/c)`` of

    h(kappa) = p - a + b * (rho * theta - (1 - rho^2) * eta * b * kappa)
               - lam * E[Y / (1 - kappa Y)^eta],

which is strictly decreasing and diverges to ``-inf`` at ``1/c`` when the
capped claim law puts mass on ``c``.  Everything else (the risky proportion,
the dual controls, the growth rate of the deflator moment and the optimal
consumption) is closed form in ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import claims
from .errors import DomainError, NoRootInRange, NumericalFailure, QuadratureFailure
from .model import ModelConfig
from .rootfind import brent

# quadrature tolerance is tightened once kappa * c passes this threshold
NEAR_BOUND = 0.95


@dataclass(frozen=True)
class DualControls:
    """Dual diffusion control ``phi1`` and the jump control
    ``phi2(y) = (1 - kappa y)^(-eta)``, stored through ``(kappa, eta)``."""

    phi1: float
    kappa: float
    eta: float

    def phi2(self, y):
        return (1.0 - self.kappa * np.asarray(y, dtype=float)) ** (-self.eta)


@dataclass(frozen=True)
class OptimalStrategy:
    kappa: float
    pi: float
    pi_merton: float
    controls: DualControls
    h_at_zero: float
    dual_rate: float
    x_one: float
    y_of_x: float
    horizon: float
    eta: float
    initial_wealth: float

    def consumption_ratio(self, t):
        """Optimal consumption per unit of optimal wealth at time ``t`` (deterministic)."""
        return consumption_wealth_ratio(self.dual_rate, self.horizon, t)


@dataclass(frozen=True)
class SolveReport:
    strategy: OptimalStrategy
    iterations: int
    bracket: tuple[float, float]
    residual: float


@dataclass(frozen=True)
class SolverOptions:
    xtol: float = 1e-10
    ftol: float = 1e-9
    max_iter: int = 200
    allow_negative_kappa: bool = False
    # the upper end of the search is (1 - bound_gap) / c
    bound_gap: float = 1e-12


class PortfolioSplit(NamedTuple):
    pi: float
    pi_merton: float


def _quad_tol(config: ModelConfig, kappa: float) -> float:
    return 1e-12 if kappa * config.claims.limit > NEAR_BOUND else 1e-10


def eval_h(config: ModelConfig, kappa: float, *, allow_negative: bool = False) -> float:
    """Evaluate the optimality function ``h`` at ``kappa``.

    Raises:
        DomainError: ``kappa * c >= 1``, or ``kappa < 0`` without ``allow_negative``.
    """
    if kappa < 0 and not allow_negative:
        raise DomainError(f"kappa = {kappa} < 0 (negative underwriting needs allow_negative)")
    if kappa * config.claims.limit >= 1.0:
        raise DomainError(f"kappa * c = {kappa * config.claims.limit:.12g} >= 1")
    l = config.liability
    eta = config.preferences.eta
    jump = 0.0
    if l.lam != 0.0:
        jump = l.lam * claims.expect(config.claims, claims.DualPower(kappa, eta),
                                     tol=_quad_tol(config, kappa))
    return (l.premium - l.a + l.b * (l.rho * config.theta - (1.0 - l.rho**2) * eta * l.b * kappa)
            - jump)


def existence_margin(config: ModelConfig) -> float:
    """``h(0) = p - a + b rho theta - lam E[Y]``; positive iff a unique root exists in ``(0, 1/c)``."""
    l = config.liability
    mean = claims.expect(config.claims, claims.Identity()) if l.lam else 0.0
    return l.premium - l.a + l.b * l.rho * config.theta - l.lam * mean


def _lower_bracket(config: ModelConfig, h0: float, opts: SolverOptions) -> tuple[float, float]:
    """Walk left from 0 until h turns positive (extended-range search)."""
    step = 1.0 / config.claims.limit
    lo, hlo = 0.0, h0
    for _ in range(80):
        lo -= step
        hlo = eval_h(config, lo, allow_negative=True)
        if hlo > 0:
            return lo, hlo
        step *= 2.0
    raise NumericalFailure("could not bracket a negative root of h")


def _upper_bracket(config: ModelConfig, opts: SolverOptions) -> tuple[float, float]:
    """Approach ``1/c`` through gaps ``1 - kappa c = 1e-2, 1e-3, ...`` until h < 0.

    h is evaluated no closer to the bound than needed, because quadrature
    cost grows as the gap shrinks.
    """
    c = config.claims.limit
    gap = 1e-2
    while True:
        gap = max(gap, opts.bound_gap)
        kappa = (1.0 - gap) / c
        try:
            value = eval_h(config, kappa)
        except QuadratureFailure as exc:
            raise NumericalFailure(f"h could not be evaluated at kappa = {kappa!r}: {exc}") from exc
        if value < 0:
            return kappa, value
        if gap <= opts.bound_gap:
            raise NumericalFailure(
                f"h stays non-negative up to kappa = {kappa!r} (h = {value:.6g}); "
                "no bracket below the policy-limit bound"
            )
        gap *= 0.1


def solve_kappa(config: ModelConfig, opts: SolverOptions | None = None) -> SolveReport:
    """Solve ``h(kappa) = 0`` and assemble the optimal strategy.

    Raises:
        NoRootInRange: ``h(0) <= 0`` and the extended range is not enabled.
        NumericalFailure: ``h`` is still positive just below ``1/c`` or the
            residual tolerance cannot be met.
    """
    opts = opts or SolverOptions()
    h0 = existence_margin(config)
    allow_neg = opts.allow_negative_kappa

    if h0 > 0:
        hi, hhi = _upper_bracket(config, opts)
        lo, hlo = 0.0, h0
    elif h0 == 0:
        lo = hi = 0.0
        hlo = hhi = 0.0
    elif allow_neg:
        lo, hlo = _lower_bracket(config, h0, opts)
        hi, hhi = 0.0, h0
    else:
        raise NoRootInRange(h0)

    if lo == hi:
        res_root, residual, bracket, iters = 0.0, 0.0, (0.0, 0.0), 0
    else:
        res = brent(lambda k: eval_h(config, k, allow_negative=allow_neg), lo, hi,
                    xtol=opts.xtol, ftol=opts.ftol, max_iter=opts.max_iter, fa=hlo, fb=hhi)
        res_root, residual, bracket, iters = res.root, res.residual, res.bracket, res.iterations
    if abs(residual) > opts.ftol:
        raise NumericalFailure(
            f"|h(kappa)| = {abs(residual):.3g} exceeds {opts.ftol:g} at kappa = {res_root!r}"
        )
    strategy = build_strategy(config, res_root, h_at_zero=h0)
    return SolveReport(strategy, iters, bracket, residual)


def merton_proportion(config: ModelConfig) -> float:
    m = config.market
    return (m.mu - m.r) / (config.preferences.eta * m.sigma**2)


def optimal_pi(config: ModelConfig, kappa: float) -> PortfolioSplit:
    """Risky proportion: the Merton ratio plus the hedge ``(rho b / sigma) kappa``."""
    merton = merton_proportion(config)
    l = config.liability
    return PortfolioSplit(merton + (l.rho * l.b / config.market.sigma) * kappa, merton)


def dual_controls(config: ModelConfig, kappa: float) -> DualControls:
    """Dual controls implied by ``kappa``.

    Raises:
        DomainError: if ``1 - kappa y`` is not positive on the claim support.
    """
    top = claims.support_max(config.claims)
    if kappa * top >= 1.0:
        raise DomainError(f"kappa * {top:g} = {kappa * top:.12g} >= 1")
    l = config.liability
    eta = config.preferences.eta
    phi1 = -eta * l.b * kappa * math.sqrt(max(0.0, 1.0 - l.rho**2))
    return DualControls(phi1=phi1, kappa=kappa, eta=eta)


def deflator_moment_rate(config: ModelConfig, controls: DualControls, q: float) -> float:
    """Exponent ``L`` with ``E[H_t^q] = exp(L t)`` for the deflator driven by ``controls``.

    ``log H`` is Brownian with drift ``-r - |v|^2/2 - lam E[phi2 - 1]`` and
    volatility vector ``v = (theta, phi1)``, plus jumps ``log phi2(Y)``, so

        L = q (-r - |v|^2/2 - lam E[phi2 - 1]) + q^2 |v|^2 / 2 + lam E[phi2^q - 1].
    """
    if q == 0.0:
        return 0.0
    l = config.liability
    theta = config.theta
    v2 = theta**2 + controls.phi1**2
    jump_mean = jump_q = 0.0
    if l.lam != 0.0:
        dist = config.claims
        tol = _quad_tol(config, controls.kappa)
        mass = claims.expect(dist, claims.AffineTest(), tol=tol)
        jump_mean = claims.expect(dist, claims.DeflatorPower(controls.kappa, controls.eta), tol=tol) - mass
        jump_q = claims.expect(dist, claims.DeflatorPower(controls.kappa, controls.eta, q), tol=tol) - mass
    return (q * (-config.market.r - 0.5 * v2 - l.lam * jump_mean) + 0.5 * q * q * v2
            + l.lam * jump_q)


def dual_rate_and_x1(config: ModelConfig, kappa: float) -> tuple[float, float]:
    """Growth rate ``Lambda`` of ``E[H_t^(1 - 1/eta)]`` and the normaliser
    ``X(1) = int_0^T exp(Lambda t) dt + exp(Lambda T)``."""
    eta = config.preferences.eta
    T = config.preferences.horizon
    controls = dual_controls(config, kappa)
    if eta == 1.0:
        return 0.0, T + 1.0
    rate = deflator_moment_rate(config, controls, 1.0 - 1.0 / eta)
    return rate, _integral_exp(rate, 0.0, T) + math.exp(rate * T)


def _integral_exp(rate: float, t0, t1):
    """``int_{t0}^{t1} exp(rate s) ds``, stable as ``rate -> 0``."""
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    if rate == 0.0:
        out = t1 - t0
    else:
        out = np.exp(rate * t0) * np.expm1(rate * (t1 - t0)) / rate
    return float(out) if out.ndim == 0 else out


def remaining_value_factor(rate: float, horizon: float, t):
    """``D(t) = exp(Lambda T) + int_t^T exp(Lambda s) ds``; the optimal wealth is
    ``(x / X(1)) H_t^(-1/eta) exp(-Lambda t) D(t)``."""
    return math.exp(rate * horizon) + _integral_exp(rate, t, horizon)


def consumption_wealth_ratio(rate: float, horizon: float, t):
    """Optimal consumption over optimal wealth: ``exp(Lambda t) / D(t)``.

    For log utility this is ``1 / (T + 1 - t)``.
    """
    t = np.asarray(t, dtype=float)
    out = np.exp(rate * t) / remaining_value_factor(rate, horizon, t)
    return float(out) if out.ndim == 0 else out


def build_strategy(config: ModelConfig, kappa: float, *, pi: float | None = None,
                   h_at_zero: float | None = None) -> OptimalStrategy:
    """Assemble the strategy implied by ``kappa``; ``pi`` overrides the optimal
    proportion (used to build deliberately perturbed candidates)."""
    split = optimal_pi(config, kappa)
    rate, x_one = dual_rate_and_x1(config, kappa)
    prefs = config.preferences
    return OptimalStrategy(
        kappa=kappa,
        pi=split.pi if pi is None else pi,
        pi_merton=split.pi_merton,
        controls=dual_controls(config, kappa),
        h_at_zero=existence_margin(config) if h_at_zero is None else h_at_zero,
        dual_rate=rate,
        x_one=x_one,
        y_of_x=(prefs.initial_wealth / x_one) ** (-prefs.eta),
        horizon=prefs.horizon,
        eta=prefs.eta,
        initial_wealth=prefs.initial_wealth,
    )


def consumption_rate(config: ModelConfig, strategy: OptimalStrategy, H_t, t=None):
    """Optimal consumption ``(x / X(1)) H_t^(-1/eta)`` given the deflator value.

    ``t`` is accepted for symmetry with the time-indexed notation; the rule
    depends on time only through ``H_t``.  For log utility the same quantity
    equals ``V_t^0 / (T + 1)`` with ``V^0`` the zero-consumption wealth.
    """
    H_t = np.asarray(H_t, dtype=float)
    out = (config.preferences.initial_wealth / strategy.x_one) * H_t ** (-1.0 / config.preferences.eta)
    return float(out) if out.ndim == 0 else out

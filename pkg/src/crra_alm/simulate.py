"""Monte Carlo engine for the insurer's wealth, the deflator and claim arrivals.

Paths are generated in fixed-size blocks.  Block ``k`` draws from its own
stream ``SeedSequence(seed, spawn_key=(k,))``, so an ensemble depends only on
``(config, policy, spec)`` and not on how many workers run the blocks.

Within a block one set of Brownian increments and one claim record (arrival
times and sizes) drives every quantity: the wealth of each policy being
evaluated, the deflator, and the consumption stream.  Comparisons between
policies therefore use common random numbers by construction.

The default ``LOG_EULER`` scheme is exact on the grid for constant
coefficients: ``log`` wealth and ``log`` deflator are Brownian motions with
drift plus sums of ``log`` jump factors, and claims arrive at exact
(continuous) times.  Only time integrals (consumption utility, deflated
consumption, and the variation-of-constants integral of the dual consumption
rule) are discretised: running integrals by the trapezoid rule, whole-horizon
integrals by composite Simpson.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate

from . import claims
from .duality import DualControls, OptimalStrategy, dual_controls, remaining_value_factor
from .errors import PositivityBreach, UtilityOverflow
from .model import ModelConfig


class Scheme(str, Enum):
    LOG_EULER = "log_euler"
    EULER = "euler"


class Consumption(str, Enum):
    ZERO = "zero"
    # (x / X(1)) H_t^(-1/eta), driven by the co-simulated deflator
    DUAL_OPTIMAL = "dual_optimal"
    # V_t^0 / (T + 1) with V^0 the zero-consumption wealth (log utility)
    LOG_OPTIMAL = "log_optimal"
    # the optimal consumption-to-wealth ratio applied to current wealth
    FEEDBACK = "feedback"


@dataclass(frozen=True)
class SimulationSpec:
    n_paths: int = 100_000
    n_steps: int = 256
    seed: int = 0
    scheme: Scheme = Scheme.LOG_EULER
    antithetic: bool = True
    common_random_numbers: bool = True
    block_size: int = 8192
    workers: int = 1
    record_paths: int = 0
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be >= 1")
        if self.antithetic and (self.n_paths % 2 or self.block_size % 2):
            raise ValueError("antithetic sampling needs even n_paths and block_size")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class Policy:
    """Constant risky proportion ``pi``, underwriting ratio ``kappa`` and a
    consumption rule; ``scale`` multiplies the consumption rate."""

    pi: float
    kappa: float
    consumption: Consumption = Consumption.ZERO
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "consumption", Consumption(self.consumption))

    @classmethod
    def optimal(cls, strategy: OptimalStrategy, consumption=Consumption.DUAL_OPTIMAL,
                scale: float = 1.0) -> "Policy":
        return cls(strategy.pi, strategy.kappa, Consumption(consumption), scale)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int

    @classmethod
    def from_samples(cls, values: np.ndarray, antithetic: bool = False) -> "McEstimate":
        """Sample mean and standard error; antithetic pairs ``(2i, 2i+1)`` are
        averaged first so the error reflects their negative correlation."""
        values = np.asarray(values, dtype=float)
        n = values.size
        units = values.reshape(-1, 2).mean(axis=1) if antithetic else values
        k = units.size
        mean = math.fsum(units) / k
        se = float(np.std(units, ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        return cls(mean, se, n)

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - target) <= n_se * self.std_error


@dataclass
class PathEnsemble:
    """Per-path results in canonical path order.  Wealth-related fields are
    ``None`` for deflator-only runs."""

    times: np.ndarray
    deflator_terminal: np.ndarray
    jump_counts: np.ndarray
    antithetic: bool
    eta: float
    terminal_wealth: np.ndarray | None = None
    consumption_utility: np.ndarray | None = None
    budget_accumulator: np.ndarray | None = None
    deflator_snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    policy: Policy | None = None
    recorded: dict[str, np.ndarray] | None = None

    @property
    def n_paths(self) -> int:
        return self.deflator_terminal.size


# -- randomness ---------------------------------------------------------------


@dataclass
class _Noise:
    dW: np.ndarray          # (m, n_steps, 2)
    owner: np.ndarray       # path index of each claim
    step: np.ndarray        # grid step containing each claim
    marks: np.ndarray       # capped claim sizes
    counts: np.ndarray      # claims per path


def _block_noise(config: ModelConfig, spec: SimulationSpec, block: int, m: int) -> _Noise:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed, spawn_key=(block,))))
    T = config.preferences.horizon
    dt = T / spec.n_steps
    base = m // 2 if spec.antithetic else m

    dW = rng.standard_normal((base, spec.n_steps, 2)) * math.sqrt(dt)
    lam = config.liability.lam
    counts = rng.poisson(lam * T, base) if lam > 0 else np.zeros(base, dtype=np.int64)
    total = int(counts.sum())
    # given N_T = n, Poisson arrival times are n iid uniforms on [0, T]
    times = rng.random(total) * T
    marks = np.asarray(claims.sample(config.claims, rng, total), dtype=float) if total else np.empty(0)
    owner = np.repeat(np.arange(base), counts)

    if spec.antithetic:
        full = np.empty((m, spec.n_steps, 2))
        full[0::2] = dW
        full[1::2] = -dW
        dW = full
        owner = np.concatenate([2 * owner, 2 * owner + 1])
        times = np.concatenate([times, times])
        marks = np.concatenate([marks, marks])
        counts = np.repeat(counts, 2)
    step = np.minimum((times / dt).astype(np.int64), spec.n_steps - 1)
    return _Noise(dW, owner, step, marks, counts)


def _jump_sums(noise: _Noise, values: np.ndarray, m: int, n_steps: int) -> np.ndarray:
    out = np.zeros((m, n_steps))
    if values.size:
        np.add.at(out, (noise.owner, noise.step), values)
    return out


def _jump_products(noise: _Noise, factors: np.ndarray, m: int, n_steps: int) -> np.ndarray:
    out = np.ones((m, n_steps))
    if factors.size:
        np.multiply.at(out, (noise.owner, noise.step), factors)
    return out


# -- path construction ---------------------------------------------------------


def _trapz_cum(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(values)
    out[:, 1:] = np.cumsum(0.5 * dt * (values[:, 1:] + values[:, :-1]), axis=1)
    return out


def _integral(values: np.ndarray, dt: float) -> np.ndarray:
    return integrate.simpson(values, dx=dt, axis=1)


def _deflator_paths(config, controls: DualControls, noise: _Noise, spec, m) -> np.ndarray:
    n = spec.n_steps
    dt = config.preferences.horizon / n
    theta = config.theta
    phi1 = controls.phi1
    lam = config.liability.lam
    comp = 0.0
    if lam > 0:
        mass = claims.expect(config.claims, claims.AffineTest())
        comp = lam * (claims.expect(config.claims, claims.DeflatorPower(controls.kappa, controls.eta)) - mass)
    dW1, dW2 = noise.dW[..., 0], noise.dW[..., 1]
    r = config.market.r

    if spec.scheme is Scheme.LOG_EULER:
        jumps = _jump_sums(noise, np.log(controls.phi2(noise.marks)), m, n)
        drift = (-r - 0.5 * (theta**2 + phi1**2) - comp) * dt
        logH = np.zeros((m, n + 1))
        np.cumsum(drift - theta * dW1 - phi1 * dW2 + jumps, axis=1, out=logH[:, 1:])
        return np.exp(logH)

    factors = (1.0 + (-r - comp) * dt - theta * dW1 - phi1 * dW2)
    factors *= _jump_products(noise, controls.phi2(noise.marks), m, n)
    H = np.ones((m, n + 1))
    np.cumprod(factors, axis=1, out=H[:, 1:])
    if np.any(factors <= 0):
        raise PositivityBreach("Euler step drove the deflator non-positive; increase n_steps")
    return H


def _wealth_paths(config, policy: Policy, strategy: OptimalStrategy | None, H: np.ndarray,
                  noise: _Noise, spec: SimulationSpec, m: int):
    """Return ``(V, V0, gamma)`` on the grid: wealth, zero-consumption wealth, consumption rate."""
    n = spec.n_steps
    T = config.preferences.horizon
    dt = T / n
    x = config.preferences.initial_wealth
    mk, l = config.market, config.liability
    pi, kappa = policy.pi, policy.kappa
    s1 = pi * mk.sigma - kappa * l.rho * l.b
    s2 = -kappa * l.b * math.sqrt(max(0.0, 1.0 - l.rho**2))
    drift = mk.r + pi * (mk.mu - mk.r) + kappa * (l.premium - l.a)
    dW1, dW2 = noise.dW[..., 0], noise.dW[..., 1]
    t = np.linspace(0.0, T, n + 1)
    rule, scale = policy.consumption, policy.scale
    jump_factors = 1.0 - kappa * noise.marks
    if np.any(jump_factors <= 0):
        raise PositivityBreach(f"claim jump factor 1 - kappa*y <= 0 at kappa = {kappa}")

    if rule in (Consumption.FEEDBACK, Consumption.DUAL_OPTIMAL) and strategy is None:
        raise ValueError(f"consumption rule {rule.value!r} needs a solved strategy")

    if spec.scheme is Scheme.LOG_EULER:
        logphi = np.zeros((m, n + 1))
        incr = (drift - 0.5 * (s1**2 + s2**2)) * dt + s1 * dW1 + s2 * dW2
        incr += _jump_sums(noise, np.log(jump_factors), m, n)
        np.cumsum(incr, axis=1, out=logphi[:, 1:])
        V0 = x * np.exp(logphi)
        if rule is Consumption.FEEDBACK:
            rate = strategy.dual_rate
            D = remaining_value_factor(rate, T, t)
            # int_0^t ratio = log(D(0) / D(t)) exactly
            V = V0 * (D / D[0]) ** scale
            gamma = scale * strategy.consumption_ratio(t) * V
            return V, V0, gamma
    else:
        factors = (1.0 + drift * dt + s1 * dW1 + s2 * dW2) * _jump_products(noise, jump_factors, m, n)
        if np.any(factors <= 0):
            raise PositivityBreach("Euler step drove wealth non-positive; increase n_steps")
        V0 = np.empty((m, n + 1))
        V0[:, 0] = x
        np.cumprod(factors, axis=1, out=V0[:, 1:])
        V0[:, 1:] *= x
        if rule is Consumption.FEEDBACK:
            ratio = scale * strategy.consumption_ratio(t)
            V = np.empty((m, n + 1))
            V[:, 0] = x
            for k in range(n):
                V[:, k + 1] = V[:, k] * factors[:, k] - ratio[k] * V[:, k] * dt
            if np.any(V <= 0):
                raise PositivityBreach("Euler step drove wealth non-positive; increase n_steps")
            return V, V0, ratio * V

    if rule is Consumption.ZERO:
        return V0, V0, np.zeros_like(V0)
    if rule is Consumption.LOG_OPTIMAL:
        remaining = 1.0 - scale * t / (T + 1.0)
        if np.any(remaining <= 0):
            raise PositivityBreach(f"consumption scale {scale} exhausts wealth before T")
        return V0 * remaining, V0, scale * V0 / (T + 1.0)

    # DUAL_OPTIMAL: V = Phi (x - int gamma / Phi), Phi = V0 / x
    gamma = scale * (x / strategy.x_one) * H ** (-1.0 / strategy.eta)
    phi = V0 / x
    V = phi * (x - _trapz_cum(gamma / phi, dt))
    if np.any(V[:, 1:] <= 0):
        raise PositivityBreach("dual consumption stream exhausted wealth on some path")
    return V, V0, gamma


def _utility(c, eta: float):
    with np.errstate(divide="ignore", over="ignore"):
        if eta == 1.0:
            return np.log(c)
        return c ** (1.0 - eta) / (1.0 - eta)


def _run_block(config, policies, controls, strategy, spec, block, m, record):
    noise = _block_noise(config, spec, block, m)
    n = spec.n_steps
    dt = config.preferences.horizon / n
    H = _deflator_paths(config, controls, noise, spec, m)
    snaps = {}
    for ts in spec.snapshot_times:
        snaps[ts] = H[:, int(round(ts / dt))].copy()
    eta = config.preferences.eta
    out = []
    for policy in policies:
        res = {"H_T": H[:, -1].copy(), "counts": noise.counts.copy(), "snaps": snaps}
        if policy is not None:
            V, V0, gamma = _wealth_paths(config, policy, strategy, H, noise, spec, m)
            res["V_T"] = V[:, -1].copy()
            res["budget"] = H[:, -1] * V[:, -1] + _integral(H * gamma, dt)
            if policy.consumption is Consumption.ZERO:
                res["cu"] = np.zeros(m)
            else:
                u = _utility(gamma, eta)
                res["cu"] = _integral(u, dt)
            if record:
                k = min(record, m)
                res["recorded"] = {
                    "V": V[:k].copy(), "V0": V0[:k].copy(), "H": H[:k].copy(),
                    "gamma": gamma[:k].copy(), "cum_consumption": _trapz_cum(gamma[:k], dt),
                }
        out.append(res)
    return out


def _grid_checks(config, spec):
    T = config.preferences.horizon
    for ts in spec.snapshot_times:
        k = ts / T * spec.n_steps
        if not (0 <= ts <= T) or abs(k - round(k)) > 1e-9:
            raise ValueError(f"snapshot time {ts} is not a grid point")


def simulate_many(config: ModelConfig, policies: Sequence[Policy | None], spec: SimulationSpec,
                  strategy: OptimalStrategy | None = None,
                  controls: DualControls | None = None) -> list[PathEnsemble]:
    """Simulate several policies on the same random numbers.

    The deflator uses ``controls``, else ``strategy.controls``, else the dual
    controls implied by the first policy's ``kappa``.  A ``None`` policy
    yields a deflator-only ensemble.
    """
    _grid_checks(config, spec)
    if controls is None:
        if strategy is not None:
            controls = strategy.controls
        else:
            first = next((p for p in policies if p is not None), None)
            controls = dual_controls(config, first.kappa if first else 0.0)

    sizes = []
    remaining = spec.n_paths
    while remaining > 0:
        sizes.append(min(spec.block_size, remaining))
        remaining -= sizes[-1]

    def task(k):
        return _run_block(config, policies, controls, strategy, spec, k, sizes[k],
                          spec.record_paths if k == 0 else 0)

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            blocks = list(pool.map(task, range(len(sizes))))
    else:
        blocks = [task(k) for k in range(len(sizes))]

    times = np.linspace(0.0, config.preferences.horizon, spec.n_steps + 1)
    ensembles = []
    for i, policy in enumerate(policies):
        parts = [b[i] for b in blocks]
        ens = PathEnsemble(
            times=times,
            deflator_terminal=np.concatenate([p["H_T"] for p in parts]),
            jump_counts=np.concatenate([p["counts"] for p in parts]),
            antithetic=spec.antithetic,
            eta=config.preferences.eta,
            deflator_snapshots={ts: np.concatenate([p["snaps"][ts] for p in parts])
                                for ts in spec.snapshot_times},
            policy=policy,
        )
        if policy is not None:
            ens.terminal_wealth = np.concatenate([p["V_T"] for p in parts])
            ens.consumption_utility = np.concatenate([p["cu"] for p in parts])
            ens.budget_accumulator = np.concatenate([p["budget"] for p in parts])
            ens.recorded = parts[0].get("recorded")
        ensembles.append(ens)
    return ensembles


def simulate_wealth(config: ModelConfig, policy: Policy, spec: SimulationSpec,
                    strategy: OptimalStrategy | None = None) -> PathEnsemble:
    """Simulate wealth under ``policy`` together with the deflator.

    Raises:
        PositivityBreach: an Euler step, a jump factor or the consumption
            stream drove wealth to zero or below.
    """
    return simulate_many(config, [policy], spec, strategy)[0]


def simulate_deflator(config: ModelConfig, controls: DualControls, spec: SimulationSpec) -> PathEnsemble:
    return simulate_many(config, [None], spec, controls=controls)[0]


def realized_utility(config: ModelConfig, ensemble: PathEnsemble) -> np.ndarray:
    """Per-path ``int_0^T U(gamma_t) dt + U(V_T)``.

    Raises:
        UtilityOverflow: if any realized utility is not finite.
    """
    values = ensemble.consumption_utility + _utility(ensemble.terminal_wealth, config.preferences.eta)
    bad = ~np.isfinite(values)
    if bad.any():
        raise UtilityOverflow(
            f"{int(bad.sum())} path(s) with non-finite utility (eta = {config.preferences.eta}); "
            "wealth or consumption underflowed"
        )
    return values


def estimate_objective(config: ModelConfig, ensemble: PathEnsemble) -> McEstimate:
    return McEstimate.from_samples(realized_utility(config, ensemble), ensemble.antithetic)


def write_path_dump(ensemble: PathEnsemble, path) -> None:
    """CSV of the recorded paths: path id, t, V, V0 (zero-consumption wealth),
    H, consumption rate and cumulative consumption."""
    rec = ensemble.recorded
    if rec is None:
        raise ValueError("ensemble has no recorded paths (set record_paths > 0)")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "t", "V", "V0", "H", "consumption", "cumulative_consumption"])
        for i in range(rec["V"].shape[0]):
            for k, t in enumerate(ensemble.times):
                w.writerow([i, f"{t:.9g}"] + [f"{rec[key][i, k]:.9g}" for key in
                                              ("V", "V0", "H", "gamma", "cum_consumption")])

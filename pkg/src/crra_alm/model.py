"""Model parameters: market, liability (risk process), claims and preferences."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

from .claims import ClaimDistribution, Gamma, Pareto, PointMass, TruncationMode
from .errors import InvalidParams


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market with constant coefficients."""

    r: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class LiabilityParams:
    """Per-policy risk process: drift ``a``, diffusion ``b`` correlated with the
    stock through ``rho``, compound-Poisson claims at intensity ``lam``, and
    premium rate ``premium``."""

    a: float
    b: float
    rho: float
    lam: float
    premium: float


@dataclass(frozen=True)
class Preferences:
    """CRRA risk aversion ``eta`` (``eta == 1`` is log utility), horizon and initial wealth."""

    eta: float
    horizon: float = 1.0
    initial_wealth: float = 1.0


@dataclass(frozen=True)
class ModelConfig:
    market: MarketParams
    liability: LiabilityParams
    claims: ClaimDistribution
    preferences: Preferences

    @property
    def theta(self) -> float:
        """Market price of risk ``(mu - r) / sigma``."""
        return market_price_of_risk(self)

    def with_(self, **changes) -> "ModelConfig":
        """Copy with selected scalar fields replaced, e.g. ``cfg.with_(rho=0.3, eta=0.5)``.

        Accepts any field name of the four parameter groups plus ``mode``.
        """
        groups = {
            "market": (self.market, MarketParams),
            "liability": (self.liability, LiabilityParams),
            "preferences": (self.preferences, Preferences),
        }
        updated = {}
        for group, (obj, cls) in groups.items():
            mine = {k: v for k, v in changes.items() if k in cls.__dataclass_fields__}
            updated[group] = replace(obj, **mine) if mine else obj
        claims = self.claims
        if "mode" in changes:
            claims = claims.with_mode(changes["mode"])
        known = set(MarketParams.__dataclass_fields__) | set(LiabilityParams.__dataclass_fields__)
        known |= set(Preferences.__dataclass_fields__) | {"mode"}
        unknown = set(changes) - known
        if unknown:
            raise TypeError(f"unknown parameter(s): {sorted(unknown)}")
        return validate(ModelConfig(claims=claims, **updated))


def _finite(value) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value)


def _check(config: ModelConfig) -> list[tuple[str, str]]:
    m, l, p = config.market, config.liability, config.preferences
    problems = []
    for group, obj in (("market", m), ("liability", l), ("preferences", p)):
        for name in obj.__dataclass_fields__:
            value = getattr(obj, name)
            if not _finite(value):
                problems.append((f"{group}.{name}", f"must be a finite number, got {value!r}"))
    if problems:
        return problems
    if m.sigma <= 0:
        problems.append(("market.sigma", f"must be > 0, got {m.sigma}"))
    if not -1.0 <= l.rho <= 1.0:
        problems.append(("liability.rho", f"must lie in [-1, 1], got {l.rho}"))
    if l.lam < 0:
        problems.append(("liability.lambda", f"must be >= 0, got {l.lam}"))
    if l.b < 0:
        problems.append(("liability.b", f"must be >= 0, got {l.b}"))
    if p.eta <= 0:
        problems.append(("preferences.eta", f"must be > 0, got {p.eta}"))
    if p.horizon <= 0:
        problems.append(("preferences.horizon", f"must be > 0, got {p.horizon}"))
    if p.initial_wealth <= 0:
        problems.append(("preferences.initial_wealth", f"must be > 0, got {p.initial_wealth}"))
    return problems


def _claims_from_raw(raw: Mapping[str, Any]) -> ClaimDistribution:
    raw = dict(raw)
    family = str(raw.pop("family", "")).lower().replace("-", "_")
    try:
        limit = raw.pop("limit")
    except KeyError:
        raise InvalidParams([("claims.limit", "missing")]) from None
    mode = raw.pop("truncation_mode", TruncationMode.ATOM)
    try:
        mode = TruncationMode(str(getattr(mode, "value", mode)).lower())
    except ValueError:
        raise InvalidParams([("claims.truncation_mode", f"unknown mode {mode!r}")]) from None
    builders = {"gamma": Gamma, "pareto": Pareto, "point_mass": PointMass, "pointmass": PointMass}
    if family not in builders:
        raise InvalidParams([("claims.family", f"unknown family {family!r}")])
    try:
        fam = builders[family](**raw)
    except TypeError as exc:
        raise InvalidParams([("claims", str(exc))]) from None
    return ClaimDistribution(fam, limit, mode)


def validate(config) -> ModelConfig:
    """Validate a :class:`ModelConfig` or a raw nested mapping.

    The raw form mirrors the configuration file: sections ``market``,
    ``liability`` (the intensity may be spelled ``lambda``), ``claims``
    (``family``, its parameters, ``limit``, ``truncation_mode``) and
    ``preferences``.  A valid :class:`ModelConfig` is returned unchanged.

    Raises:
        InvalidParams: listing every offending field.
    """
    if not isinstance(config, ModelConfig):
        config = _from_raw(config)
    problems = _check(config)
    if problems:
        raise InvalidParams(problems)
    return config


def _from_raw(raw: Mapping[str, Any]) -> ModelConfig:
    problems = []
    sections = {}
    for name in ("market", "liability", "claims", "preferences"):
        section = raw.get(name)
        if not isinstance(section, Mapping):
            problems.append((name, "missing section"))
        sections[name] = dict(section or {})
    if problems:
        raise InvalidParams(problems)

    liab = sections["liability"]
    if "lambda" in liab:
        liab["lam"] = liab.pop("lambda")
    parts = {}
    for name, cls in (("market", MarketParams), ("liability", LiabilityParams),
                      ("preferences", Preferences)):
        try:
            parts[name] = cls(**sections[name])
        except TypeError as exc:
            problems.append((name, str(exc)))
    try:
        parts["claims"] = _claims_from_raw(sections["claims"])
    except InvalidParams as exc:
        problems.extend(exc.violations)
    if problems:
        raise InvalidParams(problems)
    return ModelConfig(**parts)


def market_price_of_risk(config: ModelConfig) -> float:
    m = config.market
    return (m.mu - m.r) / m.sigma


def to_raw(config: ModelConfig) -> dict:
    """Inverse of :func:`validate` for raw mappings."""
    fam = config.claims.family
    claims = {"family": {Gamma: "gamma", Pareto: "pareto", PointMass: "point_mass"}[type(fam)]}
    claims.update(vars(fam))
    claims["limit"] = config.claims.limit
    claims["truncation_mode"] = config.claims.mode.value
    liab = dict(vars(config.liability))
    liab["lambda"] = liab.pop("lam")
    return {
        "market": dict(vars(config.market)),
        "liability": liab,
        "claims": claims,
        "preferences": dict(vars(config.preferences)),
    }


def example_config(family: str = "gamma", rho: float = -0.6, eta: float = 1.5,
                   mode: str = "atom", **overrides) -> ModelConfig:
    """The numerical example: a=0.3, b=2, mu=0.09, r=0.07, sigma=0.21, lambda=0.1, c=3, p=1.

    ``family`` is ``"gamma"`` (shape 0.6, scale 5) or ``"pareto"`` (alpha 4, gamma 2).
    """
    fam = {"gamma": Gamma(0.6, 5.0), "pareto": Pareto(4.0, 2.0)}[family]
    base = ModelConfig(
        market=MarketParams(r=0.07, mu=0.09, sigma=0.21),
        liability=LiabilityParams(a=0.3, b=2.0, rho=rho, lam=0.1, premium=1.0),
        claims=ClaimDistribution(fam, 3.0, TruncationMode(mode)),
        preferences=Preferences(eta=eta),
    )
    return base.with_(**overrides) if overrides else validate(base)

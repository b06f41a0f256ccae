"""Claim-size laws with a policy limit.

A claim ``Z`` drawn from a base family (Gamma, Pareto or a point mass) is
capped at the policy limit ``c``.  Three readings of "the claim law on
``[0, c]``" are supported, selected by :class:`TruncationMode`:

* ``ATOM``: the law of ``min(Z, c)``; the mass ``P(Z > c)`` sits on ``c``.
* ``RESTRICTION``: the raw density restricted to ``[0, c]`` (a
  sub-probability measure; the mass above ``c`` is dropped).
* ``RENORMALIZED``: the conditional law of ``Z`` given ``Z <= c``.

Expectations are computed by adaptive Gauss-Legendre quadrature plus the
explicit atom term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy import special

from . import quadrature
from .errors import DomainError, InvalidParams, UnsupportedForPointMass, UnsupportedMode


class TruncationMode(str, Enum):
    ATOM = "atom"
    RESTRICTION = "restriction"
    RENORMALIZED = "renormalized"


@dataclass(frozen=True)
class Gamma:
    """Gamma law with shape ``alpha`` and scale ``beta`` (mean ``alpha*beta``)."""

    alpha: float
    beta: float


@dataclass(frozen=True)
class Pareto:
    """Lomax (shifted Pareto) law with density ``alpha gamma^alpha / (y+gamma)^(alpha+1)``."""

    alpha: float
    gamma: float


@dataclass(frozen=True)
class PointMass:
    y0: float


Family = Union[Gamma, Pareto, PointMass]


@dataclass(frozen=True)
class ClaimDistribution:
    family: Family
    limit: float
    mode: TruncationMode = TruncationMode.ATOM

    def __post_init__(self):
        object.__setattr__(self, "mode", TruncationMode(self.mode))
        problems = []
        if not (math.isfinite(self.limit) and self.limit > 0):
            problems.append(("claims.limit", f"policy limit must be finite and > 0, got {self.limit}"))
        fam = self.family
        if isinstance(fam, Gamma):
            params = {"alpha": fam.alpha, "beta": fam.beta}
        elif isinstance(fam, Pareto):
            params = {"alpha": fam.alpha, "gamma": fam.gamma}
        elif isinstance(fam, PointMass):
            params = {"y0": fam.y0}
            if fam.y0 > self.limit:
                problems.append(("claims.y0", f"point mass {fam.y0} exceeds the limit {self.limit}"))
        else:
            raise TypeError(f"unknown claim family {fam!r}")
        for name, value in params.items():
            if not (math.isfinite(value) and value > 0):
                problems.append((f"claims.{name}", f"must be finite and > 0, got {value}"))
        if problems:
            raise InvalidParams(problems)

    def with_mode(self, mode) -> "ClaimDistribution":
        return ClaimDistribution(self.family, self.limit, TruncationMode(mode))


# -- transforms g(y) whose expectations enter h(kappa) and the deflator -------
#
# Each transform is called as g(y, slack) where slack = 1 - kappa * y.  The
# quadrature supplies slack computed from the distance to the cap, which keeps
# full relative precision when kappa * c is close to 1.


def _slack(kappa, y, slack):
    return 1.0 - kappa * y if slack is None else slack


@dataclass(frozen=True)
class Identity:
    kappa = 0.0

    def __call__(self, y, slack=None):
        return np.asarray(y, dtype=float)


@dataclass(frozen=True)
class AffineTest:
    kappa = 0.0

    def __call__(self, y, slack=None):
        return np.ones_like(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class DualPower:
    """``y / (1 - kappa y)^eta``: the claim weighted by the optimal jump control."""

    kappa: float
    eta: float

    def __call__(self, y, slack=None):
        y = np.asarray(y, dtype=float)
        return y * _slack(self.kappa, y, slack) ** (-self.eta)


@dataclass(frozen=True)
class DeflatorPower:
    """``(1 - kappa y)^(-eta q)``: the deflator jump factor raised to the power ``q``."""

    kappa: float
    eta: float
    q: float = 1.0

    def __call__(self, y, slack=None):
        y = np.asarray(y, dtype=float)
        return _slack(self.kappa, y, slack) ** (-self.eta * self.q)


Transform = Union[Identity, AffineTest, DualPower, DeflatorPower]


# -- distribution functions ---------------------------------------------------


def pdf(dist: ClaimDistribution, y):
    """Density of the untruncated claim ``Z`` at ``y >= 0``."""
    fam = dist.family
    y = np.asarray(y, dtype=float)
    if isinstance(fam, PointMass):
        raise UnsupportedForPointMass("a point mass has no density")
    if isinstance(fam, Gamma):
        a, s = fam.alpha, fam.beta
        with np.errstate(divide="ignore"):
            logf = (a - 1.0) * np.log(y) - y / s - math.lgamma(a) - a * math.log(s)
        out = np.exp(logf)
    else:
        a, g = fam.alpha, fam.gamma
        out = a * g**a / (y + g) ** (a + 1.0)
    out = np.where(y < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def tail(dist: ClaimDistribution, y):
    """Survival function ``P(Z > y)`` of the untruncated claim."""
    fam = dist.family
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    if isinstance(fam, Gamma):
        out = special.gammaincc(fam.alpha, y / fam.beta)
    elif isinstance(fam, Pareto):
        out = (fam.gamma / (y + fam.gamma)) ** fam.alpha
    else:
        out = np.where(y < fam.y0, 1.0, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def support_max(dist: ClaimDistribution) -> float:
    """Largest claim size the law can produce: ``y0`` for a point mass, else ``c``."""
    fam = dist.family
    return fam.y0 if isinstance(fam, PointMass) else dist.limit


def _cdf_at_limit(dist: ClaimDistribution) -> float:
    fam = dist.family
    if isinstance(fam, Gamma):
        return float(special.gammainc(fam.alpha, dist.limit / fam.beta))
    return 1.0 - tail(dist, dist.limit)


def _body(dist: ClaimDistribution, g, tol: float) -> float:
    """``int_0^c g(y) f_Z(y) dy``, integrated in the distance ``u = c - y`` to the cap."""
    fam = dist.family
    c = dist.limit
    kappa = getattr(g, "kappa", 0.0)
    gap = 1.0 - kappa * c

    if isinstance(fam, Gamma) and fam.alpha < 1.0:
        # y = c (1 - s)^(1/alpha) absorbs the y^(alpha-1) singularity at the origin
        a, scale = fam.alpha, fam.beta
        const = math.exp(a * math.log(c) - math.log(a) - math.lgamma(a) - a * math.log(scale))

        def integrand(s):
            u = -c * np.expm1(np.log1p(-s) / a)
            y = c - u
            return g(y, gap + kappa * u) * np.exp(-y / scale)

        return const * quadrature.integrate(integrand, 0.0, 1.0, abs_tol=tol, rel_tol=tol)

    def integrand(u):
        y = c - u
        return g(y, gap + kappa * u) * pdf(dist, y)

    return quadrature.integrate(integrand, 0.0, c, abs_tol=tol, rel_tol=tol)


def expect(dist: ClaimDistribution, transform: Transform, *, tol: float = 1e-10) -> float:
    """``E[g(Y)]`` for the capped claim ``Y`` under the distribution's truncation mode.

    Raises:
        DomainError: if ``kappa * y >= 1`` somewhere on the effective support
            (``y = c``, or ``y = y0`` for a point mass).
        QuadratureFailure: if the quadrature tolerance cannot be met.
    """
    kappa = getattr(transform, "kappa", 0.0)
    fam = dist.family
    # the integrand must be finite on the effective support
    top = support_max(dist)
    if kappa * top >= 1.0:
        raise DomainError(f"kappa * {top:g} = {kappa * top:.12g} >= 1")
    if isinstance(fam, PointMass):
        return float(transform(fam.y0))

    body = _body(dist, transform, tol)
    if dist.mode is TruncationMode.ATOM:
        atom = float(transform(dist.limit, 1.0 - kappa * dist.limit))
        return body + atom * tail(dist, dist.limit)
    if dist.mode is TruncationMode.RESTRICTION:
        return body
    return body / _cdf_at_limit(dist)


def sample(dist: ClaimDistribution, rng: np.random.Generator, size=None):
    """Draw capped claim sizes from the law selected by the truncation mode.

    Raises:
        UnsupportedMode: under ``RESTRICTION``, which is not a probability law.
    """
    fam = dist.family
    c = dist.limit
    if isinstance(fam, PointMass):
        return np.full(size, fam.y0) if size is not None else fam.y0
    if dist.mode is TruncationMode.RESTRICTION:
        raise UnsupportedMode("restriction mode is a sub-probability measure and cannot be sampled")

    if dist.mode is TruncationMode.ATOM:
        if isinstance(fam, Gamma):
            z = rng.gamma(fam.alpha, fam.beta, size)
        else:
            z = fam.gamma * rng.pareto(fam.alpha, size)
        return np.minimum(z, c)

    # inverse CDF of Z restricted to Z <= c
    u = rng.random(size) * _cdf_at_limit(dist)
    if isinstance(fam, Gamma):
        z = fam.beta * special.gammaincinv(fam.alpha, u)
    else:
        z = fam.gamma * ((1.0 - u) ** (-1.0 / fam.alpha) - 1.0)
    return np.minimum(z, c)

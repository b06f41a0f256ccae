import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crra_alm import claims
from crra_alm.errors import DomainError, InvalidParams, UnsupportedForPointMass, UnsupportedMode
from crra_alm.quadrature import integrate
from helpers import FAMILIES, capped, make_transform
from reference import (GAMMA_PDF_AT_1, GAMMA_TAIL_AT_3, HIGH_PRECISION, MC_TAIL_AT_3, MONTE_CARLO,
                       TRANSFORMS)

MODES = ["atom", "restriction", "renormalized"]


# -- pdf / tail -----------------------------------------------------------------

def test_pdf_values():
    assert claims.pdf(capped("pareto"), 0.0) == pytest.approx(2.0, rel=1e-15)
    assert claims.pdf(capped("pareto"), 2.0) == pytest.approx(0.0625, rel=1e-15)
    assert claims.pdf(capped("gamma"), 1.0) == pytest.approx(GAMMA_PDF_AT_1, rel=1e-13)


def test_pdf_uses_decaying_exponential():
    assert claims.pdf(capped("gamma"), 50.0) < 1e-4


def test_point_mass_has_no_density():
    with pytest.raises(UnsupportedForPointMass):
        claims.pdf(claims.ClaimDistribution(claims.PointMass(1.0), 3.0), 1.0)


def test_tail_values():
    assert claims.tail(capped("pareto"), 0.0) == 1.0
    assert claims.tail(capped("pareto"), 2.0) == pytest.approx(0.0625, rel=1e-15)
    assert claims.tail(capped("gamma"), 3.0) == pytest.approx(GAMMA_TAIL_AT_3, rel=1e-13)


@pytest.mark.parametrize("family", ["gamma", "pareto"])
def test_tail_matches_sampling_oracle(family):
    mean, se = MC_TAIL_AT_3[family]
    assert abs(claims.tail(capped(family), 3.0) - mean) <= 3 * se


@pytest.mark.parametrize("family", ["gamma", "pareto"])
def test_tail_non_increasing_and_density_normalised(family):
    dist = capped(family)
    y = np.linspace(0.0, 100.0, 2001)
    assert np.all(np.diff(claims.tail(dist, y)) <= 0)
    # int_0^inf f = int_0^Y f + P(Z > Y)
    upper = 40.0
    body = integrate(lambda x: claims.pdf(dist, x), 0.0, upper) if family == "pareto" else \
        claims.expect(claims.ClaimDistribution(FAMILIES[family], upper, "restriction"), claims.AffineTest())
    assert body + claims.tail(dist, upper) == pytest.approx(1.0, abs=1e-8)


# -- validation -------------------------------------------------------------------

@pytest.mark.parametrize("family, limit", [
    (claims.Gamma(0.0, 5.0), 3.0),
    (claims.Pareto(4.0, -1.0), 3.0),
    (claims.PointMass(4.0), 3.0),
    (claims.PointMass(0.0), 3.0),
    (claims.Gamma(0.6, 5.0), 0.0),
])
def test_invalid_distributions(family, limit):
    with pytest.raises(InvalidParams):
        claims.ClaimDistribution(family, limit)


# -- expectations -------------------------------------------------------------------

def test_point_mass_expectation():
    for mode in MODES:
        dist = claims.ClaimDistribution(claims.PointMass(1.0), 3.0, mode)
        assert claims.expect(dist, claims.DualPower(0.5, 1.0)) == 2.0


def test_pareto_capped_mean_closed_form():
    # E[Z ^ 3] = int_0^3 (2 / (y + 2))^4 dy = (16/3)(1/8 - 1/125)
    assert claims.expect(capped("pareto"), claims.Identity()) == pytest.approx(0.624, abs=1e-12)


@pytest.mark.parametrize("family, key", sorted(HIGH_PRECISION))
@pytest.mark.parametrize("mode", MODES)
def test_expect_matches_high_precision_quadrature(family, key, mode):
    got = claims.expect(capped(family, mode), make_transform(TRANSFORMS[key]))
    assert got == pytest.approx(HIGH_PRECISION[family, key][mode], rel=1e-10)


@pytest.mark.parametrize("family, key, mode", sorted(MONTE_CARLO))
def test_expect_matches_sampling_oracle(family, key, mode):
    mean, se = MONTE_CARLO[family, key, mode]
    got = claims.expect(capped(family, mode), make_transform(TRANSFORMS[key]))
    assert abs(got - mean) <= 3 * se


@pytest.mark.parametrize("family", ["gamma", "pareto"])
def test_affine_test_masses(family):
    assert claims.expect(capped(family, "atom"), claims.AffineTest()) == pytest.approx(1.0, abs=1e-10)
    assert claims.expect(capped(family, "renormalized"), claims.AffineTest()) == pytest.approx(1.0, abs=1e-10)
    restricted = claims.expect(capped(family, "restriction"), claims.AffineTest())
    assert restricted == pytest.approx(1.0 - claims.tail(capped(family), 3.0), abs=1e-10)


@pytest.mark.parametrize("family", ["gamma", "pareto"])
@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("eta", [0.15, 0.7, 1.5, 4.0])
def test_dual_power_at_zero_is_identity(family, mode, eta):
    dist = capped(family, mode)
    assert claims.expect(dist, claims.DualPower(0.0, eta)) == pytest.approx(
        claims.expect(dist, claims.Identity()), rel=1e-12)


@pytest.mark.parametrize("family", ["gamma", "pareto"])
@pytest.mark.parametrize("mode", MODES)
def test_dual_power_strictly_increasing_in_kappa(family, mode):
    dist = capped(family, mode)
    grid = np.linspace(0.0, (1.0 - 1e-6) / 3.0, 60)
    values = [claims.expect(dist, claims.DualPower(k, 0.7)) for k in grid]
    assert np.all(np.diff(values) > 0)


def test_domain_error_at_bound():
    with pytest.raises(DomainError):
        claims.expect(capped("gamma"), claims.DualPower(1.0 / 3.0, 1.5))
    with pytest.raises(DomainError):
        claims.expect(capped("pareto"), claims.DeflatorPower(0.5, 1.5))


def test_near_bound_keeps_relative_precision():
    # at kappa c = 1 - 3e-6 the atom dominates: g(c) = c (1 - kappa c)^(-eta)
    kappa = 1.0 / 3.0 - 1e-6
    dist = capped("gamma")
    got = claims.expect(dist, claims.DualPower(kappa, 1.5), tol=1e-12)
    atom = 3.0 * (1.0 - kappa * 3.0) ** -1.5 * claims.tail(dist, 3.0)
    assert got > atom
    assert math.isfinite(got)


@settings(max_examples=30, deadline=None)
@given(kappa=st.floats(0.0, 0.33), eta=st.floats(0.1, 3.0))
def test_atom_mode_decomposes(kappa, eta):
    g = claims.DualPower(kappa, eta)
    atom = claims.expect(capped("pareto", "atom"), g)
    body = claims.expect(capped("pareto", "restriction"), g)
    assert atom == pytest.approx(body + float(g(3.0)) * claims.tail(capped("pareto"), 3.0), rel=1e-12)


# -- sampling ------------------------------------------------------------------------

def test_point_mass_samples_constant():
    dist = claims.ClaimDistribution(claims.PointMass(2.0), 3.0)
    assert np.all(claims.sample(dist, np.random.default_rng(0), 100) == 2.0)


def test_pareto_atom_sample_mean():
    y = claims.sample(capped("pareto"), np.random.default_rng(1), 10**6)
    se = y.std(ddof=1) / math.sqrt(y.size)
    assert abs(y.mean() - 0.624) <= 3 * se


def test_gamma_atom_mass_at_cap():
    y = claims.sample(capped("gamma"), np.random.default_rng(2), 10**6)
    hit = (y == 3.0).astype(float)
    se = hit.std(ddof=1) / math.sqrt(hit.size)
    assert abs(hit.mean() - claims.tail(capped("gamma"), 3.0)) <= 3 * se


@pytest.mark.parametrize("family", ["gamma", "pareto"])
def test_renormalized_sample_mean(family):
    dist = capped(family, "renormalized")
    y = claims.sample(dist, np.random.default_rng(3), 10**6)
    assert y.max() <= 3.0
    se = y.std(ddof=1) / math.sqrt(y.size)
    assert abs(y.mean() - claims.expect(dist, claims.Identity())) <= 3 * se


def test_restriction_cannot_be_sampled():
    with pytest.raises(UnsupportedMode):
        claims.sample(capped("gamma", "restriction"), np.random.default_rng(0), 10)


def test_sampling_is_deterministic_per_stream():
    a = claims.sample(capped("gamma"), np.random.default_rng(7), 1000)
    b = claims.sample(capped("gamma"), np.random.default_rng(7), 1000)
    assert np.array_equal(a, b)

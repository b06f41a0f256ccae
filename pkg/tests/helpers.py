from pathlib import Path

from crra_alm import claims

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

FAMILIES = {"gamma": claims.Gamma(0.6, 5.0), "pareto": claims.Pareto(4.0, 2.0)}


def make_transform(entry):
    kind, kappa, eta, q = entry
    if kind == "identity":
        return claims.Identity()
    if kind == "affine":
        return claims.AffineTest()
    if kind == "dual":
        return claims.DualPower(kappa, eta)
    return claims.DeflatorPower(kappa, eta, q)


def capped(family, mode="atom", limit=3.0):
    return claims.ClaimDistribution(FAMILIES[family], limit, mode)

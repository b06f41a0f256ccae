"""Bracketed root finding (Brent-Dekker: bisection with secant / inverse
quadratic steps) that reports its final bracket."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import NumericalFailure

_EPS = 2.220446049250313e-16


@dataclass(frozen=True)
class RootResult:
    root: float
    residual: float
    bracket: tuple[float, float]
    iterations: int


def brent(
    f: Callable[[float], float],
    a: float,
    b: float,
    *,
    xtol: float = 1e-10,
    ftol: float = 1e-9,
    max_iter: int = 200,
    fa: float | None = None,
    fb: float | None = None,
) -> RootResult:
    """Find a sign change of ``f`` in ``[a, b]``.

    Iterates until the bracket is narrower than ``2 * xtol`` *and*
    ``|f(root)| <= ftol``, or until the bracket cannot shrink further in
    floating point.  The residual is reported either way; callers decide
    whether it is acceptable.

    Raises:
        NumericalFailure: if ``f(a)`` and ``f(b)`` do not bracket a root or the
            iteration budget runs out.
    """
    fa = f(a) if fa is None else fa
    fb = f(b) if fb is None else fb
    if fa == 0.0:
        return RootResult(a, 0.0, (a, a), 0)
    if fb == 0.0:
        return RootResult(b, 0.0, (b, b), 0)
    if (fa > 0) == (fb > 0):
        raise NumericalFailure(f"no sign change on [{a!r}, {b!r}]: f = ({fa!r}, {fb!r})")

    c, fc = a, fa
    d = e = b - a
    for it in range(1, max_iter + 1):
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb

        tol1 = 2.0 * _EPS * abs(b) + 0.5 * xtol
        m = 0.5 * (c - b)
        if fb == 0.0 or (abs(m) <= tol1 and abs(fb) <= ftol):
            return RootResult(b, fb, tuple(sorted((b, c))), it)
        if abs(m) <= 2.0 * _EPS * abs(b) + 1e-300:
            # bracket exhausted in floating point
            return RootResult(b, fb, tuple(sorted((b, c))), it)

        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(tol1 * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m

        a, fa = b, fb
        # once the width criterion is met keep stepping by the tiniest amount
        # so the residual criterion can still tighten
        step_floor = min(tol1, abs(m))
        b = b + d if abs(d) > step_floor else b + (step_floor if m > 0 else -step_floor)
        fb = f(b)

    raise NumericalFailure(f"root finder did not converge in {max_iter} iterations")

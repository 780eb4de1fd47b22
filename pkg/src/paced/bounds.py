"""Closed-form and numerically solved price-of-anarchy quantities.

Everything here is scalar, pure and double precision.  The additive curve
switches between two shading multipliers at ``gamma0()``; the submodular
curve has a single closed form.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache

INV_E = math.exp(-1.0)
# below this distance from -1/e Halley iteration loses digits
_BRANCH_SERIES_CUTOFF = 1e-6


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function for real ``x >= -1/e``.

    Halley iteration from a piecewise initial guess; a series expansion is
    used right next to the branch point.
    """
    x = float(x)
    if math.isnan(x):
        return math.nan
    h = x + INV_E
    if h < 0:
        # tolerate rounding in callers that compute -1/e themselves
        if h > -1e-15:
            return -1.0
        raise ValueError(f"lambert_w0 undefined for x={x!r} < -1/e")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    if h < _BRANCH_SERIES_CUTOFF:
        p = math.sqrt(2.0 * math.e * h)
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3 - 43.0 / 540.0 * p**4

    if x < 0.25:
        if h < 0.1:
            p = math.sqrt(2.0 * math.e * h)
            w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
        else:
            w = x - x * x + 1.5 * x**3
    elif x < 3.0:
        w = 0.5 * math.log1p(x) + 0.2 * x
    else:
        lx = math.log(x)
        llx = math.log(lx) if lx > 1.0 else 0.0
        w = lx - llx

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if abs(step) <= 4e-16 * (1.0 + abs(w)):
            break
    return w


def c_of_lambda(lam: float) -> float:
    """Normalizing constant ``-1/ln(1-lam)`` of the shading density."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"c(lambda) needs lambda in (0,1), got {lam!r}")
    return -1.0 / math.log1p(-lam)


def _check_gamma(gamma: float) -> None:
    if not gamma >= 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma!r}")


def lambda1(gamma: float) -> float:
    _check_gamma(gamma)
    return 1.0 / math.sqrt(1.0 + gamma)


def lambda2(gamma: float) -> float:
    _check_gamma(gamma)
    return gamma * lambert_w0(-math.exp(-2.0 / gamma) / gamma) + 1.0


def gamma0_equation(gamma: float) -> float:
    """Strictly decreasing in gamma; its root is the regime switch."""
    s = math.sqrt(gamma + 1.0)
    return 1.0 + s + gamma * s * math.log1p(-1.0 / s)


@lru_cache(maxsize=1)
def gamma0(tol: float = 1e-12) -> float:
    lo, hi = 1.0, 3.0
    if not (gamma0_equation(lo) > 0.0 > gamma0_equation(hi)):
        raise RuntimeError("gamma0 bracket [1, 3] does not change sign")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gamma0_equation(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def additive_terms(gamma: float, lam: float) -> tuple[float, float, float]:
    """The three candidates whose maximum is the additive divisor at ``lam``."""
    return (
        1.0 + 1.0 / lam,
        gamma * lam / (1.0 - lam),
        gamma / (c_of_lambda(lam) * lam),
    )


def additive_lambda(gamma: float) -> float:
    return lambda1(gamma) if gamma <= gamma0() else lambda2(gamma)


def poa_additive(gamma: float) -> tuple[float, float]:
    """Return ``(divisor, lambda)`` for additive valuations."""
    lam = additive_lambda(gamma)
    return max(additive_terms(gamma, lam)), lam


def regret_coeff_additive(gamma: float) -> float:
    lam = additive_lambda(gamma)
    return max(lam / (1.0 - lam), 1.0 / (c_of_lambda(lam) * lam)) + 1.0 / (gamma * lam)


def poa_submodular(gamma: float) -> tuple[float, float, float]:
    """Return ``(divisor, lambda, regret_coeff)`` for submodular valuations."""
    _check_gamma(gamma)
    root = math.sqrt(gamma * gamma + 4.0)
    divisor = (2.0 + gamma + root) / 2.0
    lam = 2.0 / (gamma + root)
    coeff = (1.0 + gamma + root) / gamma
    return divisor, lam, coeff


@dataclass(frozen=True)
class BoundRow:
    gamma: float
    lambda_additive: float
    poa_additive: float
    regret_coeff_additive: float
    lambda_submodular: float
    poa_submodular: float
    regret_coeff_submodular: float


@dataclass(frozen=True)
class BoundTable:
    rows: tuple[BoundRow, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "poa_additive", "poa_submodular", "lambda_additive", "lambda_submodular"])
        for r in self.rows:
            w.writerow([repr(r.gamma), repr(r.poa_additive), repr(r.poa_submodular),
                        repr(r.lambda_additive), repr(r.lambda_submodular)])
        return buf.getvalue()


def bound_row(gamma: float) -> BoundRow:
    add, lam_a = poa_additive(gamma)
    sub, lam_s, rc_s = poa_submodular(gamma)
    return BoundRow(gamma, lam_a, add, regret_coeff_additive(gamma), lam_s, sub, rc_s)


def emit_poa_curve(gamma_min: float = 1.0, gamma_max: float = 10.0, step: float = 0.05) -> BoundTable:
    if step <= 0:
        raise ValueError("step must be positive")
    _check_gamma(gamma_min)
    count = int(math.floor((gamma_max - gamma_min) / step + 1e-9)) + 1
    # gammas built from the index so 1 + 0.05*k does not drift
    gammas = [round(gamma_min + k * step, 12) for k in range(count)]
    return BoundTable(tuple(bound_row(g) for g in gammas))

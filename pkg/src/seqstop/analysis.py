"""Mean absolute error of the marginal MLE and the divergence of the conditional one.

Everything here is for mu = 0, sigma = 1 and the indicator rule. The
marginal MAE is finite and decays like 1/sqrt(n); the lower bound on the
conditional MAE restricted to |estimate| <= N / sqrt(n) grows without bound
in N (logarithmically, with slope phi(psi1(0)) against log N).
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Tuple

import numpy as np
from scipy import special as _sp

from . import special
from .estimators import PSI1, ScoreTransform
from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate  # noqa: F401

__all__ = [
    "QuadratureSpec",
    "MaeReport",
    "TruncatedBound",
    "DivergenceRow",
    "marginal_mae",
    "marginal_mae_terms",
    "truncated_bound",
    "truncated_mae_quadrature",
    "divergence_curve",
    "fit_log_slope",
    "psi1_integral",
    "integral_identity_check",
    "U_FORM_LIMIT",
]

_SQRT_HALF = math.sqrt(0.5)

# truncation levels above this use the x-variable integral
U_FORM_LIMIT = 50.0


@dataclass(frozen=True)
class MaeReport:
    n: int
    mae: float
    decomposition: Tuple[float, float]


@dataclass(frozen=True)
class TruncatedBound:
    n: int
    N: float
    value: float


class DivergenceRow(NamedTuple):
    N: float
    bound: float
    quadrature: float


@lru_cache(maxsize=None)
def marginal_mae_terms(spec=DEFAULT_SPEC):
    """(E[xi 1{xi >= 0}], E[|xi| (1 - Phi(xi))]) for standard normal xi."""
    c = spec.cutoff

    def first(u):
        return u * special.phi(u)

    def second(u):
        return np.abs(u) * special.phi(u) * special.Phi(-u)

    e1 = integrate(first, 0.0, c, spec)
    e2 = integrate(second, -c, 0.0, spec) + integrate(second, 0.0, c, spec)
    return e1, e2


def marginal_mae(n, spec=DEFAULT_SPEC):
    """E|mean over the realised sample| at mu = 0, split into its two stages."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    e1, e2 = marginal_mae_terms(spec)
    one_at_1 = e1
    two_at_1 = e2 / math.sqrt(2.0)
    rn = math.sqrt(n)
    mae = (one_at_1 + two_at_1) / rn
    stage_one = one_at_1 / rn
    return MaeReport(int(n), mae, (stage_one, mae - stage_one))


def _psi1_integral_and_tail(N):
    # -log erfcx(N / sqrt 2) equals int_{-N}^0 psi1; N * psi1(-N) is the
    # boundary term of the inverse-function integral identity.
    return -np.log(_sp.erfcx(N * _SQRT_HALF)), N * PSI1(-N)


def psi1_integral(N):
    """int_{-N}^0 psi1(u) du = log(1/2) - N^2/2 - log Phi(-N), in a form free of cancellation."""
    if not N >= 0:
        raise ValueError("N must be non-negative")
    return float(_psi1_integral_and_tail(float(N))[0])


def truncated_bound(n, N):
    """Lower bound on the stage-one conditional MAE from |estimate| <= N / sqrt(n).

    phi(psi1(0)) / sqrt(n) * (log(1/2) + N^2/2 - log Phi(-N) - N phi(-N)/Phi(-N)),
    rearranged so the N^2 terms cancel analytically: the bracket equals
    -log erfcx(N / sqrt 2) - N psi1(-N).
    """
    if not N > 0:
        raise ValueError("N must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    integral, tail = _psi1_integral_and_tail(float(N))
    value = special.phi(PSI1(0.0)) * (integral - tail) / math.sqrt(n)
    return TruncatedBound(int(n), float(N), float(value))


def truncated_mae_quadrature(n, N, spec=DEFAULT_SPEC):
    """(1/sqrt n) * int_{psi1(-N)}^{psi1(0)} |psi1^{-1}(u)| phi(u) du.

    For N above U_FORM_LIMIT the same integral is taken over x = psi1^{-1}(u),
    i.e. int_{-N}^0 |x| psi1'(x) phi(psi1(x)) dx, which never inverts psi1
    near its flat left asymptote.
    """
    if not N > 0:
        raise ValueError("N must be positive")
    N = float(N)
    if N <= U_FORM_LIMIT:
        def integrand(u):
            return np.abs(PSI1.invert(u)) * special.phi(u)

        value = integrate(integrand, PSI1(-N), PSI1(0.0), spec)
    else:
        def integrand(x):
            return np.abs(x) * PSI1.derivative(x) * special.phi(PSI1(x))

        # geometric breakpoints keep the 1/|x| tail well resolved
        pts = [-N]
        while pts[-1] < -1.0:
            pts.append(pts[-1] / 4.0)
        pts.append(0.0)
        value = math.fsum(integrate(integrand, a, b, spec) for a, b in zip(pts[:-1], pts[1:]))
    return value / math.sqrt(n)


def divergence_curve(n, levels, spec=DEFAULT_SPEC, workers=1):
    """Rows (N, bound, quadrature) for increasing truncation levels."""
    levels = [float(v) for v in levels]
    if any(v <= 0 for v in levels):
        raise ValueError("levels must be positive")
    if any(b <= a for a, b in zip(levels[:-1], levels[1:])):
        raise ValueError("levels must be strictly increasing")

    def row(N):
        return DivergenceRow(N, truncated_bound(n, N).value, truncated_mae_quadrature(n, N, spec))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(row, levels))
    return [row(N) for N in levels]


def fit_log_slope(levels, values):
    """Least-squares slope of values against log(levels)."""
    slope, _ = np.polyfit(np.log(np.asarray(levels, dtype=float)), np.asarray(values, dtype=float), 1)
    return float(slope)


def integral_identity_check(transform: ScoreTransform, a, b, spec=DEFAULT_SPEC):
    """|int_a^b f + int_{f(a)}^{f(b)} f^{-1} - (b f(b) - a f(a))| by quadrature."""
    if not a < b:
        raise ValueError("need a < b")
    fa, fb = transform(a), transform(b)
    direct = integrate(lambda x: transform(x), a, b, spec)
    inverse = integrate(lambda y: transform.invert(y), fa, fb, spec)
    return abs(direct + inverse - (b * fb - a * fa))

"""Standard normal density, distribution function and Mills ratios.

Every function accepts a scalar or an array and returns the same kind.
Tails are routed through the scaled complementary error function so that
nothing underflows for arguments of a few hundred (or far more).
"""

import math

import numpy as np
from scipy import special as _sp

from .errors import DomainError

__all__ = ["phi", "Phi", "log_Phi", "mills_lower", "mills_upper"]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_SQRT_HALF = math.sqrt(0.5)
_LOG_HALF = math.log(0.5)


def _checked(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("argument must be finite")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def phi(x):
    """Standard normal density."""
    a = _checked(x)
    return _out(_INV_SQRT_2PI * np.exp(-0.5 * a * a), x)


def Phi(x):
    """Standard normal CDF, computed as erfc(-x/sqrt 2) / 2.

    Below -37 erfc itself flushes to zero, so the subnormal range is reached
    through erfcx(-x/sqrt 2) * exp(-x^2/2) / 2 instead.
    """
    a = _checked(x)
    out = 0.5 * _sp.erfc(-a * _SQRT_HALF)
    deep = a < -37.0
    if np.any(deep):
        ad = a[deep] if out.ndim else a
        vals = 0.5 * _sp.erfcx(-ad * _SQRT_HALF) * np.exp(-0.5 * ad * ad)
        if out.ndim:
            out[deep] = vals
        else:
            out = vals
    return _out(out, x)


def log_Phi(x):
    """Logarithm of the standard normal CDF.

    For x < -5 the identity Phi(x) = erfcx(-x/sqrt 2) exp(-x^2/2) / 2 keeps
    the result exact where Phi itself would underflow. For x > 0 the value
    is log1p(-Phi(-x)) so that the tiny negative result keeps full precision.
    """
    a = _checked(x)
    out = np.empty_like(a)
    lo = a < -5.0
    hi = a > 0.0
    mid = ~(lo | hi)
    out[lo] = _LOG_HALF + np.log(_sp.erfcx(-a[lo] * _SQRT_HALF)) - 0.5 * a[lo] ** 2
    out[mid] = np.log(0.5 * _sp.erfc(-a[mid] * _SQRT_HALF))
    out[hi] = np.log1p(-0.5 * _sp.erfc(a[hi] * _SQRT_HALF))
    return _out(out, x)


def mills_lower(x):
    """phi(x) / Phi(x).

    Behaves like |x| + 1/|x| as x -> -inf and decays to 0 like phi(x) as
    x -> +inf.
    """
    a = _checked(x)
    out = np.empty_like(a)
    neg = a < 0.0
    # phi/Phi = sqrt(2/pi) / erfcx(-x/sqrt 2); the exp(-x^2/2) factors cancel.
    out[neg] = _SQRT_2_OVER_PI / _sp.erfcx(-a[neg] * _SQRT_HALF)
    pos = ~neg
    ap = a[pos]
    out[pos] = _INV_SQRT_2PI * np.exp(-0.5 * ap * ap) / (0.5 * _sp.erfc(-ap * _SQRT_HALF))
    return _out(out, x)


def mills_upper(x):
    """phi(x) / (1 - Phi(x)), evaluated as mills_lower(-x)."""
    a = _checked(x)
    return _out(mills_lower(-a), x)

"""Marginal and conditional maximum likelihood estimates of mu (sigma = 1).

The conditional MLE solves a score equation that, after the substitution
x = sqrt(n) * theta, reads

    stage one:  K_n / sqrt(n)     = psi1(x) = x + phi(x) / Phi(x)
    stage two:  K_2n / sqrt(2 n)  = psi2(x) = sqrt(2) x - phi(x) / (sqrt(2) (1 - Phi(x)))

Both maps are strictly increasing bijections (psi1 onto (0, inf), psi2 onto
the real line) and are inverted by a bracketed Newton iteration.
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import special
from .errors import DegenerateStatisticError, DomainError, SolverError
from .model import INDICATOR, Stage, TrialOutcome, stop_probability
from .quadrature import DEFAULT_SPEC, integrate

__all__ = [
    "Method",
    "Estimate",
    "ScoreTransform",
    "PSI1",
    "PSI2",
    "score_eval",
    "score_invert",
    "marginal_mle",
    "marginal_loglik",
    "conditional_mle",
    "conditional_mle_values",
    "conditional_loglik",
    "conditional_score",
    "conditional_mle_generic",
]

_SQRT2 = math.sqrt(2.0)
_CF_TERMS = 40
_TAIL = -5.0
_MAX_ITER = 200
_RTOL = 1e-12


class Method(enum.Enum):
    MARGINAL = "marginal"
    CONDITIONAL_CLOSED = "conditional_closed"
    CONDITIONAL_GENERIC = "conditional_generic"


@dataclass(frozen=True)
class Estimate:
    value: float
    method: Method
    iterations: int = 0
    residual: float = 0.0
    bracket: Optional[Tuple[float, float]] = None


def _psi1_tail(z):
    """psi1(-z) and psi1'(-z) for z >= 5 from the Mills-ratio continued fraction.

    With K_j = z + (j + 1) / K_{j+1}, psi1(-z) = 1 / K_1, and the derivative
    (2 K_1 - K_2) / (K_1^2 K_2) avoids the cancellation in 1 - m * psi1.
    """
    k = z.copy()
    k2 = z
    for j in range(_CF_TERMS - 1, 0, -1):
        k2 = k
        k = z + (j + 1) / k
    with np.errstate(over="ignore"):
        deriv = (2.0 * k - k2) / (k * k * k2)
    return 1.0 / k, deriv


def _psi1(x, with_derivative=False):
    x = np.asarray(x, dtype=float)
    val = np.empty_like(x)
    der = np.empty_like(x)
    tail = x < _TAIL
    if tail.any():
        val[tail], der[tail] = _psi1_tail(-x[tail])
    body = ~tail
    if body.any():
        xb = x[body]
        m = special.mills_lower(xb)
        val[body] = xb + m
        der[body] = 1.0 - m * (xb + m)
    return (val, der) if with_derivative else val


def _psi2(x, with_derivative=False):
    x = np.asarray(x, dtype=float)
    mu = special.mills_upper(x)
    val = _SQRT2 * x - mu / _SQRT2
    if not with_derivative:
        return val
    return val, _SQRT2 - mu * (mu - x) / _SQRT2


@dataclass(frozen=True)
class ScoreTransform:
    """psi1 (stage ONE) or psi2 (stage TWO)."""

    stage: Stage

    def __call__(self, x):
        a = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(a)):
            raise DomainError("argument must be finite")
        v = _psi1(a) if self.stage is Stage.ONE else _psi2(a)
        return float(v) if np.ndim(x) == 0 else v

    def derivative(self, x):
        a = np.asarray(x, dtype=float)
        f = _psi1 if self.stage is Stage.ONE else _psi2
        d = f(a, with_derivative=True)[1]
        return float(d) if np.ndim(x) == 0 else d

    def invert(self, y, full_output=False):
        """x with psi(x) = y.

        Converges when |psi(x) - y| <= 1e-12 * max(1, |y|) (relative 1e-12
        for stage-one targets below 1) or the bracket shrinks to rounding
        level. With full_output, also returns per-element iteration counts
        and final residuals.
        """
        ya = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(ya)):
            raise DomainError("target must be finite")
        if self.stage is Stage.ONE and np.any(ya <= 0):
            raise DomainError("target outside range of psi1 (must be > 0)")
        x, its, res = _invert(self.stage, np.atleast_1d(ya))
        if np.ndim(y) == 0:
            x, its, res = float(x[0]), int(its[0]), float(res[0])
        return (x, its, res) if full_output else x


PSI1 = ScoreTransform(Stage.ONE)
PSI2 = ScoreTransform(Stage.TWO)


def score_eval(t, x):
    return t(x)


def score_invert(t, y):
    return t.invert(y)


def _initial_bracket(stage, y):
    if stage is Stage.ONE:
        small = y < _psi1(0.0)
        # psi1(x) ~ -1/x on the left, psi1(x) > x everywhere
        lo = np.where(small, -2.0 / y, 0.0)
        hi = np.where(small, 0.0, y)
        x0 = np.where(small, -1.0 / y + y, 0.5 * y)
    else:
        lo = y / _SQRT2 - 1.0
        hi = y / _SQRT2 + 1.0
        x0 = y / _SQRT2
    return lo, hi, x0


def _invert(stage, y):
    f = _psi1 if stage is Stage.ONE else _psi2
    lo, hi, x = _initial_bracket(stage, y)
    lo, hi = lo.astype(float), hi.astype(float)

    # geometric growth until the target is enclosed
    width = np.maximum(hi - lo, 1.0)
    for _ in range(_MAX_ITER):
        rlo = f(lo) - y
        rhi = f(hi) - y
        bad_lo = rlo > 0
        bad_hi = rhi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
        width = np.where(bad_lo | bad_hi, 2.0 * width, width)
    else:
        raise SolverError("could not bracket the root")

    x = np.clip(x, lo, hi)
    if stage is Stage.ONE:
        tol = _RTOL * y
    else:
        tol = _RTOL * np.maximum(1.0, np.abs(y))
    iters = np.zeros(y.shape, dtype=int)
    resid = np.full(y.shape, np.inf)
    active = np.ones(y.shape, dtype=bool)
    # alternate false position and bisection when Newton leaves the bracket
    last_fp = np.zeros(y.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xa = x[idx]
        val, der = f(xa, with_derivative=True)
        r = val - y[idx]
        resid[idx] = np.abs(r)
        iters[idx] += 1
        left = r < 0
        right = r > 0
        la = np.where(left, xa, lo[idx])
        ha = np.where(right, xa, hi[idx])
        rl = np.where(left, r, rlo[idx])
        rh = np.where(right, r, rhi[idx])
        lo[idx], hi[idx], rlo[idx], rhi[idx] = la, ha, rl, rh
        narrow = (ha - la) <= 4.0 * np.spacing(np.maximum(np.abs(la), np.abs(ha)))
        done = (np.abs(r) <= tol[idx]) | narrow | (r == 0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = xa - r / der
            fp = la - rl * (ha - la) / (rh - rl)
        inside = np.isfinite(step) & (step >= la) & (step <= ha)
        use_fp = ~inside & ~last_fp[idx] & np.isfinite(fp) & (fp > la) & (fp < ha)
        last_fp[idx] = use_fp
        fallback = np.where(use_fp, fp, 0.5 * (la + ha))
        # converged entries still take their last in-bracket Newton step
        x[idx] = np.where(inside, step, np.where(done, xa, fallback))
        active[idx[done]] = False
    if active.any():
        raise SolverError("score inversion did not converge in %d iterations" % _MAX_ITER)
    return x, iters, resid


def marginal_mle(outcome):
    """Sample mean over the realised sample size."""
    return Estimate(outcome.k_final / outcome.sample_size, Method.MARGINAL)


def marginal_loglik(theta, outcome):
    n_tot = outcome.sample_size
    return -((outcome.k_final - n_tot * theta) ** 2) / (2.0 * n_tot)


def _require_stage_one_positive(k):
    if k == 0:
        raise DegenerateStatisticError("degenerate statistic: K_n = 0 gives an estimate of -inf")
    if k < 0:
        raise DomainError("stage-one sum < 0 is inconsistent with stopping rule")


def _stage_one_value(k, n, x):
    # k/n minus the (non-negative) correction: equals the marginal MLE
    # exactly once the gap psi1(x) - x drops below double resolution.
    rn = math.sqrt(n)
    return k / n - np.maximum(k / rn - x, 0.0) / rn


def conditional_mle(outcome):
    """Conditional MLE under the indicator rule (closed path via psi inversion)."""
    rn = math.sqrt(outcome.n)
    if outcome.stage is Stage.ONE:
        _require_stage_one_positive(outcome.k_final)
        x, its, res = PSI1.invert(outcome.k_final / rn, full_output=True)
        value = float(_stage_one_value(outcome.k_final, outcome.n, x))
    else:
        x, its, res = PSI2.invert(outcome.k_final / math.sqrt(2 * outcome.n), full_output=True)
        value = x / rn
    return Estimate(value, Method.CONDITIONAL_CLOSED, its, res)


def conditional_mle_values(stage, n, k_final):
    """Vectorised closed-path conditional MLE for arrays of outcomes.

    Stage-one entries with k_final <= 0 come back as nan.
    """
    stage = np.asarray(stage)
    k = np.asarray(k_final, dtype=float)
    out = np.full(k.shape, np.nan)
    rn = math.sqrt(n)
    one = (stage == Stage.ONE) & (k > 0)
    two = stage == Stage.TWO
    if one.any():
        out[one] = _stage_one_value(k[one], n, PSI1.invert(k[one] / rn))
    if two.any():
        out[two] = PSI2.invert(k[two] / math.sqrt(2 * n)) / rn
    return out


def _kn_law(n, theta, spec):
    rn = math.sqrt(n)
    lo = n * theta - spec.cutoff * rn
    hi = n * theta + spec.cutoff * rn

    def dens(k):
        return special.phi((k - n * theta) / rn) / rn

    return dens, lo, hi


def _smooth_stage_mass(rule, n, theta, stage, spec):
    """P_theta[stage] and its theta-derivative for a smooth rule."""
    dens, lo, hi = _kn_law(n, theta, spec)

    def weight(k):
        p = stop_probability(rule, n, k)
        return p if stage is Stage.ONE else 1.0 - p

    mass = integrate(lambda k: weight(k) * dens(k), lo, hi, spec)
    dmass = integrate(lambda k: weight(k) * (k - n * theta) * dens(k), lo, hi, spec)
    return mass, dmass


def conditional_loglik(theta, outcome, rule=INDICATOR, spec=DEFAULT_SPEC):
    """log L(theta | N_n = N) up to theta-free constants.

    Includes log P[stage | K_n], which is -inf for outcomes the rule cannot
    produce.
    """
    ll = marginal_loglik(theta, outcome)
    p_stop = stop_probability(rule, outcome.n, outcome.k_interim)
    p_obs = p_stop if outcome.stage is Stage.ONE else 1.0 - p_stop
    if p_obs <= 0.0:
        return -math.inf
    ll += math.log(p_obs)
    if rule.is_indicator:
        t = math.sqrt(outcome.n) * theta
        ll -= special.log_Phi(t if outcome.stage is Stage.ONE else -t)
    else:
        mass, _ = _smooth_stage_mass(rule, outcome.n, theta, outcome.stage, spec)
        if mass <= 0.0:
            raise SolverError("stage probability underflows at theta=%g" % theta)
        ll -= math.log(mass)
    return ll


def conditional_score(theta, outcome, rule=INDICATOR, spec=DEFAULT_SPEC):
    """d/dtheta of conditional_loglik."""
    score = outcome.k_final - outcome.sample_size * theta
    rn = math.sqrt(outcome.n)
    if rule.is_indicator:
        t = rn * theta
        if outcome.stage is Stage.ONE:
            return score - rn * special.mills_lower(t)
        return score + rn * special.mills_upper(t)
    mass, dmass = _smooth_stage_mass(rule, outcome.n, theta, outcome.stage, spec)
    return score - dmass / mass


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def conditional_mle_generic(outcome, rule=INDICATOR, bounds=(-50.0, 50.0), spec=DEFAULT_SPEC):
    """Maximise conditional_loglik numerically.

    Expands a three-point bracket from the marginal MLE, narrows it by
    golden-section search and finishes by bisection on the sign of the
    score. Raises SolverError if the maximum is not bracketed inside
    `bounds`.
    """
    lo_b, hi_b = bounds

    def ll(t):
        return conditional_loglik(t, outcome, rule, spec)

    def score(t):
        return conditional_score(t, outcome, rule, spec)

    if not math.isfinite(ll(0.5 * (lo_b + hi_b))):
        raise DomainError("outcome has zero probability under this rule")

    b = min(max(outcome.k_final / outcome.sample_size, lo_b), hi_b)
    fb = ll(b)
    evals = 1
    direction = 1.0 if score(b) > 0 else -1.0
    step = 0.5
    a, fa = b, fb
    while True:
        c = min(max(b + direction * step, lo_b), hi_b)
        fc = ll(c)
        evals += 1
        if fc < fb:
            break
        if c in (lo_b, hi_b):
            # at a bound: the maximum is inside only if the score points back in
            if direction * score(c) > 0:
                raise SolverError("no bracket for the maximum within [%g, %g]" % bounds)
            a = b
            break
        a, fa, b, fb = b, fb, c, fc
        step *= 2.0
    lo, hi = min(a, c), max(a, c)

    # golden section down to a coarse width
    x1 = hi - _GOLD * (hi - lo)
    x2 = lo + _GOLD * (hi - lo)
    f1, f2 = ll(x1), ll(x2)
    while hi - lo > 1e-4 * max(1.0, abs(lo)):
        if f1 > f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLD * (hi - lo)
            f1 = ll(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLD * (hi - lo)
            f2 = ll(x2)
        evals += 1

    # bisection on the score sign; widen if rounding misplaced the bracket
    width = hi - lo
    for _ in range(60):
        if score(lo) > 0 and score(hi) < 0:
            break
        lo, hi = max(lo - width, lo_b), min(hi + width, hi_b)
        width *= 2.0
    else:
        raise SolverError("score has no sign change near the golden-section maximum")
    bracket = (lo, hi)
    while hi - lo > 1e-13 * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        s = score(mid)
        evals += 1
        if s == 0:
            lo = hi = mid
        elif s > 0:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return Estimate(theta, Method.CONDITIONAL_GENERIC, evals, abs(score(theta)), bracket)

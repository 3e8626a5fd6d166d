import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate as sci
from scipy import optimize, stats

from seqstop import analysis
from seqstop.analysis import (
    divergence_curve,
    fit_log_slope,
    integral_identity_check,
    marginal_mae,
    marginal_mae_terms,
    psi1_integral,
    truncated_bound,
    truncated_mae_quadrature,
)
from seqstop.estimators import PSI1, PSI2
from seqstop.special import Phi, log_Phi, mills_lower, phi

mp.mp.dps = 50


def mp_bound(n, N):
    N = mp.mpf(N)
    c = mp.npdf(2 * mp.npdf(0))
    P = mp.ncdf(-N)
    return c * (mp.log(0.5) + N ** 2 / 2 - mp.log(P) - N * mp.npdf(N) / P) / mp.sqrt(n)


def scipy_truncated(n, N):
    """Same integral via scipy quad and brentq inversion of a plain-float psi1."""
    psi1 = lambda x: x + stats.norm.pdf(x) / stats.norm.cdf(x)
    inv = lambda u: optimize.brentq(lambda x: psi1(x) - u, -N - 1, 1.0, xtol=1e-14)
    val, _ = sci.quad(lambda u: abs(inv(u)) * stats.norm.pdf(u), psi1(-N), psi1(0.0), epsabs=1e-12)
    return val / math.sqrt(n)


# --- marginal MAE -------------------------------------------------------------

def test_mae_terms_closed_values():
    e1, e2 = marginal_mae_terms()
    assert e1 == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)
    # E|xi|(1 - Phi(xi)) = E|xi| Phi(xi) by reflection; they sum to E|xi|
    ref_sym, _ = sci.quad(lambda u: abs(u) * stats.norm.pdf(u) * stats.norm.cdf(u), -np.inf, np.inf, epsabs=1e-13)
    assert e2 == pytest.approx(ref_sym, abs=1e-10)
    assert e2 + ref_sym == pytest.approx(math.sqrt(2 / math.pi), abs=1e-10)


def test_mae_values():
    r = marginal_mae(1)
    assert r.mae == pytest.approx(0.681037, abs=1e-6)
    assert r.mae == pytest.approx(phi(0.0) * (1 + 1 / math.sqrt(2)), abs=1e-12)
    assert marginal_mae(100).mae == r.mae / 10
    assert sum(r.decomposition) == pytest.approx(r.mae, rel=1e-15)
    assert marginal_mae(10 ** 8).mae < 1e-4


def test_mae_against_density_integral():
    # integrate |k|/N against the joint density slices directly
    from seqstop.model import Stage, joint_density
    n = 9
    f1 = lambda k: k / n * joint_density(n, Stage.ONE, k)
    f2 = lambda k: abs(k) / (2 * n) * joint_density(n, Stage.TWO, k)
    c = 12 * math.sqrt(2 * n)
    v = sci.quad(f1, 0, c, epsabs=1e-13)[0] + sci.quad(f2, -c, 0, epsabs=1e-13)[0] + sci.quad(f2, 0, c, epsabs=1e-13)[0]
    assert marginal_mae(n).mae == pytest.approx(v, abs=1e-10)


def test_mae_validation():
    with pytest.raises(ValueError):
        marginal_mae(0)


# --- truncated bound ---------------------------------------------------------

@pytest.mark.parametrize("n, N", [(1, 1), (1, 2), (1, 5), (1, 10), (4, 10), (1, 100), (1, 1000), (25, 50)])
def test_bound_against_literal_formula(n, N):
    assert truncated_bound(n, N).value == pytest.approx(float(mp_bound(n, N)), rel=1e-10)


def test_bound_examples():
    assert truncated_bound(1, 5).value == pytest.approx(0.2725767, abs=1e-7)
    assert truncated_bound(1, 10).value == pytest.approx(0.4518724, abs=1e-7)
    assert truncated_bound(4, 10).value == truncated_bound(1, 10).value / 2
    assert phi(PSI1(0.0)) == pytest.approx(0.290182, abs=1e-6)


def test_bound_double_precision_literal():
    # the literal expression in doubles loses digits as N grows but agrees
    for N in (2.0, 10.0, 30.0):
        lit = phi(PSI1(0.0)) * (math.log(0.5) + N * N / 2 - log_Phi(-N) - N * mills_lower(-N))
        assert truncated_bound(1, N).value == pytest.approx(lit, rel=1e-9)


def test_bound_monotone_and_scaling():
    levels = [2, 3, 5, 10, 20, 50, 100, 200, 500, 1000]
    vals = [truncated_bound(1, N).value for N in levels]
    assert all(b > a for a, b in zip(vals[:-1], vals[1:]))
    for n in (4, 9, 100):
        assert truncated_bound(n, 7).value == pytest.approx(truncated_bound(1, 7).value / math.sqrt(n), rel=1e-15)


def test_bound_log_growth():
    c = phi(PSI1(0.0))
    for N in (200.0, 500.0, 1000.0):
        step = truncated_bound(1, 2 * N).value - truncated_bound(1, N).value
        assert step == pytest.approx(c * math.log(2), rel=1e-3)
    assert c * math.log(2) == pytest.approx(0.201139, abs=1e-6)


def test_bound_diverges():
    vals = [truncated_bound(1, 10.0 ** k).value for k in (1, 2, 3, 6, 12)]
    assert all(b > a for a, b in zip(vals[:-1], vals[1:]))
    assert vals[-1] > 7.0


# --- truncated quadrature ------------------------------------------------------

@pytest.mark.parametrize("n, N", [(1, 1.0), (1, 5.0), (4, 10.0), (1, 30.0)])
def test_quadrature_against_scipy(n, N):
    assert truncated_mae_quadrature(n, N) == pytest.approx(scipy_truncated(n, N), abs=1e-8)


def test_quadrature_forms_agree(monkeypatch):
    u_form = truncated_mae_quadrature(1, 50.0)
    monkeypatch.setattr(analysis, "U_FORM_LIMIT", 1.0)
    assert truncated_mae_quadrature(1, 50.0) == pytest.approx(u_form, abs=1e-9)
    assert truncated_mae_quadrature(1, 5.0) == pytest.approx(scipy_truncated(1, 5.0), abs=1e-8)


def test_quadrature_vanishes_with_N():
    assert truncated_mae_quadrature(1, 1e-6) < 1e-10


@pytest.mark.parametrize("n", [1, 4, 25])
@pytest.mark.parametrize("N", [1, 2, 5, 10, 50, 100, 1000])
def test_quadrature_dominates_bound(n, N):
    assert truncated_mae_quadrature(n, N) >= truncated_bound(n, N).value


def test_divergence_curve_rows():
    rows = divergence_curve(1, [5, 10, 100])
    assert [r.N for r in rows] == [5.0, 10.0, 100.0]
    assert rows[0].bound == pytest.approx(0.2725767, abs=1e-7)
    assert rows[1].bound == pytest.approx(0.4518724, abs=1e-7)
    assert all(r.quadrature > r.bound for r in rows)
    half = divergence_curve(4, [5, 10, 100])
    for a, b in zip(rows, half):
        assert b.bound == pytest.approx(a.bound / 2, rel=1e-15)
        assert b.quadrature == pytest.approx(a.quadrature / 2, rel=1e-12)


def test_divergence_curve_parallel_identical():
    levels = [2, 5, 10, 50, 100, 500]
    assert divergence_curve(1, levels, workers=4) == divergence_curve(1, levels)


def test_divergence_curve_validation():
    with pytest.raises(ValueError):
        divergence_curve(1, [10, 5])
    with pytest.raises(ValueError):
        divergence_curve(1, [0, 5])


def test_slope_fit():
    levels = np.arange(100, 1001, 100)
    slope = fit_log_slope(levels, [truncated_bound(1, N).value for N in levels])
    assert slope == pytest.approx(phi(PSI1(0.0)), rel=0.01)
    assert fit_log_slope([1, math.e, math.e ** 2], [3, 5, 7]) == pytest.approx(2.0)


# --- integral identity ---------------------------------------------------------

def test_identity_examples():
    assert integral_identity_check(PSI1, -5, 0) < 1e-8
    assert integral_identity_check(PSI2, -3, 3) < 1e-8
    assert integral_identity_check(PSI1, -40, 3) < 1e-8


@pytest.mark.parametrize("N", [1, 5, 10, 200])
def test_psi1_integral_closed(N):
    quad = sci.quad(lambda u: float(PSI1(u)), -N, 0, epsabs=1e-13, limit=200)[0]
    assert psi1_integral(N) == pytest.approx(quad, abs=1e-8)
    ref = mp.log(0.5) - mp.mpf(N) ** 2 / 2 - mp.log(mp.ncdf(-N))
    assert psi1_integral(N) == pytest.approx(float(ref), rel=1e-12)


def test_bound_chain_assembles():
    # bracket of the bound = integral of psi1 minus N psi1(-N)
    for N in (1.0, 5.0, 10.0):
        bracket = truncated_bound(1, N).value / phi(PSI1(0.0))
        assert bracket == pytest.approx(psi1_integral(N) - N * PSI1(-N), abs=1e-12)

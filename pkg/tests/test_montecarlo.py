import math

import numpy as np
import pytest
from scipy import stats

from seqstop.analysis import marginal_mae, truncated_bound
from seqstop.estimators import PSI1
from seqstop.model import Stage, StoppingRule, TrialConfig
from seqstop.montecarlo import (
    CHUNK_SIZE,
    McSpec,
    chunk_generator,
    run_mc,
    simulate_outcomes,
    standard_normals,
    tail_histogram,
)
from seqstop.special import Phi, phi


def test_spec_validation():
    cfg = TrialConfig(2)
    with pytest.raises(ValueError):
        McSpec(cfg, 0)
    with pytest.raises(ValueError):
        McSpec(cfg, 10, thresholds=(10, 5))
    with pytest.raises(ValueError):
        McSpec(cfg, 10, seed=-1)


def test_normals_are_standard():
    z = standard_normals(chunk_generator(5, 0), 200000)
    assert stats.kstest(z, "norm").pvalue > 0.001
    assert np.all(np.isfinite(z))


def test_chunk_streams_distinct_and_reproducible():
    a = standard_normals(chunk_generator(1, 0), 8)
    b = standard_normals(chunk_generator(1, 1), 8)
    c = standard_normals(chunk_generator(2, 0), 8)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    np.testing.assert_array_equal(a, standard_normals(chunk_generator(1, 0), 8))


def test_outcomes_respect_rule():
    stage, ki, kf = simulate_outcomes(TrialConfig(3, mu=0.1), 3 * CHUNK_SIZE + 17, seed=9)
    assert stage.size == 3 * CHUNK_SIZE + 17
    one = stage == Stage.ONE
    assert np.all(ki[one] >= 0) and np.all(kf[one] == ki[one])
    assert np.all(ki[~one] < 0)


def test_outcomes_second_stage_law():
    # K_2n - K_n ~ N(n mu, n sigma^2), independent of the first stage
    stage, ki, kf = simulate_outcomes(TrialConfig(5, mu=0.3, sigma=2.0), 200000, seed=4)
    inc = (kf - ki)[stage == Stage.TWO]
    assert stats.kstest(inc, "norm", args=(1.5, 2.0 * math.sqrt(5))).pvalue > 0.001


@pytest.mark.parametrize("workers", [1, 4, 8])
def test_deterministic_across_workers(workers):
    spec = McSpec(TrialConfig(4), 5 * CHUNK_SIZE + 123, seed=77, thresholds=(10.0, 100.0))
    assert run_mc(spec, workers=workers) == run_mc(spec, workers=1)


def test_summary_fields():
    s = run_mc(McSpec(TrialConfig(2), 1000, seed=1, thresholds=(1.0, 10.0)))
    assert s.reps == 1000 and 0 <= s.stage_one_freq <= 1
    assert [t.threshold for t in s.conditional_truncated_mae] == [1.0, 10.0]
    assert s.degenerate_count == 0


@pytest.mark.slow
@pytest.mark.parametrize("n", [4, 25, 100])
def test_marginal_mae_matches_closed_form(n):
    s = run_mc(McSpec(TrialConfig(n), 10 ** 6, seed=1000 + n))
    assert abs(s.marginal_mae - marginal_mae(n).mae) < 3 * s.marginal_mae_se
    assert abs(s.stage_one_freq - 0.5) < 0.0015


@pytest.mark.slow
def test_sigma_rescaling():
    # with sigma = 3 the MAE scales by 3
    s = run_mc(McSpec(TrialConfig(25, sigma=3.0), 10 ** 6, seed=8))
    assert abs(s.marginal_mae - 3 * marginal_mae(25).mae) < 3 * s.marginal_mae_se


@pytest.mark.slow
def test_truncated_conditional_dominates_bound():
    s = run_mc(McSpec(TrialConfig(1), 10 ** 6, seed=21, thresholds=(5.0, 10.0)))
    for t in s.conditional_truncated_mae:
        assert t.value + 3 * t.se >= truncated_bound(1, t.threshold).value


@pytest.mark.slow
def test_truncated_conditional_grows_log_linearly():
    s = run_mc(McSpec(TrialConfig(1), 2 * 10 ** 6, seed=5, thresholds=(10.0, 100.0, 1000.0, 10000.0)))
    v = [t.value for t in s.conditional_truncated_mae]
    gaps = np.diff(v)
    assert np.all(gaps > 0)
    # Cauchy-like tail: each decade adds about phi(0) ln 10
    np.testing.assert_allclose(gaps, phi(0.0) * math.log(10), rtol=0.15)


def test_smooth_rule_runs():
    rule = StoppingRule.smooth(lambda z: 0.5 * (1 + np.tanh(np.asarray(z))), gamma=0.5)
    s = run_mc(McSpec(TrialConfig(4, rule=rule), 300, seed=2, thresholds=(5.0,)))
    assert 0 < s.stage_one_freq < 1
    assert s.conditional_truncated_mae[0].value > 0


def test_tail_histogram_bookkeeping():
    spec = McSpec(TrialConfig(1), 300000, seed=12)
    info = {}
    rows = tail_histogram(spec, 16, summary=info)
    assert len(rows) == 16
    assert rows[0].lower == 0.0 and rows[-1].upper == math.inf
    stage, _, _ = simulate_outcomes(spec.config, spec.reps, spec.seed)
    two = int(np.sum(stage == Stage.TWO))
    assert sum(r.count for r in rows) == spec.reps - info["degenerate"] - two
    with pytest.raises(ValueError):
        tail_histogram(spec, 5)


@pytest.mark.slow
def test_tail_histogram_octaves_against_exact_law():
    reps = 4 * 10 ** 6
    rows = tail_histogram(McSpec(TrialConfig(1), reps, seed=31), 14, first_octave=0)
    observed, expected = [], []
    for r in rows[1:11]:
        a, b = r.lower, r.upper
        # |estimate| in [a, b): negative side K_n in (psi1(-b), psi1(-a)],
        # positive side K_n in [psi1(a), psi1(b))
        p = (Phi(PSI1(-a)) - Phi(PSI1(-b))) + (Phi(PSI1(b)) - Phi(PSI1(a)))
        observed.append(r.count)
        expected.append(reps * p)
    observed, expected = np.array(observed), np.array(expected)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    assert stats.chi2.sf(chi2, len(observed)) > 0.001
    # 1/x^2 tail: counts halve per octave, first-moment mass per octave is flat
    np.testing.assert_allclose(expected[4:] / expected[3:-1], 0.5, rtol=0.02)
    mass = np.array([r.abs_mass for r in rows[4:11]])
    np.testing.assert_allclose(mass, phi(0.0) * math.log(2), rtol=0.2)

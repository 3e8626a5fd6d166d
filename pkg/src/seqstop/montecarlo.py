"""Replicated trials with reproducible, worker-count-independent reduction.

Replications are cut into chunks of CHUNK_SIZE. Chunk i draws from its own
Philox stream keyed by (seed, i), and per-chunk summaries are merged in
chunk order, so the result depends only on the seed and never on how many
threads computed the chunks.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import special as _sp

from .errors import SolverError
from .estimators import conditional_mle_generic, conditional_mle_values
from .model import Stage, TrialConfig, TrialOutcome

__all__ = [
    "CHUNK_SIZE",
    "McSpec",
    "McSummary",
    "TruncatedMae",
    "HistogramRow",
    "chunk_generator",
    "standard_normals",
    "simulate_outcomes",
    "run_mc",
    "tail_histogram",
]

CHUNK_SIZE = 2 ** 16
_TWO_M53 = 2.0 ** -53


@dataclass(frozen=True)
class McSpec:
    config: TrialConfig
    reps: int
    seed: int = 0
    thresholds: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if int(self.reps) != self.reps or self.reps < 1:
            raise ValueError("reps must be a positive integer")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        t = self.thresholds
        if any(v <= 0 for v in t) or any(b <= a for a, b in zip(t[:-1], t[1:])):
            raise ValueError("thresholds must be positive and strictly increasing")


@dataclass(frozen=True)
class TruncatedMae:
    threshold: float
    value: float
    se: float


@dataclass(frozen=True)
class McSummary:
    reps: int
    stage_one_freq: float
    marginal_mae: float
    marginal_mae_se: float
    conditional_truncated_mae: Tuple[TruncatedMae, ...] = field(default_factory=tuple)
    degenerate_count: int = 0


@dataclass(frozen=True)
class HistogramRow:
    lower: float
    upper: float
    count: int
    # sum of |estimate - mu| over the bin, divided by reps
    abs_mass: float


def chunk_generator(seed, index):
    """Counter-based stream for chunk `index`."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _uniforms(gen, size):
    # 53-bit midpoints, never exactly 0 or 1
    bits = gen.bit_generator.random_raw(size) >> np.uint64(11)
    return (bits.astype(float) + 0.5) * _TWO_M53


def standard_normals(gen, size):
    """N(0, 1) draws by inverse CDF of 64-bit uniforms."""
    return _sp.ndtri(_uniforms(gen, size))


def _chunk_sizes(reps):
    full, rest = divmod(reps, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


def _simulate_chunk(config, size, gen):
    # K_n and K_2n - K_n are exact normal sums, drawn directly.
    n, mu, sigma = config.n, config.mu, config.sigma
    spread = sigma * math.sqrt(n)
    k_n = n * mu + spread * standard_normals(gen, size)
    if config.rule.is_indicator:
        stop = k_n >= 0.0
    else:
        stop = _uniforms(gen, size) < config.rule(n, k_n)
    k_final = np.where(stop, k_n, k_n + n * mu + spread * standard_normals(gen, size))
    stage = np.where(stop, Stage.ONE, Stage.TWO).astype(np.int8)
    return stage, k_n, k_final


def simulate_outcomes(config, reps, seed, workers=1):
    """Arrays (stage, k_interim, k_final) of `reps` simulated trials."""
    sizes = _chunk_sizes(reps)

    def one(i):
        return _simulate_chunk(config, sizes[i], chunk_generator(seed, i))

    parts = _map(one, range(len(sizes)), workers)
    return tuple(np.concatenate([p[j] for p in parts]) for j in range(3))


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _conditional_values(config, stage, k_interim, k_final):
    sigma = config.sigma
    if config.rule.is_indicator:
        return sigma * conditional_mle_values(stage, config.n, k_final / sigma)
    rule = config.rule.rescaled(sigma)
    out = np.full(k_final.shape, np.nan)
    for i in range(k_final.size):
        outcome = TrialOutcome(Stage(int(stage[i])), config.n, k_interim[i] / sigma, k_final[i] / sigma)
        try:
            out[i] = sigma * conditional_mle_generic(outcome, rule).value
        except SolverError:
            pass
    return out


class _Moments:
    """Count, mean and centred sum of squares, mergeable (Chan et al.)."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self, values=None):
        if values is None or len(values) == 0:
            self.count, self.mean, self.m2 = 0, 0.0, 0.0
        else:
            self.count = int(len(values))
            self.mean = float(np.mean(values))
            self.m2 = float(np.sum((values - self.mean) ** 2))

    def merge(self, other):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def se(self):
        if self.count < 2:
            return math.nan
        std = math.sqrt(self.m2 / (self.count - 1))
        return std / math.sqrt(self.count)


def _chunk_summary(spec, index, size, edges):
    config = spec.config
    stage, k_interim, k_final = _simulate_chunk(config, size, chunk_generator(spec.seed, index))
    n_tot = config.n * stage.astype(float)
    marginal_err = np.abs(k_final / n_tot - config.mu)
    out = {
        "stage_one": int(np.count_nonzero(stage == Stage.ONE)),
        "marginal": _Moments(marginal_err),
        "truncated": [],
        "degenerate": 0,
        "hist": None,
    }
    if spec.thresholds or edges is not None:
        cond = _conditional_values(config, stage, k_interim, k_final)
        valid = np.isfinite(cond)
        out["degenerate"] = int(size - np.count_nonzero(valid))
        err = np.abs(cond[valid] - config.mu)
        out["truncated"] = [_Moments(np.minimum(err, t)) for t in spec.thresholds]
        if edges is not None:
            tail = np.abs(cond[valid & (stage == Stage.ONE)] - config.mu)
            which = np.searchsorted(edges, tail, side="right") - 1
            counts = np.bincount(which, minlength=len(edges) - 1)
            mass = np.bincount(which, weights=tail, minlength=len(edges) - 1)
            out["hist"] = (counts, mass)
    return out


def _reduce(spec, workers, edges=None):
    sizes = _chunk_sizes(spec.reps)
    parts = _map(lambda i: _chunk_summary(spec, i, sizes[i], edges), range(len(sizes)), workers)
    stage_one = 0
    degenerate = 0
    marginal = _Moments()
    truncated = [_Moments() for _ in spec.thresholds]
    counts = mass = None
    for p in parts:
        stage_one += p["stage_one"]
        degenerate += p["degenerate"]
        marginal.merge(p["marginal"])
        for acc, m in zip(truncated, p["truncated"]):
            acc.merge(m)
        if p["hist"] is not None:
            c, w = p["hist"]
            counts = c if counts is None else counts + c
            mass = w if mass is None else mass + w
    return stage_one, degenerate, marginal, truncated, counts, mass


def run_mc(spec: McSpec, workers: int = 1) -> McSummary:
    """Empirical MAE of the marginal MLE and truncated MAE of the conditional MLE.

    Errors are |estimate - mu|. For each threshold T the conditional entry is
    the mean of min(|error|, T) over non-degenerate outcomes.
    """
    stage_one, degenerate, marginal, truncated, _, _ = _reduce(spec, workers)
    return McSummary(
        reps=spec.reps,
        stage_one_freq=stage_one / spec.reps,
        marginal_mae=marginal.mean,
        marginal_mae_se=marginal.se,
        conditional_truncated_mae=tuple(
            TruncatedMae(t, m.mean, m.se) for t, m in zip(spec.thresholds, truncated)
        ),
        degenerate_count=degenerate,
    )


def tail_histogram(spec: McSpec, bins: int, first_octave: int = -2, workers: int = 1,
                   summary: Optional[dict] = None):
    """Octave histogram of |conditional MLE - mu| over stage-one outcomes.

    Bin j covers [2**(first_octave + j), 2**(first_octave + j + 1)); the
    first bin starts at 0 and the last is open-ended, so the counts add up
    to all non-degenerate stage-one outcomes. A 1/x^2 tail halves the count
    per octave while `abs_mass` stays flat. If `summary` is a dict it
    receives the stage-one and degenerate totals.
    """
    if bins < 10:
        raise ValueError("need at least 10 bins")
    inner = 2.0 ** np.arange(first_octave + 1, first_octave + bins)
    edges = np.concatenate([[0.0], inner, [np.inf]])
    stage_one, degenerate, _, _, counts, mass = _reduce(spec, workers, edges)
    if summary is not None:
        summary.update(stage_one=stage_one, degenerate=degenerate)
    return [
        HistogramRow(float(edges[j]), float(edges[j + 1]), int(counts[j]), float(mass[j]) / spec.reps)
        for j in range(bins)
    ]

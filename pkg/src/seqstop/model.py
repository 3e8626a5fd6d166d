"""Two-stage stopping rules, trial simulation and the joint law of (stage, sum).

A trial observes X_1..X_n ~ N(mu, sigma^2), stops with probability
psi(K_n / n**gamma) and otherwise observes n more. Densities are exposed on
the standardised scale sigma = 1 under the indicator rule only.
"""

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import special
from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate

__all__ = [
    "Stage",
    "RuleKind",
    "StoppingRule",
    "INDICATOR",
    "POCOCK_GAMMA",
    "OBRIEN_FLEMING_GAMMA",
    "TrialConfig",
    "TrialOutcome",
    "stop_probability",
    "simulate_trial",
    "joint_density",
    "convolution_density",
    "stage_probabilities",
]

POCOCK_GAMMA = 0.5
OBRIEN_FLEMING_GAMMA = 0.0


class Stage(enum.IntEnum):
    ONE = 1
    TWO = 2


class RuleKind(enum.Enum):
    INDICATOR = "indicator"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class StoppingRule:
    """Stopping probability psi(K_n / n**gamma).

    For SMOOTH rules `psi` must map an array of reals into [0, 1]
    elementwise. The indicator rule stops iff K_n >= 0, whatever gamma is.
    """

    kind: RuleKind = RuleKind.INDICATOR
    psi: Optional[Callable] = None
    gamma: float = POCOCK_GAMMA

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.kind is RuleKind.SMOOTH and self.psi is None:
            raise ValueError("smooth rule needs a psi function")

    @classmethod
    def indicator(cls, gamma=POCOCK_GAMMA):
        return cls(RuleKind.INDICATOR, None, gamma)

    @classmethod
    def smooth(cls, psi, gamma=POCOCK_GAMMA):
        return cls(RuleKind.SMOOTH, psi, gamma)

    @property
    def is_indicator(self):
        return self.kind is RuleKind.INDICATOR

    def __call__(self, n, k_n):
        return stop_probability(self, n, k_n)

    def rescaled(self, sigma):
        """The same rule acting on sums divided by sigma."""
        if self.is_indicator or sigma == 1.0:
            return self
        psi = self.psi
        return StoppingRule.smooth(lambda z: psi(sigma * np.asarray(z)), self.gamma)


INDICATOR = StoppingRule.indicator()


def stop_probability(rule, n, k_n):
    """P[stop after stage one | K_n = k_n]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    k = np.asarray(k_n, dtype=float)
    if rule.is_indicator:
        p = (k >= 0.0).astype(float)
    else:
        p = np.broadcast_to(np.asarray(rule.psi(k / n ** rule.gamma), dtype=float), k.shape)
        if np.any((p < 0) | (p > 1)):
            raise ValueError("psi returned a value outside [0, 1]")
    return float(p) if np.ndim(k_n) == 0 else np.array(p)


@dataclass(frozen=True)
class TrialConfig:
    n: int
    mu: float = 0.0
    sigma: float = 1.0
    rule: StoppingRule = INDICATOR

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")


@dataclass(frozen=True)
class TrialOutcome:
    stage: Stage
    n: int
    k_interim: float
    k_final: float

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.stage is Stage.ONE and self.k_final != self.k_interim:
            raise ValueError("a stage-one outcome has k_final == k_interim")

    @property
    def sample_size(self):
        return self.n * int(self.stage)

    def standardized(self, sigma):
        """Outcome of the data divided by sigma."""
        return TrialOutcome(self.stage, self.n, self.k_interim / sigma, self.k_final / sigma)


def simulate_trial(config, rng):
    """Run one trial; `rng` is a numpy Generator owned by the caller."""
    first = rng.normal(config.mu, config.sigma, size=config.n)
    k_n = float(np.sum(first))
    p = stop_probability(config.rule, config.n, k_n)
    if config.rule.is_indicator:
        stop = p == 1.0
    else:
        stop = rng.random() < p
    if stop:
        return TrialOutcome(Stage.ONE, config.n, k_n, k_n)
    second = rng.normal(config.mu, config.sigma, size=config.n)
    return TrialOutcome(Stage.TWO, config.n, k_n, k_n + float(np.sum(second)))


def stage_probabilities(n, mu):
    """(P[stop at n], P[continue to 2n]) under the indicator rule, sigma = 1."""
    t = math.sqrt(n) * mu
    return special.Phi(t), special.Phi(-t)


def convolution_density(n, k, mu=0.0, spec=DEFAULT_SPEC):
    """Stage-two density of K_2n by numerical convolution.

    Density of K_2n over the whole line minus the part where K_n >= 0:
        N(2n mu, 2n)(k) - int_0^inf N(n mu, n)(u) N(n mu, n)(k - u) du
    """
    rn = math.sqrt(n)
    r2n = math.sqrt(2 * n)
    upper = max(0.0, n * mu) + spec.cutoff * rn

    def integrand(u):
        return special.phi((u - n * mu) / rn) * special.phi((k - u - n * mu) / rn) / n

    full = special.phi((k - 2 * n * mu) / r2n) / r2n
    return full - integrate(integrand, 0.0, upper, spec)


def joint_density(n, stage, k, mu=0.0, rule=INDICATOR, spec=DEFAULT_SPEC):
    """Joint density of (N_n, K_{N_n}) at (stage * n, k), sigma = 1.

    Closed forms at mu = 0; numerical convolution for the stage-two slice
    otherwise. Only the indicator rule has a density here.
    """
    if not rule.is_indicator:
        raise NotImplementedError("densities are available for the indicator rule only")
    if n < 1:
        raise ValueError("n must be at least 1")
    stage = Stage(stage)
    karr = np.asarray(k, dtype=float)
    if stage is Stage.ONE:
        rn = math.sqrt(n)
        out = special.phi((karr - n * mu) / rn) / rn * (karr >= 0.0)
    elif mu == 0.0:
        r2n = math.sqrt(2 * n)
        z = karr / r2n
        out = special.phi(z) / r2n * special.Phi(-z)
    else:
        flat = [convolution_density(n, kk, mu, spec) for kk in karr.ravel()]
        out = np.array(flat).reshape(karr.shape)
    return float(out) if np.ndim(k) == 0 else np.asarray(out)

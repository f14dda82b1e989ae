"""Random-search hyperparameter optimization over declarative spaces.

A space maps parameter names to draw rules: a continuous interval (linear or
log10 scale), an inclusive integer range, or a categorical set. Search draws
one full configuration per trial from a single seeded stream, so trial i's
configuration is the same regardless of how many trials follow it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SearchExhaustedError, ValidationError


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float
    log10: bool = False

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValidationError(f"empty interval [{self.lo}, {self.hi}]")
        if self.log10 and self.lo <= 0:
            raise ValidationError("log10-scale intervals must be strictly positive")

    def draw(self, rng):
        if self.log10:
            return float(10.0 ** rng.uniform(math.log10(self.lo), math.log10(self.hi)))
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int  # inclusive

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValidationError(f"empty range [{self.lo}, {self.hi}]")

    def draw(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Categorical:
    options: tuple

    def __post_init__(self):
        if len(self.options) == 0:
            raise ValidationError("categorical set must be nonempty")

    def draw(self, rng):
        return self.options[int(rng.integers(len(self.options)))]


SearchSpace = dict


def _validate_space(space: SearchSpace):
    if not space:
        raise ValidationError("search space must be nonempty")


def _draw_config(space: SearchSpace, rng) -> dict:
    return {name: space[name].draw(rng) for name in sorted(space)}


def sample(space: SearchSpace, seed=None) -> dict:
    """One independent configuration draw; log-scale parameters uniform in exponent."""
    _validate_space(space)
    return _draw_config(space, np.random.default_rng(seed))


@dataclass
class TrialRecord:
    index: int
    config: dict
    objective: float  # nan when failed
    seed: int | None
    wall_time: float
    failed: bool = False
    error: str | None = None


def random_search(space: SearchSpace, trials: int, objective, seed=None
                  ) -> tuple[TrialRecord, list[TrialRecord]]:
    """Evaluate `trials` random configurations; return the best record and full history.

    Failed evaluations (exception or non-finite value) are recorded and
    excluded from the argmin. Raises if every trial failed.
    """
    _validate_space(space)
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    history: list[TrialRecord] = []
    for index in range(trials):
        config = _draw_config(space, rng)
        start = time.perf_counter()
        failed, error, value = False, None, math.nan
        try:
            value = float(objective(config))
            if not math.isfinite(value):
                failed, error = True, f"non-finite objective {value}"
        except Exception as exc:  # objective failures are data, not fatal
            failed, error = True, f"{type(exc).__name__}: {exc}"
        history.append(TrialRecord(
            index=index, config=config, objective=value, seed=seed,
            wall_time=time.perf_counter() - start, failed=failed, error=error,
        ))
    successes = [t for t in history if not t.failed]
    if not successes:
        raise SearchExhaustedError(f"all {trials} trials failed; last error: {history[-1].error}")
    best = min(successes, key=lambda t: t.objective)
    return best, history


# Default spaces sized for desk-scale experiments.

RESERVOIR_SPACE: SearchSpace = {
    "leak": Continuous(0.05, 1.0),
    "ridge": Continuous(1e-7, 1e-1, log10=True),
    "input_scale": Continuous(0.05, 3.0),
    "spectral_radius": Continuous(0.2, 2.0),
    "link_prob": Continuous(0.01, 1.0),
    "train_noise": Continuous(1e-6, 1e-1, log10=True),
}

TRANSFORMER_SPACE: SearchSpace = {
    "embed_dim": Categorical((16, 32, 64)),
    "heads": Categorical((1, 2, 4)),
    "blocks": IntRange(1, 4),
    "ffn_dim": Categorical((32, 64, 128)),
    "lr": Continuous(1e-4, 1e-2, log10=True),
    "dropout": Continuous(0.0, 0.4),
}

# Systems reserved for hyperparameter validation so target systems never leak
# into the tuning loop.
VALIDATION_SYSTEMS = ("sprott_0", "sprott_1")

DEFAULT_TRIALS = {"transformer": 60, "reservoir": 200}

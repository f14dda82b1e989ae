"""Reconstruction and climate metrics: pointwise errors, stability rates, and
the occupancy-histogram distance between attractors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynsys import TrajectoryMatrix
from .errors import UndefinedMetricError, ValidationError, WindowMismatchError

DEFAULT_CELL = 0.05
DEFAULT_STABILITY_THRESHOLD = 0.01


def _as_array(x) -> np.ndarray:
    if isinstance(x, TrajectoryMatrix):
        return x.data
    return np.asarray(x, dtype=np.float64)


def mse(pred, truth) -> float:
    """Mean squared error over all entries."""
    p, t = _as_array(pred), _as_array(truth)
    if p.shape != t.shape:
        raise ValidationError(f"mse: shapes differ, {p.shape} vs {t.shape}")
    if p.size == 0:
        raise UndefinedMetricError("mse of an empty input is undefined")
    return float(np.mean((p - t) ** 2))


def rmse(pred, truth) -> float:
    return float(np.sqrt(mse(pred, truth)))


def recovery_stability(mse_list, threshold: float = DEFAULT_STABILITY_THRESHOLD) -> float:
    """Fraction of realizations whose MSE falls strictly below the threshold."""
    values = np.asarray(list(mse_list), dtype=np.float64)
    if values.size == 0:
        raise UndefinedMetricError("recovery_stability of an empty list is undefined")
    if threshold <= 0:
        raise ValidationError(f"threshold must be > 0, got {threshold}")
    return float(np.mean(values < threshold))


@dataclass
class OccupancyGrid:
    """Normalized cell-visit frequencies on a cubic lattice, plus an out-of-bounds bucket."""

    delta: float
    counts_per_axis: tuple[int, int, int]
    freq: np.ndarray
    overflow: float


def occupancy(traj, delta: float = DEFAULT_CELL,
              bounds=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))) -> OccupancyGrid:
    """Bin a 3-D trajectory on a cubic lattice; upper edges are closed, points
    outside the bounds land in a single overflow bucket."""
    data = _as_array(traj)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValidationError(f"occupancy expects an Lx3 trajectory, got shape {data.shape}")
    if data.shape[0] == 0:
        raise UndefinedMetricError("occupancy of an empty trajectory is undefined")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    m = tuple(int(round((hi[k] - lo[k]) / delta)) for k in range(3))
    if min(m) < 1:
        raise ValidationError(f"cell size {delta} larger than bounds span")
    inside = np.all((data >= lo) & (data <= hi), axis=1)
    idx = np.floor((data[inside] - lo) / delta).astype(int)
    idx = np.minimum(idx, np.array(m) - 1)  # closed upper edge
    counts = np.zeros(m)
    np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    total = data.shape[0]
    return OccupancyGrid(
        delta=delta,
        counts_per_axis=m,
        freq=counts / total,
        overflow=float(np.count_nonzero(~inside)) / total,
    )


def deviation_value(pred_traj, true_traj, delta: float = DEFAULT_CELL,
                    bounds=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))) -> float:
    """L1 distance between the two trajectories' occupancy histograms (in [0, 2]).

    Both windows must have the same length so the frequencies are comparable.
    """
    p, t = _as_array(pred_traj), _as_array(true_traj)
    if p.shape[0] != t.shape[0]:
        raise WindowMismatchError(
            f"deviation_value windows differ in length: {p.shape[0]} vs {t.shape[0]}"
        )
    gp = occupancy(p, delta, bounds)
    gt = occupancy(t, delta, bounds)
    return float(np.abs(gp.freq - gt.freq).sum() + abs(gp.overflow - gt.overflow))


@dataclass
class EvalReport:
    """Aggregate evaluation over independent realizations."""

    mse: float
    rmse: float
    recovery_stability: dict[float, float]
    dv: float | None = None
    n_realizations: int = 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mse < 0:
            raise ValidationError("mse must be >= 0")
        for threshold, rate in self.recovery_stability.items():
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"stability rate at {threshold} outside [0,1]: {rate}")
        if self.dv is not None and self.dv < 0:
            raise ValidationError("dv must be >= 0")

    @classmethod
    def from_mse_list(cls, mse_list, thresholds=(DEFAULT_STABILITY_THRESHOLD,),
                      dv: float | None = None, **metadata) -> "EvalReport":
        values = np.asarray(list(mse_list), dtype=np.float64)
        if values.size == 0:
            raise UndefinedMetricError("cannot build a report from zero realizations")
        return cls(
            mse=float(values.mean()),
            rmse=float(np.sqrt(values.mean())),
            recovery_stability={t: recovery_stability(values, t) for t in thresholds},
            dv=dv,
            n_realizations=int(values.size),
            metadata=metadata,
        )

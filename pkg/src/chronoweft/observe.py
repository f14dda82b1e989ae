"""Measurement model: element-wise random masking, measurement noise, and
the smoothed-noise control signal used to probe what the reconstructor can't do.

Sparsity is the fraction of matrix elements removed. Masking is element-wise
(per dimension per time step); unobserved entries are encoded as literal 0.0
with the boolean mask carried separately so downstream code never confuses a
true zero with a masked one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynsys import TrajectoryMatrix
from .errors import ValidationError


@dataclass(frozen=True)
class ObservationSpec:
    """How a trajectory is observed: what is removed and what noise is added."""

    sparsity: float
    mult_noise_sigma: float = 0.0
    add_noise_sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValidationError(f"sparsity must be in [0,1], got {self.sparsity}")
        if self.mult_noise_sigma < 0 or self.add_noise_sigma < 0:
            raise ValidationError("noise sigmas must be >= 0")

    @property
    def observe_prob(self) -> float:
        return 1.0 - self.sparsity


@dataclass
class SparseSeries:
    """Masked, noisy observation matrix; zeros wherever mask is False."""

    values: np.ndarray
    mask: np.ndarray
    spec: ObservationSpec
    dt_effective: float = 0.1
    norm_stats: np.ndarray | None = None

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def make_mask(rows: int, cols: int, sparsity: float, seed=None) -> np.ndarray:
    """Boolean matrix; each element observed (True) independently with prob 1-sparsity."""
    if not 0.0 <= sparsity <= 1.0:
        raise ValidationError(f"sparsity must be in [0,1], got {sparsity}")
    rng = np.random.default_rng(seed)
    return rng.random((rows, cols)) >= sparsity


def sparsify(
    truth: np.ndarray,
    sparsity: float,
    mult_sigma: float,
    add_sigma: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Mask and noise a dense segment; the hot path shared by training and testing.

    Observed entries become x*(1+mult_sigma*xi) + add_sigma*xi', unobserved 0.
    """
    mask = rng.random(truth.shape) >= sparsity
    values = truth.copy()
    if mult_sigma > 0.0:
        values = values * (1.0 + mult_sigma * rng.standard_normal(truth.shape))
    if add_sigma > 0.0:
        values = values + add_sigma * rng.standard_normal(truth.shape)
    values *= mask
    return values, mask


def apply_observation(x: TrajectoryMatrix, spec: ObservationSpec) -> SparseSeries:
    """Observe a normalized trajectory through the masking + noise model."""
    rng = np.random.default_rng(spec.seed)
    values, mask = sparsify(x.data, spec.sparsity, spec.mult_noise_sigma, spec.add_noise_sigma, rng)
    return SparseSeries(
        values=values,
        mask=mask,
        spec=spec,
        dt_effective=x.dt_effective,
        norm_stats=x.norm_stats.copy(),
    )


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Truncated Gaussian smoothing kernel, normalized to sum 1."""
    if radius is None:
        radius = int(round(4.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def gen_stochastic_signal(
    length: int,
    dims: int = 3,
    kernel_sigma: float = 12.0,
    seed=None,
    dt_effective: float = 0.1,
) -> TrajectoryMatrix:
    """Gaussian-filtered uniform noise, min-max normalized: smooth but dynamics-free.

    Looks superficially like a slow trajectory yet carries no deterministic
    recurrence, which is exactly why it defeats a dynamics-trained reconstructor.
    """
    if length <= 6 * kernel_sigma:
        raise ValidationError(
            f"length must exceed 6*kernel_sigma={6 * kernel_sigma:.0f}, got {length}"
        )
    rng = np.random.default_rng(seed)
    kernel = gaussian_kernel(kernel_sigma)
    radius = (len(kernel) - 1) // 2
    out = np.empty((length, dims))
    for d in range(dims):
        noise = rng.random(length + 2 * radius)
        out[:, d] = np.convolve(noise, kernel, mode="valid")
    lo = out.min(axis=0)
    hi = out.max(axis=0)
    out = (out - lo) / (hi - lo)
    return TrajectoryMatrix(data=out, dt_effective=dt_effective, norm_stats=np.vstack([lo, hi]))

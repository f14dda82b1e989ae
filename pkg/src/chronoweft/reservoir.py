"""Echo-state reservoir: fixed random recurrence, trained linear readout.

The reservoir learns the one-step map of a (reconstructed) trajectory from a
handful of segments, then runs closed-loop with its own output fed back to
generate arbitrarily long series reproducing the source attractor's climate.
Only the readout is trained, by ridge regression.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg

from .dynsys import TrajectoryMatrix
from .errors import (
    DegenerateReservoirError,
    InsufficientDataError,
    RegularizationError,
    ValidationError,
)

OUTPUT_CLIP = 10.0  # normalized units; beyond this the run is flagged as diverged


@dataclass
class ReservoirConfig:
    size: int = 500
    leak: float = 0.3
    ridge: float = 1e-5
    input_scale: float = 1.0
    spectral_radius: float = 1.2
    link_prob: float = 0.5
    train_noise: float = 0.0
    washout: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError("reservoir size must be >= 1")
        if not 0.0 < self.leak <= 1.0:
            raise ValidationError(f"leak must be in (0,1], got {self.leak}")
        if self.ridge < 0.0:
            raise ValidationError("ridge must be >= 0")
        if not 0.0 <= self.link_prob <= 1.0:
            raise ValidationError("link_prob must be in [0,1]")

    def to_dict(self) -> dict:
        return asdict(self)


# Tuned operating points for the three deployment targets (readout dimension 3).
RC_PRESETS: dict[str, ReservoirConfig] = {
    "food_chain": ReservoirConfig(size=500, leak=0.36, ridge=10 ** -1.25, input_scale=1.16,
                                  spectral_radius=1.29, link_prob=0.41, train_noise=10 ** -4.70),
    "lorenz": ReservoirConfig(size=500, leak=0.30, ridge=10 ** -5.15, input_scale=1.82,
                              spectral_radius=1.30, link_prob=0.68, train_noise=10 ** -2.04),
    "lotka_volterra": ReservoirConfig(size=500, leak=0.29, ridge=10 ** -6.62, input_scale=0.19,
                                      spectral_radius=1.72, link_prob=0.02, train_noise=10 ** -2.73),
}


@dataclass
class ReservoirModel:
    w_in: np.ndarray  # size x input_dim
    a: np.ndarray  # size x size, rescaled to the configured spectral radius
    w_out: np.ndarray | None  # out_dim x size after training
    cfg: ReservoirConfig

    @property
    def input_dim(self) -> int:
        return self.w_in.shape[1]

    def to_arrays(self) -> dict[str, np.ndarray]:
        rows, cols = np.nonzero(self.a)
        out = {
            "w_in": self.w_in.copy(),
            "a_coo": np.column_stack([rows, cols, self.a[rows, cols]]).astype(np.float64),
            "a_size": np.asarray(float(self.a.shape[0])),
        }
        if self.w_out is not None:
            out["w_out"] = self.w_out.copy()
        for key, val in self.cfg.to_dict().items():
            out[f"config.{key}"] = np.asarray(float(val))
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ReservoirModel":
        cfg_fields = {k.split(".", 1)[1]: float(v) for k, v in arrays.items()
                      if k.startswith("config.")}
        for key in ("size", "washout", "seed"):
            cfg_fields[key] = int(cfg_fields[key])
        cfg = ReservoirConfig(**cfg_fields)
        n = int(arrays["a_size"])
        a = np.zeros((n, n))
        coo = arrays["a_coo"].reshape(-1, 3)
        a[coo[:, 0].astype(int), coo[:, 1].astype(int)] = coo[:, 2]
        w_out = arrays.get("w_out")
        return cls(w_in=arrays["w_in"].copy(), a=a, w_out=None if w_out is None else w_out.copy(),
                   cfg=cfg)


def spectral_radius(a: np.ndarray) -> float:
    """Largest eigenvalue magnitude via a dense eigensolve."""
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def init_reservoir(cfg: ReservoirConfig, input_dim: int = 3) -> ReservoirModel:
    """Draw the fixed random matrices and rescale the recurrence to the target radius."""
    rng = np.random.default_rng(cfg.seed)
    w_in = rng.uniform(-cfg.input_scale, cfg.input_scale, size=(cfg.size, input_dim))
    links = rng.random((cfg.size, cfg.size)) < cfg.link_prob
    a = rng.standard_normal((cfg.size, cfg.size)) * links
    radius = spectral_radius(a)
    if radius < 1e-12:
        raise DegenerateReservoirError(
            f"recurrence matrix has spectral radius ~0 (size={cfg.size}, link_prob={cfg.link_prob})"
        )
    a *= cfg.spectral_radius / radius
    return ReservoirModel(w_in=w_in, a=a, w_out=None, cfg=cfg)


def advance(model: ReservoirModel, r: np.ndarray, i: np.ndarray) -> np.ndarray:
    """Leaky tanh update of the reservoir state."""
    leak = model.cfg.leak
    return (1.0 - leak) * r + leak * np.tanh(model.a @ r + model.w_in @ i)


def ridge_readout(states: np.ndarray, targets: np.ndarray, ridge: float) -> np.ndarray:
    """Tikhonov-regularized least squares readout, solved via Cholesky (never an explicit inverse)."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if states.shape[1] != targets.shape[1]:
        raise ValidationError(
            f"ridge_readout: {states.shape[1]} state columns vs {targets.shape[1]} target columns"
        )
    n = states.shape[0]
    gram = states @ states.T + ridge * np.eye(n)
    try:
        factor = scipy.linalg.cho_factor(gram)
        solution = scipy.linalg.cho_solve(factor, states @ targets.T)
    except np.linalg.LinAlgError as exc:
        raise RegularizationError(
            f"ridge system is singular (ridge={ridge}); use ridge > 0"
        ) from exc
    return solution.T


def _collect_pairs(model: ReservoirModel, segment: np.ndarray, rng: np.random.Generator
                   ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    cfg = model.cfg
    length = segment.shape[0]
    states, targets = [], []
    r = np.zeros(cfg.size)
    noise = (cfg.train_noise * rng.standard_normal(segment.shape)
             if cfg.train_noise > 0 else np.zeros_like(segment))
    for t in range(length - 1):
        r = advance(model, r, segment[t] + noise[t])
        if t >= cfg.washout:
            states.append(r)
            targets.append(segment[t + 1])
    return states, targets


def train_on_segments(segments, cfg: ReservoirConfig, input_dim: int | None = None
                      ) -> ReservoirModel:
    """Fit the readout on the one-step map taught by every segment.

    Each segment is driven from a zero state with optional input noise; states
    inside the washout window are discarded. All collected (state, next-input)
    pairs are pooled into a single ridge fit. Noise draws are keyed by segment
    index, so the fit does not depend on processing order.
    """
    arrays = [seg.data if isinstance(seg, TrajectoryMatrix) else np.asarray(seg, dtype=np.float64)
              for seg in segments]
    if not arrays:
        raise InsufficientDataError("train_on_segments: no segments given")
    if input_dim is None:
        input_dim = arrays[0].shape[1]
    model = init_reservoir(cfg, input_dim=input_dim)
    all_states, all_targets = [], []
    for index, seg in enumerate(arrays):
        rng = np.random.default_rng([cfg.seed, 7919, index])
        states, targets = _collect_pairs(model, seg, rng)
        all_states.extend(states)
        all_targets.extend(targets)
    if not all_states:
        raise InsufficientDataError(
            f"no usable pairs: every segment must be longer than washout+1={cfg.washout + 1}"
        )
    r_mat = np.array(all_states).T
    u_mat = np.array(all_targets).T
    model.w_out = ridge_readout(r_mat, u_mat, cfg.ridge)
    return model


def closed_loop_predict(model: ReservoirModel, warmup, horizon: int) -> TrajectoryMatrix:
    """Drive open-loop through the warmup, then free-run feeding outputs back.

    Outputs beyond +-10 normalized units mark divergence: the trajectory is
    clipped there and the result carries clipped=True for downstream scoring.
    """
    if model.w_out is None:
        raise ValidationError("closed_loop_predict: model has no trained readout")
    if isinstance(warmup, TrajectoryMatrix):
        dt_eff, stats, warm = warmup.dt_effective, warmup.norm_stats.copy(), warmup.data
    else:
        warm = np.asarray(warmup, dtype=np.float64)
        dt_eff = 0.1
        stats = np.vstack([np.zeros(warm.shape[1]), np.ones(warm.shape[1])])
    r = np.zeros(model.cfg.size)
    for row in warm:
        r = advance(model, r, row)
    out = np.empty((horizon, model.w_out.shape[0]))
    clipped = False
    for h in range(horizon):
        o = model.w_out @ r
        if np.max(np.abs(o)) > OUTPUT_CLIP:
            clipped = True
            o = np.clip(o, -OUTPUT_CLIP, OUTPUT_CLIP)
        out[h] = o
        r = advance(model, r, o)
    return TrajectoryMatrix(data=out, dt_effective=dt_eff, norm_stats=stats, clipped=clipped)

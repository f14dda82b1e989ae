"""Sequence-reconstruction model: embedding + positional encoding, stacked
bidirectional self-attention blocks, and a linear output head, trained under
a triple-randomness regime (random system, random segment length, random
sparsity per step) so it never overfits any single flow.

The model maps a masked L x D value matrix (zeros at unobserved entries) to a
complete L x D trajectory estimate. Input length is flexible up to a
configured maximum; no causal masking is used since reconstruction attends in
both time directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensorcore as tc
from .dynsys import TARGET_NAMES, TrajectoryMatrix
from .errors import SequenceLengthError, TrainingAborted, ValidationError
from .observe import SparseSeries, sparsify
from .tensorcore import AdamState, Tensor, adam_step


@dataclass
class TransformerConfig:
    input_dim: int = 3
    embed_dim: int = 128
    heads: int = 4
    blocks: int = 4
    ffn_dim: int = 512
    d_k: int | None = None
    d_v: int | None = None
    max_len: int = 3000
    dropout: float = 0.2
    lr: float = 0.001
    batch_size: int = 16
    epochs: int = 50
    smooth_weight: float = 0.1
    loss_on_observed_only: bool = False

    def __post_init__(self):
        if self.d_k is None:
            self.d_k = self.embed_dim
        if self.d_v is None:
            self.d_v = self.embed_dim
        if self.smooth_weight < 0:
            raise ValidationError("smooth_weight must be >= 0")

    @classmethod
    def paper(cls, **overrides) -> "TransformerConfig":
        """Full-scale profile; heavy, documented but not exercised in CI."""
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "TransformerConfig":
        """Laptop-scale profile used by tests and the acceptance suite."""
        kw = dict(embed_dim=32, heads=2, blocks=2, ffn_dim=64, max_len=256, epochs=30)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


def positional_encoding(length: int, embed_dim: int) -> np.ndarray:
    """Sinusoidal position matrix; positions indexed from 0, so row 0 is (0,1,0,1,...)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    even = np.arange(0, embed_dim, 2, dtype=np.float64)
    div = np.power(10000.0, even / embed_dim)
    pe = np.zeros((length, embed_dim))
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div[: embed_dim // 2])
    return pe


class TransformerParams:
    """All learnable tensors, keyed by dotted names, plus the architecture config."""

    def __init__(self, cfg: TransformerConfig, named: dict[str, Tensor]):
        self.cfg = cfg
        self.named = named
        self._pe = positional_encoding(cfg.max_len, cfg.embed_dim)

    @classmethod
    def init(cls, cfg: TransformerConfig, seed=None) -> "TransformerParams":
        rng = np.random.default_rng(seed)
        d, n, h = cfg.input_dim, cfg.embed_dim, cfg.heads
        named: dict[str, Tensor] = {}

        def param(name, arr):
            named[name] = Tensor(arr, requires_grad=True)

        param("w_p", tc.uniform_init(rng, d, (d, n)))
        param("w_b", np.zeros(n))
        for b in range(cfg.blocks):
            pre = f"block{b}."
            for j in range(h):
                param(pre + f"head{j}.w_q", tc.uniform_init(rng, n, (n, cfg.d_k)))
                param(pre + f"head{j}.w_k", tc.uniform_init(rng, n, (n, cfg.d_k)))
                param(pre + f"head{j}.w_v", tc.uniform_init(rng, n, (n, cfg.d_v)))
            param(pre + "w_o", tc.uniform_init(rng, h * cfg.d_v, (h * cfg.d_v, n)))
            param(pre + "ln1.gain", np.ones(n))
            param(pre + "ln1.bias", np.zeros(n))
            param(pre + "w_fa", tc.uniform_init(rng, n, (n, cfg.ffn_dim)))
            param(pre + "b_a", np.zeros(cfg.ffn_dim))
            param(pre + "w_fb", tc.uniform_init(rng, cfg.ffn_dim, (cfg.ffn_dim, n)))
            param(pre + "b_b", np.zeros(n))
            param(pre + "ln2.gain", np.ones(n))
            param(pre + "ln2.bias", np.zeros(n))
        param("head.w", tc.uniform_init(rng, n, (n, d)))
        param("head.b", np.zeros(d))
        return cls(cfg, named)

    def __getitem__(self, name: str) -> Tensor:
        return self.named[name]

    def zero_grad(self):
        for t in self.named.values():
            t.zero_grad()

    def pe_rows(self, length: int) -> np.ndarray:
        return self._pe[:length]

    def copy(self) -> "TransformerParams":
        named = {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.named.items()}
        return TransformerParams(self.cfg, named)

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {k: v.data.copy() for k, v in self.named.items()}
        for key, val in self.cfg.to_dict().items():
            out[f"config.{key}"] = np.asarray(float(val))
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "TransformerParams":
        cfg_fields = {}
        named = {}
        for k, v in arrays.items():
            if k.startswith("config."):
                cfg_fields[k.split(".", 1)[1]] = float(v)
            else:
                named[k] = Tensor(v.copy(), requires_grad=True)
        if "embed_dim" not in cfg_fields:
            raise ValidationError("checkpoint is missing its config.* entries")
        ints = {"input_dim", "embed_dim", "heads", "blocks", "ffn_dim", "d_k", "d_v",
                "max_len", "batch_size", "epochs"}
        kwargs = {}
        for key, val in cfg_fields.items():
            if key in ints:
                kwargs[key] = int(val)
            elif key == "loss_on_observed_only":
                kwargs[key] = bool(val)
            else:
                kwargs[key] = val
        return cls(TransformerConfig(**kwargs), named)


def embed(values: np.ndarray, params: TransformerParams, use_pe: bool = True) -> Tensor:
    """Project D-dim observations into the embedding space and add positions.

    Accepts a single (L, D) series or a batch (B, L, D) of equal-length series.
    """
    values = np.asarray(values, dtype=np.float64)
    length, d = values.shape[-2], values.shape[-1]
    cfg = params.cfg
    if d != cfg.input_dim:
        raise ValidationError(f"embed: input has {d} dims, model expects {cfg.input_dim}")
    if length > cfg.max_len:
        raise SequenceLengthError(f"sequence length {length} exceeds max_len {cfg.max_len}")
    x = tc.matmul(Tensor(values), params["w_p"])
    x = tc.add(x, params["w_b"])
    if use_pe:
        x = tc.add(x, Tensor(params.pe_rows(length)))
    return x


def attention_head(x_p: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor,
                   trace: list | None = None) -> Tensor:
    """Scaled dot-product self-attention over all time steps (no causal mask)."""
    d_k = w_q.shape[1]
    # Scaling the (narrow) query instead of the L x L logit matrix saves a full
    # pass over the largest array; the attention scores are identical.
    q = tc.scale(tc.matmul(x_p, w_q), 1.0 / math.sqrt(d_k))
    k = tc.matmul(x_p, w_k)
    v = tc.matmul(x_p, w_v)
    weights = tc.softmax_rows(tc.matmul(q, tc.transpose(k)))
    if trace is not None:
        trace.append(weights.data.copy())
    return tc.matmul(weights, v)


def encoder_block(x: Tensor, params: TransformerParams, block: int,
                  training: bool = False, drop_rng=None,
                  trace: list | None = None) -> Tensor:
    """Multi-head attention + post-norm residual, then feed-forward + post-norm residual."""
    cfg = params.cfg
    pre = f"block{block}."
    heads = [
        attention_head(x, params[pre + f"head{j}.w_q"], params[pre + f"head{j}.w_k"],
                       params[pre + f"head{j}.w_v"], trace)
        for j in range(cfg.heads)
    ]
    merged = heads[0] if cfg.heads == 1 else tc.concat_cols(heads)
    o1 = tc.matmul(merged, params[pre + "w_o"])
    o1 = tc.dropout(o1, cfg.dropout, seed=drop_rng, training=training)
    r1 = tc.layer_norm(tc.add(x, o1), params[pre + "ln1.gain"], params[pre + "ln1.bias"])
    f1 = tc.add(tc.matmul(tc.relu(tc.add(tc.matmul(r1, params[pre + "w_fa"]), params[pre + "b_a"])),
                          params[pre + "w_fb"]), params[pre + "b_b"])
    return tc.layer_norm(tc.add(r1, f1), params[pre + "ln2.gain"], params[pre + "ln2.bias"])


def forward(values: np.ndarray, params: TransformerParams, mode: str = "eval",
            drop_rng=None, use_pe: bool = True, trace: list | None = None) -> Tensor:
    """Full pass: embed, stacked attention blocks, linear head. Eval mode is pure."""
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if training and drop_rng is None:
        drop_rng = np.random.default_rng()
    x = embed(values, params, use_pe=use_pe)
    for b in range(params.cfg.blocks):
        x = encoder_block(x, params, b, training=training, drop_rng=drop_rng, trace=trace)
    return tc.add(tc.matmul(x, params["head.w"]), params["head.b"])


def loss(pred: Tensor, truth: np.ndarray, smooth_weight: float,
         observed_mask: np.ndarray | None = None) -> Tensor:
    """Squared error plus weighted curvature and total-variation smoothness penalties.

    Each term is normalized per dimension by its own count (L, L-2, L-1) and
    averaged across dimensions. By default the error covers every point;
    passing observed_mask restricts the error term (not the smoothness terms)
    to observed entries.
    """
    if pred.shape != truth.shape:
        raise ValidationError(f"loss: pred {pred.shape} vs truth {truth.shape}")
    length = pred.shape[-2]
    diff = tc.add(pred, Tensor(-truth))
    if observed_mask is None:
        total = tc.mean_all(tc.mul(diff, diff))
    else:
        count = max(int(observed_mask.sum()), 1)
        masked = tc.mul(diff, Tensor(observed_mask.astype(np.float64)))
        total = tc.scale(tc.sum_all(tc.mul(masked, masked)), 1.0 / count)
    if smooth_weight > 0.0 and length >= 2:
        if length >= 3:
            lap = tc.add(tc.add(tc.slice_rows(pred, 0, length - 2), tc.slice_rows(pred, 2, length)),
                         tc.scale(tc.slice_rows(pred, 1, length - 1), -2.0))
            total = tc.add(total, tc.scale(tc.mean_all(tc.mul(lap, lap)), smooth_weight))
        step = tc.add(tc.slice_rows(pred, 0, length - 1),
                      tc.scale(tc.slice_rows(pred, 1, length), -1.0))
        total = tc.add(total, tc.scale(tc.mean_all(tc.absolute(step)), smooth_weight))
    return total


@dataclass
class TrainingRegime:
    """What the model trains on: the system pool and the observation randomness."""

    pool: list[str]
    data: dict[str, np.ndarray]
    data_length: int
    noise_sigma: float = 0.05
    add_noise_sigma: float = 0.0
    fixed_sparsity: float | None = None
    held_out: tuple[str, ...] = TARGET_NAMES
    seed: int | None = None

    def __post_init__(self):
        leaked = set(self.pool) & set(self.held_out)
        if leaked:
            raise ValidationError(f"held-out systems present in training pool: {sorted(leaked)}")
        missing = [name for name in self.pool if name not in self.data]
        if missing:
            raise ValidationError(f"no data for pool systems: {missing}")


def steps_per_epoch(regime: TrainingRegime, cfg: TransformerConfig) -> int:
    """Enough steps that the expected number of drawn points covers each system's data once."""
    expected_points = cfg.batch_size * (1 + cfg.max_len) / 2.0
    return max(1, math.ceil(len(regime.pool) * regime.data_length / expected_points))


def train(regime: TrainingRegime, cfg: TransformerConfig, seed=None,
          callback=None) -> tuple[TransformerParams, dict]:
    """Triple-randomness training; returns trained params and the loss log.

    Per step: draw one pool system, one segment length L ~ U(1, max_len) and
    one sparsity S ~ U(0,1); then batch_size segments of that length at random
    offsets, each masked and noised independently, optimized under the
    combined loss with Adam.
    """
    if seed is None:
        seed = regime.seed
    master = np.random.default_rng(seed)
    init_rng, sample_rng, obs_rng, drop_rng = master.spawn(4)

    for name in regime.pool:
        if len(regime.data[name]) < cfg.max_len:
            raise ValidationError(
                f"system '{name}' has {len(regime.data[name])} rows; needs >= max_len={cfg.max_len}"
            )

    params = TransformerParams.init(cfg, init_rng)
    state = AdamState(lr=cfg.lr)
    steps = steps_per_epoch(regime, cfg)
    log = {"epoch_loss": [], "steps_per_epoch": steps, "aborted": False}

    for epoch in range(cfg.epochs):
        epoch_losses = np.empty(steps)
        for step in range(steps):
            name = regime.pool[int(sample_rng.integers(len(regime.pool)))]
            series = regime.data[name]
            length = int(sample_rng.integers(1, cfg.max_len + 1))
            sparsity = (regime.fixed_sparsity if regime.fixed_sparsity is not None
                        else float(sample_rng.random()))
            truth = np.empty((cfg.batch_size, length, series.shape[1]))
            values = np.empty_like(truth)
            masks = np.empty(truth.shape, dtype=bool)
            for b in range(cfg.batch_size):
                offset = int(sample_rng.integers(0, len(series) - length + 1))
                truth[b] = series[offset : offset + length]
                values[b], masks[b] = sparsify(truth[b], sparsity, regime.noise_sigma,
                                               regime.add_noise_sigma, obs_rng)
            # One batched pass; all segments in a step share a length, so the
            # batch mean equals the mean of per-segment losses.
            pred = forward(values, params, mode="train", drop_rng=drop_rng)
            total = loss(pred, truth, cfg.smooth_weight,
                         observed_mask=masks if cfg.loss_on_observed_only else None)
            if not np.isfinite(total.data):
                log["aborted"] = True
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch}, step {step}", params=params, log=log
                )
            params.zero_grad()
            total.backward()
            adam_step(params.named, state)
            epoch_losses[step] = float(total.data)
        log["epoch_loss"].append(float(epoch_losses.mean()))
        if callback is not None:
            callback(epoch, log["epoch_loss"][-1])
    return params, log


def reconstruct(sparse: SparseSeries, params: TransformerParams) -> TrajectoryMatrix:
    """Eval-mode reconstruction of the full trajectory behind a sparse series."""
    pred = forward(sparse.values, params, mode="eval")
    stats = sparse.norm_stats
    if stats is None:
        stats = np.vstack([np.zeros(sparse.dim), np.ones(sparse.dim)])
    return TrajectoryMatrix(data=pred.data, dt_effective=sparse.dt_effective,
                            norm_stats=np.array(stats))

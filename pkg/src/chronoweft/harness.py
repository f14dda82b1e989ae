"""End-to-end experiment orchestration: dataset builds, reconstruction sweeps,
the transformer-to-reservoir climate pipeline, and leave-out rotations.

Every run fans a single master seed out into per-stage, per-cell seed keys, so
identical plans produce byte-identical artifacts. Each emitted CSV row carries
the hash of the plan that produced it and the seed key that reproduces it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import containers
from .dynsys import TARGET_NAMES, TrajectoryMatrix, catalog, preprocess, simulate, system
from .errors import DivergenceError, ManifestError, ValidationError
from .metrics import DEFAULT_STABILITY_THRESHOLD, deviation_value, mse, recovery_stability, rmse
from .observe import sparsify
from .reservoir import ReservoirConfig, closed_loop_predict, train_on_segments
from .transformer import TrainingRegime, TransformerConfig, TransformerParams, forward, train

TOOL_VERSION = "0.1.0"

# Stage tags mixed into seed keys so stages draw from disjoint streams.
STAGE_GEN, STAGE_TRAIN, STAGE_SWEEP, STAGE_CLIMATE, STAGE_ROTATE = 1, 2, 3, 4, 5

PROFILE_DATA_LENGTH = {"desk": 50_000, "paper": 1_500_000}


def all_system_names() -> list[str]:
    return [s.name for s in catalog()]


def pool_from_selector(selector: str) -> list[str]:
    """Parse a pool selector: 'all', 'all-minus:a,b,c', or an explicit comma list."""
    names = all_system_names()
    if selector == "all":
        return names
    if selector.startswith("all-minus:"):
        removed = {s.strip() for s in selector.split(":", 1)[1].split(",") if s.strip()}
        unknown = removed - set(names)
        if unknown:
            raise ValidationError(f"unknown systems in selector: {sorted(unknown)}")
        return [n for n in names if n not in removed]
    picked = [s.strip() for s in selector.split(",") if s.strip()]
    unknown = set(picked) - set(names)
    if unknown:
        raise ValidationError(f"unknown systems in selector: {sorted(unknown)}")
    return picked


@dataclass
class ExperimentPlan:
    """Everything an experiment needs, serializable to JSON."""

    pool: list[str]
    targets: list[str] = field(default_factory=lambda: list(TARGET_NAMES))
    profile: str = "desk"
    d_l: int | None = None  # preprocessed rows per system; None = profile default
    dt: float = 0.01
    subsample: int = 10
    subsample_overrides: dict = field(default_factory=dict)
    transient_cut: int = 50_000
    model: dict = field(default_factory=dict)  # TransformerConfig overrides
    noise_sigma: float = 0.05  # measurement noise during training
    grid_ls: list[int] = field(default_factory=lambda: [200])
    grid_sr: list[float] = field(default_factory=lambda: [0.5, 0.8])
    grid_sigma: list[float] = field(default_factory=lambda: [0.0])
    noise_kind: str = "mult"  # test-time noise: 'mult' or 'add'
    realizations: int = 50
    rc_segments: int = 3
    rc_segment_length: int = 2000
    rc_sparsity: float = 0.5
    horizon: int = 10_000
    rmse_window: int = 150
    rotate_group_size: int = 4
    rotate_limit: int | None = None
    seed: int = 0

    def __post_init__(self):
        overlap = set(self.pool) & set(self.targets)
        if overlap:
            raise ValidationError(f"targets must be excluded from the pool: {sorted(overlap)}")
        if self.profile not in PROFILE_DATA_LENGTH:
            raise ValidationError(f"profile must be one of {sorted(PROFILE_DATA_LENGTH)}")
        if self.realizations < 1:
            raise ValidationError("realizations must be >= 1")
        if self.noise_kind not in ("mult", "add"):
            raise ValidationError("noise_kind must be 'mult' or 'add'")

    @property
    def data_length(self) -> int:
        return self.d_l if self.d_l is not None else PROFILE_DATA_LENGTH[self.profile]

    def transformer_config(self) -> TransformerConfig:
        base = TransformerConfig.desk() if self.profile == "desk" else TransformerConfig.paper()
        overrides = dict(self.model)
        for key, val in overrides.items():
            if not hasattr(base, key):
                raise ValidationError(f"unknown model override '{key}'")
            setattr(base, key, val)
        return TransformerConfig(**{k: getattr(base, k) for k in base.to_dict()})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    pool: list[str]
    targets: list[str]
    artifacts: dict  # name -> {"path": str, "sha256": str}
    skipped: list[str] = field(default_factory=list)
    tool_version: str = TOOL_VERSION

    def add(self, name: str, path) -> None:
        self.artifacts[name] = {"path": str(path), "sha256": containers.sha256_file(path)}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


def audit_manifest(manifest: RunManifest) -> None:
    """Verify artifact integrity and that no held-out system leaked into the pool."""
    leaked = set(manifest.pool) & set(manifest.targets)
    if leaked:
        raise ManifestError(f"held-out systems appear in the training pool: {sorted(leaked)}")
    for name, entry in manifest.artifacts.items():
        p = Path(entry["path"])
        if not p.exists():
            raise ManifestError(f"artifact '{name}' missing: {p}")
        digest = containers.sha256_file(p)
        if digest != entry["sha256"]:
            raise ManifestError(f"artifact '{name}' hash mismatch: {p}")


# ---------------------------------------------------------------------------
# Dataset builds
# ---------------------------------------------------------------------------


def _system_order_index(name: str) -> int:
    return all_system_names().index(name)


def build_system_trajectory(plan: ExperimentPlan, name: str, attempts: int = 3) -> TrajectoryMatrix:
    """Simulate and preprocess one system; retries a few init draws before giving up."""
    spec = system(name)
    subsample = plan.subsample_overrides.get(name, plan.subsample)
    n_steps = plan.transient_cut + plan.data_length * subsample
    last_error = None
    for attempt in range(attempts):
        rng = np.random.default_rng([plan.seed, STAGE_GEN, _system_order_index(name), attempt])
        x0 = spec.random_init(rng)
        try:
            raw = simulate(spec, x0, n_steps, dt=plan.dt)
            return preprocess(raw, transient_cut=plan.transient_cut, subsample=subsample)
        except DivergenceError as exc:
            last_error = exc
    raise last_error


def _matches_plan(path: Path, plan: ExperimentPlan, name: str) -> bool:
    """Reuse guard: a cached trajectory must match the plan's sampling shape."""
    try:
        traj = containers.load_trajectory(path)
    except Exception:
        return False
    subsample = plan.subsample_overrides.get(name, plan.subsample)
    return (len(traj) == plan.data_length
            and abs(traj.dt_effective - plan.dt * subsample) < 1e-12)


def build_dataset(plan: ExperimentPlan, data_dir, names=None, reuse: bool = True
                  ) -> tuple[dict, list[str]]:
    """Build trajectory files for the plan's systems; returns (paths, skipped names)."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    if names is None:
        names = list(dict.fromkeys(list(plan.pool) + list(plan.targets)))
    paths: dict[str, Path] = {}
    skipped: list[str] = []
    for name in names:
        out = data_dir / f"{name}.cwtj"
        if reuse and out.exists() and _matches_plan(out, plan, name):
            paths[name] = out
            continue
        try:
            traj = build_system_trajectory(plan, name)
        except DivergenceError as exc:
            warnings.warn(f"skipping divergent system: {exc}")
            skipped.append(name)
            continue
        containers.save_trajectory(out, traj)
        paths[name] = out
    return paths, skipped


def load_dataset(paths: dict) -> dict:
    return {name: containers.load_trajectory(p) for name, p in paths.items()}


def train_from_plan(plan: ExperimentPlan, data_dir, ckpt_path,
                    callback=None) -> tuple[TransformerParams, dict, RunManifest]:
    """Dataset -> regime -> trained transformer checkpoint, with a manifest."""
    cfg = plan.transformer_config()
    paths, skipped = build_dataset(plan, data_dir)
    pool = [n for n in plan.pool if n not in skipped]
    if not pool:
        raise ValidationError("every pool system failed to generate data")
    data = load_dataset({n: paths[n] for n in pool})
    regime = TrainingRegime(
        pool=pool,
        data={n: t.data for n, t in data.items()},
        data_length=plan.data_length,
        noise_sigma=plan.noise_sigma,
        held_out=tuple(plan.targets),
    )
    seed_key = [plan.seed, STAGE_TRAIN]
    params, log = train(regime, cfg, seed=seed_key, callback=callback)
    containers.save_checkpoint(ckpt_path, params.to_arrays())
    manifest = RunManifest(config_hash=plan.config_hash(), seed=plan.seed,
                           pool=pool, targets=list(plan.targets), artifacts={}, skipped=skipped)
    for name, p in paths.items():
        manifest.add(f"dataset.{name}", p)
    manifest.add("checkpoint", ckpt_path)
    return params, log, manifest


# ---------------------------------------------------------------------------
# Reconstruction sweeps
# ---------------------------------------------------------------------------


def linear_interpolation_fill(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-dimension linear interpolation through the observed points.

    The go-to naive baseline; leading/trailing gaps extend the edge value, and
    a dimension with no observations at all falls back to 0.5.
    """
    out = values.copy()
    length = values.shape[0]
    idx = np.arange(length)
    for d in range(values.shape[1]):
        obs = mask[:, d]
        if not obs.any():
            out[:, d] = 0.5
            continue
        out[:, d] = np.interp(idx, idx[obs], values[obs, d])
    return out


def _observe_window(truth: np.ndarray, sparsity: float, sigma: float, noise_kind: str,
                    rng: np.random.Generator):
    mult = sigma if noise_kind == "mult" else 0.0
    add = sigma if noise_kind == "add" else 0.0
    return sparsify(truth, sparsity, mult, add, rng)


def reconstruction_cell(params: TransformerParams, traj: TrajectoryMatrix, length: int,
                        sparsity: float, sigma: float, noise_kind: str, realizations: int,
                        seed_key: list) -> list[dict]:
    """Score `realizations` independent mask draws of one (L, S_r, sigma) grid cell."""
    rows = []
    data = traj.data
    for k in range(realizations):
        key = list(seed_key) + [k]
        rng = np.random.default_rng(key)
        offset = int(rng.integers(0, len(data) - length + 1))
        truth = data[offset : offset + length]
        values, mask = _observe_window(truth, sparsity, sigma, noise_kind, rng)
        pred = forward(values, params, mode="eval").data
        baseline = linear_interpolation_fill(values, mask)
        rows.append({
            "realization": k,
            "seed_key": ":".join(str(s) for s in key),
            "offset": offset,
            "mse": mse(pred, truth),
            "mse_baseline": mse(baseline, truth),
        })
    return rows


def run_reconstruction_sweep(plan: ExperimentPlan, params: TransformerParams,
                             data: dict) -> tuple[list[dict], list[dict]]:
    """Grid sweep over (target, sigma, L_s, S_r); per-realization rows plus aggregates."""
    chash = plan.config_hash()
    rows, aggregates = [], []
    for t_idx, target in enumerate(plan.targets):
        traj = data[target]
        for g_idx, sigma in enumerate(plan.grid_sigma):
            for l_idx, length in enumerate(plan.grid_ls):
                for s_idx, sparsity in enumerate(plan.grid_sr):
                    seed_key = [plan.seed, STAGE_SWEEP, t_idx, g_idx, l_idx, s_idx]
                    cell = reconstruction_cell(params, traj, length, sparsity, sigma,
                                               plan.noise_kind, plan.realizations, seed_key)
                    meta = {"config_hash": chash, "system": target, "L_s": length,
                            "S_r": sparsity, "sigma": sigma}
                    for row in cell:
                        rows.append({**meta, **row})
                    cell_mse = [r["mse"] for r in cell]
                    cell_base = [r["mse_baseline"] for r in cell]
                    aggregates.append({
                        **meta,
                        "n": len(cell),
                        "mse_mean": float(np.mean(cell_mse)),
                        "mse_median": float(np.median(cell_mse)),
                        "rmse_mean": float(np.mean(np.sqrt(cell_mse))),
                        "baseline_mse_median": float(np.median(cell_base)),
                        "recovery_stability": recovery_stability(
                            cell_mse, DEFAULT_STABILITY_THRESHOLD),
                    })
    return rows, aggregates


# ---------------------------------------------------------------------------
# Climate pipeline
# ---------------------------------------------------------------------------


def run_climate_pipeline(plan: ExperimentPlan, params: TransformerParams | None,
                         rc_cfg: ReservoirConfig, traj: TrajectoryMatrix,
                         target: str = "", use_transformer: bool = True):
    """Sparse segments -> reconstruction -> reservoir -> closed-loop climate.

    With use_transformer=False the clean segments feed the reservoir directly,
    which serves as the oracle-input reference for the same evaluation.
    Returns (report_dict, predicted TrajectoryMatrix).
    """
    seg_len, n_seg = plan.rc_segment_length, plan.rc_segments
    if n_seg < 1:
        raise ValidationError("need at least one segment")
    span = seg_len * n_seg
    needed = span + max(plan.horizon, plan.rmse_window)
    if len(traj) < needed:
        raise ValidationError(f"trajectory has {len(traj)} rows; pipeline needs {needed}")
    segments = []
    for i in range(n_seg):
        truth_seg = traj.data[i * seg_len : (i + 1) * seg_len]
        if use_transformer:
            if params is None:
                raise ValidationError("transformer path requested without a checkpoint")
            rng = np.random.default_rng([plan.seed, STAGE_CLIMATE, i])
            values, _ = _observe_window(truth_seg, plan.rc_sparsity, 0.0, plan.noise_kind, rng)
            segments.append(forward(values, params, mode="eval").data)
        else:
            segments.append(truth_seg)
    model = train_on_segments(segments, rc_cfg)
    warmup = segments[-1]
    prediction = closed_loop_predict(model, warmup, plan.horizon)
    prediction.dt_effective = traj.dt_effective
    truth_next = traj.data[span : span + plan.horizon]
    window = plan.rmse_window
    report = {
        "config_hash": plan.config_hash(),
        "system": target,
        "S_r": plan.rc_sparsity if use_transformer else 0.0,
        "segments": n_seg,
        "segment_length": seg_len,
        "horizon": plan.horizon,
        "rmse_short": rmse(prediction.data[:window], truth_next[:window]),
        "dv": deviation_value(prediction.data, truth_next),
        "clipped": int(prediction.clipped),
    }
    return report, prediction


# ---------------------------------------------------------------------------
# Leave-out rotation
# ---------------------------------------------------------------------------


def rotation_groups(names: list[str], group_size: int) -> list[list[str]]:
    """Partition names into consecutive held-out groups; the tail group may be smaller."""
    return [names[i : i + group_size] for i in range(0, len(names), group_size)]


def rotate_leave_out(plan: ExperimentPlan, data_dir, out_dir) -> list[dict]:
    """Hold out each catalog group in turn, train on the rest, score the held-out systems."""
    names = all_system_names()
    groups = rotation_groups(names, plan.rotate_group_size)
    if plan.rotate_limit is not None:
        groups = groups[: plan.rotate_limit]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = []
    for r_idx, group in enumerate(groups):
        sub = ExperimentPlan.from_dict({
            **plan.to_dict(),
            "pool": [n for n in names if n not in group],
            "targets": group,
            "seed": plan.seed + r_idx,
        })
        ckpt = out_dir / f"rotation_{r_idx}.cwck"
        params, _, manifest = train_from_plan(sub, data_dir, ckpt)
        manifest.save(out_dir / f"rotation_{r_idx}.manifest.json")
        paths, _ = build_dataset(sub, data_dir, names=group)
        data = load_dataset(paths)
        _, aggregates = run_reconstruction_sweep(sub, params, data)
        for agg in aggregates:
            table.append({"rotation": r_idx, **agg})
    return table


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_csv(path, rows: list[dict]) -> None:
    """Plain CSV with repr-formatted floats so identical runs are byte-identical."""
    if not rows:
        raise ValidationError(f"refusing to write empty CSV: {path}")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in (row[f] for f in fields)])

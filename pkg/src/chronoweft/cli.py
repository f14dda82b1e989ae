"""Command-line surface.

Verbs: gen, mask, train, reconstruct, climate, evaluate, search, rotate.
Relative output paths are resolved under $CHRONOWEFT_OUT when it is set.
Exit codes: 0 ok, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import containers, hyperopt
from .dynsys import TARGET_NAMES
from .errors import NumericalError, ValidationError
from .harness import (
    ExperimentPlan,
    build_dataset,
    load_dataset,
    pool_from_selector,
    rotate_leave_out,
    run_climate_pipeline,
    run_reconstruction_sweep,
    train_from_plan,
    write_csv,
)
from .metrics import deviation_value
from .observe import ObservationSpec, apply_observation
from .reservoir import RC_PRESETS, ReservoirConfig, closed_loop_predict, train_on_segments
from .transformer import TransformerParams, forward, reconstruct, train as train_model


def _out_path(p: str) -> Path:
    root = os.environ.get("CHRONOWEFT_OUT")
    path = Path(p)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _load_plan(args, **extra) -> ExperimentPlan:
    if getattr(args, "config", None):
        plan = ExperimentPlan.from_json(args.config)
        merged = plan.to_dict()
    else:
        merged = ExperimentPlan(pool=[]).to_dict()
    for key, val in extra.items():
        if val is not None:
            merged[key] = val
    return ExperimentPlan.from_dict(merged)


def cmd_gen(args) -> int:
    from .dynsys import preprocess, simulate, system

    spec = system(args.system)
    raw = simulate(spec, None, args.steps, dt=args.dt, seed=args.seed)
    traj = preprocess(raw, transient_cut=args.transient, subsample=args.subsample)
    containers.save_trajectory(_out_path(args.out), traj)
    print(f"wrote {args.out}: {len(traj)} rows x {traj.dim} dims, dt_eff={traj.dt_effective}")
    return 0


def cmd_mask(args) -> int:
    traj = containers.load_trajectory(args.infile)
    spec = ObservationSpec(sparsity=args.sparsity, mult_noise_sigma=args.mult_noise,
                           add_noise_sigma=args.add_noise, seed=args.seed)
    series = apply_observation(traj, spec)
    containers.save_sparse(_out_path(args.out), series)
    observed = int(series.mask.sum())
    print(f"wrote {args.out}: {observed}/{series.mask.size} entries observed")
    return 0


def cmd_train(args) -> int:
    plan = _load_plan(args, profile=args.profile, seed=args.seed,
                      pool=pool_from_selector(args.pool) if args.pool else None,
                      d_l=args.data_length, model=json.loads(args.model) if args.model else None)
    if args.epochs is not None:
        plan.model = {**plan.model, "epochs": args.epochs}
    ckpt = _out_path(args.out)

    def progress(epoch, loss):
        print(f"epoch {epoch}: loss {loss:.6f}")

    params, log, manifest = train_from_plan(plan, args.data_dir, ckpt, callback=progress)
    manifest.save(str(ckpt) + ".manifest.json")
    print(f"wrote {ckpt} ({len(params.named)} tensors), final loss {log['epoch_loss'][-1]:.6f}")
    return 0


def cmd_reconstruct(args) -> int:
    params = TransformerParams.from_arrays(containers.load_checkpoint(args.ckpt))
    series = containers.load_sparse(args.infile)
    traj = reconstruct(series, params)
    containers.save_trajectory(_out_path(args.out), traj)
    print(f"wrote {args.out}: reconstructed {len(traj)} rows")
    return 0


def _load_segment(path: str, params: TransformerParams | None) -> np.ndarray:
    """A segment file may be sparse (needs the transformer) or a dense trajectory."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"CWTJ":
        try:
            series = containers.load_sparse(path)
        except ValidationError:
            return containers.load_trajectory(path).data
        if params is None:
            raise ValidationError(f"{path} is sparse; provide --ckpt to reconstruct it")
        return forward(series.values, params, mode="eval").data
    raise ValidationError(f"{path}: not a trajectory container")


def cmd_climate(args) -> int:
    params = None
    if args.ckpt:
        params = TransformerParams.from_arrays(containers.load_checkpoint(args.ckpt))
    if args.rc_config in RC_PRESETS:
        rc_cfg = RC_PRESETS[args.rc_config]
    else:
        with open(args.rc_config) as fh:
            rc_cfg = ReservoirConfig(**json.load(fh))
    segments = [_load_segment(p, params) for p in args.segments.split(",")]
    model = train_on_segments(segments, rc_cfg)
    prediction = closed_loop_predict(model, segments[-1], args.horizon)
    containers.save_trajectory(_out_path(args.out), prediction)
    msg = f"wrote {args.out}: {len(prediction)} predicted rows"
    if args.truth:
        truth = containers.load_trajectory(args.truth)
        dv = deviation_value(prediction.data, truth.data[: len(prediction)])
        msg += f", DV vs truth {dv:.4f}"
        if args.report:
            write_csv(_out_path(args.report), [{
                "horizon": args.horizon, "dv": dv, "clipped": int(prediction.clipped),
            }])
    print(msg)
    return 0


def cmd_evaluate(args) -> int:
    plan = _load_plan(args, seed=args.seed)
    params = TransformerParams.from_arrays(containers.load_checkpoint(args.ckpt))
    paths, _ = build_dataset(plan, args.data_dir, names=list(plan.targets))
    data = load_dataset(paths)
    rows, aggregates = run_reconstruction_sweep(plan, params, data)
    out_dir = _out_path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "realizations.csv", rows)
    write_csv(out_dir / "aggregates.csv", aggregates)
    print(f"wrote {out_dir}/realizations.csv ({len(rows)} rows) and aggregates.csv "
          f"({len(aggregates)} rows)")
    return 0


def _search_reservoir(args, plan: ExperimentPlan):
    paths, _ = build_dataset(plan, args.data_dir, names=[args.system])
    traj = load_dataset(paths)[args.system]
    seg_len, n_seg, horizon = plan.rc_segment_length, plan.rc_segments, plan.horizon
    span = seg_len * n_seg
    segments = [traj.data[i * seg_len : (i + 1) * seg_len] for i in range(n_seg)]
    truth = traj.data[span : span + horizon]

    def objective(config) -> float:
        cfg = ReservoirConfig(size=args.reservoir_size, washout=100, seed=plan.seed, **config)
        model = train_on_segments(segments, cfg)
        prediction = closed_loop_predict(model, segments[-1], horizon)
        return deviation_value(prediction.data, truth)

    return hyperopt.RESERVOIR_SPACE, objective


def _search_transformer(args, plan: ExperimentPlan):
    from .transformer import TrainingRegime

    validation = list(hyperopt.VALIDATION_SYSTEMS)
    pool = [n for n in plan.pool if n not in validation] or pool_from_selector(
        "all-minus:" + ",".join(list(TARGET_NAMES) + validation))
    names = pool + validation
    paths, skipped = build_dataset(plan, args.data_dir, names=names)
    data = load_dataset(paths)
    pool = [n for n in pool if n not in skipped]
    val_plan = ExperimentPlan.from_dict({**plan.to_dict(), "pool": pool, "targets": validation})

    def objective(config) -> float:
        cfg_overrides = {**plan.model, **config}
        trial_plan = ExperimentPlan.from_dict({**val_plan.to_dict(), "model": cfg_overrides})
        cfg = trial_plan.transformer_config()
        regime = TrainingRegime(pool=pool, data={n: data[n].data for n in pool},
                                data_length=plan.data_length, noise_sigma=plan.noise_sigma,
                                held_out=tuple(validation))
        params, _ = train_model(regime, cfg, seed=[plan.seed, 6])
        _, aggregates = run_reconstruction_sweep(trial_plan, params,
                                                 {n: data[n] for n in validation})
        return float(np.mean([a["mse_median"] for a in aggregates]))

    return hyperopt.TRANSFORMER_SPACE, objective


def cmd_search(args) -> int:
    plan = _load_plan(args, seed=args.seed)
    if args.target == "reservoir":
        space, objective = _search_reservoir(args, plan)
    else:
        space, objective = _search_transformer(args, plan)
    trials = args.trials or hyperopt.DEFAULT_TRIALS[args.target]
    best, history = hyperopt.random_search(space, trials, objective, seed=plan.seed)
    rows = []
    for record in history:
        row = {"trial": record.index, "failed": int(record.failed),
               "objective": record.objective}
        row.update({f"param_{k}": v for k, v in sorted(record.config.items())})
        rows.append(row)
    write_csv(_out_path(args.out), rows)
    print(f"best trial {best.index}: objective {best.objective:.6f} with {best.config}")
    return 0


def cmd_rotate(args) -> int:
    plan = _load_plan(args, seed=args.seed)
    table = rotate_leave_out(plan, args.data_dir, args.out_dir)
    write_csv(_out_path(Path(args.out_dir) / "rotation.csv"), table)
    print(f"wrote {args.out_dir}/rotation.csv ({len(table)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chronoweft",
                                     description="Sparse-observation dynamics reconstruction")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="simulate a catalog system and store the normalized trajectory")
    p.add_argument("--system", required=True)
    p.add_argument("--steps", type=int, required=True, help="raw integration steps")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--subsample", type=int, default=10)
    p.add_argument("--transient", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("mask", help="apply the observation model to a trajectory")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--mult-noise", type=float, default=0.0)
    p.add_argument("--add-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("train", help="train the reconstruction model on a system pool")
    p.add_argument("--pool", default=None,
                   help="'all', 'all-minus:a,b', or comma list (default from --config)")
    p.add_argument("--profile", choices=("desk", "paper"), default=None)
    p.add_argument("--config", default=None, help="experiment plan JSON")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--data-length", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--model", default=None, help="JSON dict of model overrides")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct a sparse series with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("climate", help="train a reservoir on segments and free-run it")
    p.add_argument("--segments", required=True, help="comma-separated segment files")
    p.add_argument("--rc-config", required=True,
                   help=f"JSON config or preset: {', '.join(sorted(RC_PRESETS))}")
    p.add_argument("--ckpt", default=None, help="transformer checkpoint for sparse segments")
    p.add_argument("--horizon", type=int, default=10_000)
    p.add_argument("--truth", default=None, help="trajectory to score DV against")
    p.add_argument("--report", default=None, help="CSV path for the DV report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_climate)

    p = sub.add_parser("evaluate", help="run the reconstruction sweep grid")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="random-search hyperparameters")
    p.add_argument("--target", choices=("transformer", "reservoir"), required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--system", default="sprott_0", help="system for the reservoir objective")
    p.add_argument("--reservoir-size", type=int, default=300)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("rotate", help="leave-out rotation over the whole catalog")
    p.add_argument("--config", default=None)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rotate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

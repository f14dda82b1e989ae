"""Flat binary containers for trajectories, sparse series, and checkpoints.

All integers and floats are little-endian. Layouts:

trajectory (.cwtj):
    magic b"CWTJ" | version u32 | rows u64 | dim u32 | dt_effective f64
    | data rows*dim f64 row-major | norm_stats 2*dim f64 (mins row, maxs row)

sparse series (.cwsp): a trajectory container holding the observed values,
followed by
    magic b"CWSP" | sparsity f64 | mult_noise_sigma f64 | add_noise_sigma f64
    | packed row-major bitmask, ceil(rows*dim/8) bytes (1 = observed)

checkpoint (.cwck): named f64 tensors
    magic b"CWCK" | version u32 | count u32
    then per tensor: name_len u32 | name UTF-8 | ndim u32 | dims u64*ndim | payload f64
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dynsys import TrajectoryMatrix
from .errors import ValidationError
from .observe import ObservationSpec, SparseSeries

FORMAT_VERSION = 1

_TRAJ_MAGIC = b"CWTJ"
_SPARSE_MAGIC = b"CWSP"
_CKPT_MAGIC = b"CWCK"


def _require(cond: bool, msg: str):
    if not cond:
        raise ValidationError(msg)


def _write_traj(fh, traj: TrajectoryMatrix):
    rows, dim = traj.data.shape
    fh.write(_TRAJ_MAGIC)
    fh.write(struct.pack("<IQId", FORMAT_VERSION, rows, dim, traj.dt_effective))
    fh.write(np.ascontiguousarray(traj.data, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(traj.norm_stats, dtype="<f8").tobytes())


def _read_traj(fh, path) -> TrajectoryMatrix:
    magic = fh.read(4)
    _require(magic == _TRAJ_MAGIC, f"{path}: bad magic {magic!r}, expected trajectory container")
    version, rows, dim, dt_eff = struct.unpack("<IQId", fh.read(24))
    _require(version == FORMAT_VERSION, f"{path}: unsupported version {version}")
    data = np.frombuffer(fh.read(rows * dim * 8), dtype="<f8").reshape(rows, dim).astype(np.float64)
    stats = np.frombuffer(fh.read(2 * dim * 8), dtype="<f8").reshape(2, dim).astype(np.float64)
    return TrajectoryMatrix(data=data, dt_effective=dt_eff, norm_stats=stats)


def save_trajectory(path, traj: TrajectoryMatrix) -> None:
    with open(path, "wb") as fh:
        _write_traj(fh, traj)


def load_trajectory(path) -> TrajectoryMatrix:
    with open(path, "rb") as fh:
        return _read_traj(fh, path)


def save_sparse(path, series: SparseSeries) -> None:
    stats = series.norm_stats
    if stats is None:
        stats = np.vstack([np.zeros(series.dim), np.ones(series.dim)])
    carrier = TrajectoryMatrix(series.values, series.dt_effective, stats)
    with open(path, "wb") as fh:
        _write_traj(fh, carrier)
        fh.write(_SPARSE_MAGIC)
        s = series.spec
        fh.write(struct.pack("<ddd", s.sparsity, s.mult_noise_sigma, s.add_noise_sigma))
        fh.write(np.packbits(series.mask.reshape(-1)).tobytes())


def load_sparse(path) -> SparseSeries:
    with open(path, "rb") as fh:
        carrier = _read_traj(fh, path)
        magic = fh.read(4)
        _require(magic == _SPARSE_MAGIC, f"{path}: missing bitmask section (magic {magic!r})")
        sparsity, mult, add = struct.unpack("<ddd", fh.read(24))
        rows, dim = carrier.data.shape
        n_bytes = (rows * dim + 7) // 8
        bits = np.unpackbits(np.frombuffer(fh.read(n_bytes), dtype=np.uint8))
        mask = bits[: rows * dim].astype(bool).reshape(rows, dim)
    return SparseSeries(
        values=carrier.data,
        mask=mask,
        spec=ObservationSpec(sparsity=sparsity, mult_noise_sigma=mult, add_noise_sigma=add),
        dt_effective=carrier.dt_effective,
        norm_stats=carrier.norm_stats,
    )


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named f64 arrays; iteration order is sorted for reproducible bytes."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            if arr.ndim and not arr.flags.c_contiguous:
                arr = np.ascontiguousarray(arr)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        _require(magic == _CKPT_MAGIC, f"{path}: bad magic {magic!r}, expected checkpoint")
        version, count = struct.unpack("<II", fh.read(8))
        _require(version == FORMAT_VERSION, f"{path}: unsupported version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(size * 8), dtype="<f8").astype(np.float64)
            tensors[name] = arr.reshape(shape)
    return tensors


def sha256_file(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

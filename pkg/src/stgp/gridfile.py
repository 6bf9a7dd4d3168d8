"""Space-time cube persistence.

Binary layout (little endian): magic ``STGP`` (4 bytes), version u16 = 1,
n1 / n2 / n_frames as u32, dt and t0 as f64 (34-byte header), followed by
n_frames * n1 * n2 float64 values, frame-major then row-major (the second
grid axis runs fastest).  A CSV alternative writes one frame per file next
to a small metadata sidecar.
"""

from __future__ import annotations

import configparser
import struct
from pathlib import Path

import numpy as np

from .core import DataFormatError, SpaceTimeCube, make_grid
from .util import fmt17

MAGIC = b"STGP"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIdd")
HEADER_SIZE = _HEADER.size  # 34 bytes


def _infer_format(path, fmt):
    if fmt is not None:
        return fmt
    return "csv" if str(path).endswith(".csv") else "binary"


def write_cube(path, cube: SpaceTimeCube, fmt: str = None) -> None:
    """Write a cube; format inferred from the extension unless given."""
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        _write_binary(Path(path), cube)
    elif fmt == "csv":
        _write_csv(Path(path), cube)
    else:
        raise ValueError(f"unknown cube format {fmt!r}")


def read_cube(path, fmt: str = None) -> SpaceTimeCube:
    """Read a cube written by :func:`write_cube`."""
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        return _read_binary(Path(path))
    if fmt == "csv":
        return _read_csv(Path(path))
    raise ValueError(f"unknown cube format {fmt!r}")


def _write_binary(path: Path, cube: SpaceTimeCube) -> None:
    if not np.isfinite(cube.frames).all():
        raise DataFormatError("refusing to write non-finite values")
    header = _HEADER.pack(MAGIC, VERSION, cube.grid.n1, cube.grid.n2,
                          cube.n_frames, cube.dt, cube.t0)
    payload = np.ascontiguousarray(cube.frames, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def _read_binary(path: Path) -> SpaceTimeCube:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n1, n2, n_frames, dt, t0 = _HEADER.unpack(raw[:HEADER_SIZE])
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = HEADER_SIZE + n_frames * n1 * n2 * 8
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: payload truncated or padded ({len(raw)} bytes, expected {expected})")
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE).reshape(n_frames, n1 * n2)
    if not np.isfinite(values).all():
        raise DataFormatError(f"{path}: payload contains non-finite values")
    grid = make_grid(n1, n2)
    return SpaceTimeCube(grid=grid, dt=dt, frames=values.astype(float), t0=t0)


def _csv_paths(path: Path, n_frames: int):
    stem = path.with_suffix("")
    meta = Path(f"{stem}_meta.cfg")
    frames = [Path(f"{stem}_frame{i:04d}.csv") for i in range(n_frames)]
    return meta, frames


def _write_csv(path: Path, cube: SpaceTimeCube) -> None:
    meta_path, frame_paths = _csv_paths(path, cube.n_frames)
    cfg = configparser.ConfigParser()
    cfg["cube"] = {
        "n1": str(cube.grid.n1),
        "n2": str(cube.grid.n2),
        "n_frames": str(cube.n_frames),
        "dt": fmt17(cube.dt),
        "t0": fmt17(cube.t0),
        "extent": fmt17(cube.grid.extent),
    }
    with open(meta_path, "w") as fh:
        cfg.write(fh)
    for fp, frame in zip(frame_paths, cube.frames):
        np.savetxt(fp, frame.reshape(cube.grid.n1, cube.grid.n2),
                   fmt="%.17g", delimiter=",")


def _read_csv(path: Path) -> SpaceTimeCube:
    cfg = configparser.ConfigParser()
    meta_path = Path(f"{Path(path).with_suffix('')}_meta.cfg")
    if not meta_path.exists():
        raise DataFormatError(f"{meta_path}: metadata sidecar not found")
    cfg.read(meta_path)
    sec = cfg["cube"]
    n1, n2 = int(sec["n1"]), int(sec["n2"])
    n_frames = int(sec["n_frames"])
    _, frame_paths = _csv_paths(Path(path), n_frames)
    frames = np.empty((n_frames, n1 * n2))
    for i, fp in enumerate(frame_paths):
        if not fp.exists():
            raise DataFormatError(f"{fp}: frame file missing")
        frame = np.loadtxt(fp, delimiter=",", ndmin=2)
        if frame.shape != (n1, n2):
            raise DataFormatError(f"{fp}: expected {n1} x {n2}, got {frame.shape}")
        frames[i] = frame.ravel()
    if not np.isfinite(frames).all():
        raise DataFormatError(f"{path}: frames contain non-finite values")
    grid = make_grid(n1, n2, extent=float(sec.get("extent", "1.0")))
    return SpaceTimeCube(grid=grid, dt=float(sec["dt"]), frames=frames,
                         t0=float(sec["t0"]))

"""Snapshots of lattice configurations and IDE fields.

Lattices are stored as run-length-encoded text: a ``#`` header line carrying
the geometry, then whitespace-separated ``<count>x<state>`` runs over the
flattened (C-order) state array.

Fields are binary: one ASCII header line

    savanna-field 1 d=<d> n=<nodes per axis> h=<spacing> half_width=<w>

followed by the S array and then the T array as little-endian float64.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .errors import IoError
from .ide import Field
from .lattice import Configuration, Geometry

logger = logging.getLogger(__name__)

FIELD_MAGIC = "savanna-field"
FIELD_VERSION = 1


# ─── Lattices ─────────────────────────────────────────────────────────────────


def encode_rle(state: npt.ArrayLike) -> str:
    flat = np.asarray(state, dtype=np.int8).ravel()
    if flat.size == 0:
        return ""
    edges = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], edges))
    lengths = np.diff(np.concatenate((starts, [flat.size])))
    return " ".join(f"{n}x{flat[s]}" for s, n in zip(starts, lengths, strict=True))


def decode_rle(text: str, size: int) -> npt.NDArray[np.int8]:
    out = np.empty(size, dtype=np.int8)
    pos = 0
    for token in text.split():
        count, _, value = token.partition("x")
        n = int(count)
        if pos + n > size:
            raise ValueError(f"run '{token}' overflows a lattice of {size} sites")
        out[pos : pos + n] = int(value)
        pos += n
    if pos != size:
        raise ValueError(f"runs cover {pos} sites, expected {size}")
    return out


def write_lattice(config: Configuration, path: Path) -> Path:
    g = config.geometry
    header = f"# {g.model_dump_json()}\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(header + encode_rle(config.state) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write lattice snapshot {path}: {e}") from e
    return path


def read_lattice(path: Path) -> Configuration:
    try:
        header, _, body = path.read_text(encoding="utf-8").partition("\n")
    except OSError as e:
        raise IoError(f"cannot read lattice snapshot {path}: {e}") from e
    g = Geometry.model_validate_json(header.removeprefix("#").strip())
    return Configuration(g, decode_rle(body, g.n_sites).reshape(g.shape))


# ─── Fields ───────────────────────────────────────────────────────────────────


def write_field(f: Field, path: Path) -> Path:
    header = (
        f"{FIELD_MAGIC} {FIELD_VERSION} d={f.d} n={f.n} h={f.h!r} half_width={f.half_width!r}\n"
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(f.S, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(f.T, dtype="<f8").tobytes())
    except OSError as e:
        raise IoError(f"cannot write field snapshot {path}: {e}") from e
    return path


def read_field(path: Path) -> Field:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read field snapshot {path}: {e}") from e
    header, _, payload = raw.partition(b"\n")
    magic, version, *pairs = header.decode("ascii").split()
    if magic != FIELD_MAGIC or int(version) != FIELD_VERSION:
        raise ValueError(f"{path} is not a version {FIELD_VERSION} field snapshot")
    meta = dict(pair.split("=", 1) for pair in pairs)
    d, n = int(meta["d"]), int(meta["n"])
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != 2 * n**d:
        raise ValueError(f"{path}: expected {2 * n**d} values, found {data.size}")
    shape = (n,) * d
    return Field(
        S=data[: n**d].reshape(shape).astype(np.float64),
        T=data[n**d :].reshape(shape).astype(np.float64),
        h=float(meta["h"]),
        half_width=float(meta["half_width"]),
    )


def write_field_slice(f: Field, path: Path) -> Path:
    """CSV of x, G, S, T along the first axis through the centre of the grid."""
    centre = f.n // 2
    index = (slice(None),) + (centre,) * (f.d - 1)
    G = f.G
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "G", "S", "T"])
            for x, g, s, t in zip(f.axis, G[index], f.S[index], f.T[index], strict=True):
                writer.writerow([repr(float(x)), repr(float(g)), repr(float(s)), repr(float(t))])
    except OSError as e:
        raise IoError(f"cannot write field slice {path}: {e}") from e
    return path

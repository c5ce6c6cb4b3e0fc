"""Tests for lattice and field snapshots."""

from __future__ import annotations

import csv

import numpy as np
import pytest

from savanna_coexistence.errors import IoError
from savanna_coexistence.ide import make_grid
from savanna_coexistence.lattice import Configuration, Geometry
from savanna_coexistence.snapshots import (
    decode_rle,
    encode_rle,
    read_field,
    read_lattice,
    write_field,
    write_field_slice,
    write_lattice,
)

# ─── Run-length encoding ──────────────────────────────────────────────────────


def test_rle_format():
    assert encode_rle([2, 2, 2, 0, 1, 1]) == "3x2 1x0 2x1"
    assert encode_rle([]) == ""
    assert encode_rle(np.zeros((3, 3))) == "9x0"


def test_rle_decode_rejects_bad_lengths():
    with pytest.raises(ValueError, match="overflows"):
        decode_rle("4x1", 3)
    with pytest.raises(ValueError, match="expected 5"):
        decode_rle("2x1 2x0", 5)


def test_lattice_snapshot(tmp_path, rng):
    g = Geometry(d=2, L=5, epsilon0=0.2, side=20)
    config = Configuration(g, rng.integers(0, 3, size=g.shape).astype(np.int8))
    path = write_lattice(config, tmp_path / "snaps" / "a.rle")
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("# {")
    back = read_lattice(path)
    assert back.geometry == g
    assert np.array_equal(back.state, config.state)


def test_missing_lattice_snapshot(tmp_path):
    with pytest.raises(IoError):
        read_lattice(tmp_path / "missing.rle")


# ─── Fields ───────────────────────────────────────────────────────────────────


@pytest.mark.parametrize("d", [1, 2])
def test_field_snapshot(tmp_path, rng, d):
    f = make_grid(2.0, 0.25, d)
    f.S[...] = rng.random(f.S.shape) / 2
    f.T[...] = rng.random(f.T.shape) / 2
    back = read_field(write_field(f, tmp_path / "f.field"))
    assert (back.h, back.half_width, back.d, back.n) == (f.h, f.half_width, d, f.n)
    assert np.array_equal(back.S, f.S)
    assert np.array_equal(back.T, f.T)


def test_field_header(tmp_path):
    path = write_field(make_grid(1.0, 0.5), tmp_path / "f.field")
    header = path.read_bytes().split(b"\n", 1)[0]
    assert header == b"savanna-field 1 d=1 n=5 h=0.5 half_width=1.0"


def test_field_rejects_foreign_and_truncated_files(tmp_path):
    foreign = tmp_path / "x.field"
    foreign.write_bytes(b"something-else 1 d=1 n=3\n")
    with pytest.raises(ValueError, match="not a version 1"):
        read_field(foreign)
    path = write_field(make_grid(1.0, 0.5), tmp_path / "f.field")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="expected 10 values"):
        read_field(path)


def test_field_slice_through_centre(tmp_path):
    f = make_grid(1.0, 0.5, 2)
    f.T[2, 2] = 0.75
    f.S[0, 2] = 0.5
    path = write_field_slice(f, tmp_path / "slice.csv")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "G", "S", "T"]
    assert len(rows) == 6
    assert [float(v) for v in rows[3]] == [0.0, 0.25, 0.0, 0.75]
    assert [float(v) for v in rows[1]] == [-1.0, 0.5, 0.5, 0.0]

"""Plot-ready files: tidy record CSVs, gnuplot matrices and SVG heatmaps.

The CSV is RFC 4180 (``csv`` module, CRLF line ends, minimal quoting). Fixed
columns come first; grid coordinates follow as ``point.<name>`` and outputs
as ``out.<name>``, each group sorted by name. Output cells encode ``true`` /
``false`` for booleans, ``null`` for None and ``repr`` for floats, so
:func:`parse_records_csv` restores the records exactly. An empty cell means
the record has no such output.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Sequence
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
import numpy.typing as npt

from .errors import IoError
from .models import ResultRecord, Scalar

logger = logging.getLogger(__name__)

FIXED_COLUMNS = ("experiment_id", "kind", "grid_index", "replica", "seed", "wall_time")
POINT_PREFIX = "point."
OUTPUT_PREFIX = "out."


# ─── Tidy CSV ─────────────────────────────────────────────────────────────────


def _encode(value: Scalar) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _decode(cell: str) -> Scalar:
    if cell == "null":
        return None
    if cell in ("true", "false"):
        return cell == "true"
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def record_columns(records: Sequence[ResultRecord]) -> list[str]:
    points = sorted({k for r in records for k in r.point})
    outputs = sorted({k for r in records for k in r.outputs})
    return (
        list(FIXED_COLUMNS)
        + [POINT_PREFIX + k for k in points]
        + [OUTPUT_PREFIX + k for k in outputs]
    )


def write_records_csv(records: Sequence[ResultRecord], path: Path) -> Path:
    """One row per record; an empty record set still gets the header row."""
    columns = record_columns(records)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for r in records:
                row = [
                    r.experiment_id,
                    r.kind,
                    str(r.grid_index),
                    str(r.replica),
                    str(r.seed),
                    repr(r.wall_time),
                ]
                for col in columns[len(FIXED_COLUMNS) :]:
                    if col.startswith(POINT_PREFIX):
                        v = r.point.get(col.removeprefix(POINT_PREFIX))
                        row.append("" if v is None else repr(float(v)))
                    else:
                        key = col.removeprefix(OUTPUT_PREFIX)
                        row.append(_encode(r.outputs[key]) if key in r.outputs else "")
                writer.writerow(row)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def parse_records_csv(path: Path) -> list[ResultRecord]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    records = []
    for row in rows:
        point = {
            k.removeprefix(POINT_PREFIX): float(v)
            for k, v in row.items()
            if k.startswith(POINT_PREFIX) and v != ""
        }
        outputs = {
            k.removeprefix(OUTPUT_PREFIX): _decode(v)
            for k, v in row.items()
            if k.startswith(OUTPUT_PREFIX) and v != ""
        }
        records.append(
            ResultRecord(
                experiment_id=row["experiment_id"],
                kind=row["kind"],
                grid_index=int(row["grid_index"]),
                replica=int(row["replica"]),
                seed=int(row["seed"]),
                point=point,
                outputs=outputs,
                wall_time=float(row["wall_time"]),
            )
        )
    return records


def write_table(header: Sequence[str], rows: Sequence[Sequence[Scalar]], path: Path) -> Path:
    """Plain CSV with the same cell encoding as the record files."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows([_encode(v) for v in row] for row in rows)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


# ─── Matrices ─────────────────────────────────────────────────────────────────


def write_matrix(
    values: npt.ArrayLike,
    x_values: Sequence[float],
    y_values: Sequence[float],
    path: Path,
    *,
    x_name: str = "x",
    y_name: str = "y",
) -> Path:
    """Gnuplot ``nonuniform matrix`` file: rows are y, columns are x.

    The first line is the column count followed by the x coordinates; every
    following line starts with its y coordinate.
    """
    z = np.asarray(values, dtype=np.float64)
    if z.shape != (len(y_values), len(x_values)):
        raise ValueError(f"matrix shape {z.shape} does not match {len(y_values)}x{len(x_values)}")
    lines = [
        f"# rows: {y_name}, columns: {x_name}",
        " ".join([str(len(x_values))] + [repr(float(x)) for x in x_values]),
    ]
    for y, row in zip(y_values, z, strict=True):
        lines.append(" ".join([repr(float(y))] + [repr(float(v)) for v in row]))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def read_matrix(path: Path) -> tuple[list[float], list[float], npt.NDArray[np.float64]]:
    rows = [
        line.split()
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]
    x_values = [float(v) for v in rows[0][1:]]
    y_values = [float(r[0]) for r in rows[1:]]
    z = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return x_values, y_values, z.reshape(len(y_values), len(x_values))


# ─── SVG heatmap ──────────────────────────────────────────────────────────────


def _colour(v: float, lo: float, hi: float) -> str:
    """Linear white-to-green ramp; NaN cells are grey."""
    if not math.isfinite(v):
        return "#bbbbbb"
    u = 0.0 if hi <= lo else min(max((v - lo) / (hi - lo), 0.0), 1.0)
    r = round(255 - u * (255 - 20))
    g = round(255 - u * (255 - 110))
    b = round(255 - u * (255 - 40))
    return f"#{r:02x}{g:02x}{b:02x}"


def write_svg_heatmap(
    values: npt.ArrayLike,
    x_values: Sequence[float],
    y_values: Sequence[float],
    path: Path,
    *,
    title: str = "",
    x_name: str = "x",
    y_name: str = "y",
    cell: int = 24,
) -> Path:
    """Heatmap with y increasing upwards, each cell annotated with its value in a tooltip."""
    z = np.asarray(values, dtype=np.float64)
    ny, nx = z.shape
    finite = z[np.isfinite(z)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    margin = 60
    width = margin + nx * cell + 20
    height = margin + ny * cell + 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{margin}" y="16">{escape(title)}</text>',
    ]
    for iy in range(ny):
        top = 24 + (ny - 1 - iy) * cell
        for ix in range(nx):
            v = float(z[iy, ix])
            parts.append(
                f'<rect x="{margin + ix * cell}" y="{top}" width="{cell}" height="{cell}" '
                f'fill="{_colour(v, lo, hi)}"><title>{escape(x_name)}={x_values[ix]:g} '
                f"{escape(y_name)}={y_values[iy]:g}: {v:.4g}</title></rect>"
            )
    base = 24 + ny * cell
    parts.append(f'<text x="{margin}" y="{base + 16}">{escape(x_name)} &#8594;</text>')
    parts.append(f'<text x="4" y="{24 + cell}">{escape(y_name)} &#8593;</text>')
    parts.append(f'<text x="{margin}" y="{base + 32}">range {lo:.4g} .. {hi:.4g}</text>')
    parts.append("</svg>")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def emit_plot_data(
    records: Sequence[ResultRecord],
    out_dir: Path,
    *,
    matrix: tuple[str, str, str] | None = None,
) -> dict[str, Path]:
    """Write ``records.csv`` and, given ``(x_name, y_name, output)``, the mean of
    ``output`` per cell as a matrix file and an SVG heatmap.
    """
    paths = {"csv": write_records_csv(records, out_dir / "records.csv")}
    if matrix is None or not records:
        return paths
    x_name, y_name, output = matrix
    xs = sorted({r.point[x_name] for r in records})
    ys = sorted({r.point[y_name] for r in records})
    total = np.zeros((len(ys), len(xs)))
    count = np.zeros((len(ys), len(xs)))
    for r in records:
        v = r.outputs.get(output)
        if v is None or isinstance(v, str):
            continue
        iy, ix = ys.index(r.point[y_name]), xs.index(r.point[x_name])
        total[iy, ix] += float(v)
        count[iy, ix] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    stem = output.replace("@", "_at_")
    paths["matrix"] = write_matrix(
        mean, xs, ys, out_dir / f"{stem}.dat", x_name=x_name, y_name=y_name
    )
    paths["svg"] = write_svg_heatmap(
        mean, xs, ys, out_dir / f"{stem}.svg", title=output, x_name=x_name, y_name=y_name
    )
    logger.info("plot data for %s written to %s", output, out_dir)
    return paths

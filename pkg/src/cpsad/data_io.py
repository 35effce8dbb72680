"""Time-series CSV files and model/checkpoint persistence.

CSV layout: a header row whose columns carry their role in a prefix,
``t`` (time), ``x:<name>`` (inputs), ``y:<name>`` (observations) and an
optional ``label`` column with 0/1 values. Reals are written with ``repr``
so every value survives a write/read cycle bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ModelFormatError, ParseError

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


@dataclass
class TimeSeries:
    xs: np.ndarray
    ys: np.ndarray
    labels: np.ndarray | None = None
    x_names: list[str] = field(default_factory=list)
    y_names: list[str] = field(default_factory=list)
    time: np.ndarray | None = None

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.float64)
        self.ys = np.asarray(self.ys, dtype=np.float64)
        if self.xs.ndim == 1:
            self.xs = self.xs[:, None]
        if self.ys.ndim == 1:
            self.ys = self.ys[:, None]
        n = len(self.xs)
        if len(self.ys) != n:
            raise ContractError(f"xs has {n} rows but ys has {len(self.ys)}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=bool)
            if self.labels.shape != (n,):
                raise ContractError(f"labels must have shape ({n},), got {self.labels.shape}")
        if not self.x_names:
            self.x_names = [f"x{i}" for i in range(self.xs.shape[1])]
        if not self.y_names:
            self.y_names = [f"y{i}" for i in range(self.ys.shape[1])]
        if len(self.x_names) != self.xs.shape[1] or len(self.y_names) != self.ys.shape[1]:
            raise ContractError("channel name count does not match data width")
        names = list(self.x_names) + list(self.y_names)
        if len(set(names)) != len(names):
            raise ContractError(f"channel names must be unique: {names}")
        self.time = np.arange(n, dtype=np.float64) if self.time is None else np.asarray(self.time, dtype=np.float64)
        if self.time.shape != (n,):
            raise ContractError("time column length does not match data")
        if n > 1 and np.any(np.diff(self.time) <= 0):
            raise ContractError("time must be strictly increasing")
        if not (np.all(np.isfinite(self.xs)) and np.all(np.isfinite(self.ys)) and np.all(np.isfinite(self.time))):
            raise ContractError("time series contains non-finite values")

    def __len__(self):
        return len(self.xs)

    @property
    def input_dim(self) -> int:
        return self.xs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.ys.shape[1]

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(
            self.xs[start:stop], self.ys[start:stop],
            None if self.labels is None else self.labels[start:stop],
            list(self.x_names), list(self.y_names), self.time[start:stop],
        )

    def equals(self, other: "TimeSeries") -> bool:
        """Exact (bitwise) equality of every field."""
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None and np.array_equal(self.labels, other.labels)
        )
        return (
            same_labels
            and self.x_names == other.x_names
            and self.y_names == other.y_names
            and self.xs.shape == other.xs.shape
            and self.ys.shape == other.ys.shape
            and self.xs.tobytes() == other.xs.tobytes()
            and self.ys.tobytes() == other.ys.tobytes()
            and self.time.tobytes() == other.time.tobytes()
        )


@dataclass
class ColumnSchema:
    time: str | None
    inputs: list[str]
    outputs: list[str]
    label: str | None = None

    def __post_init__(self):
        if not self.inputs or not self.outputs:
            raise ContractError("schema needs at least one input and one output column")

    @classmethod
    def infer(cls, header: list[str]) -> "ColumnSchema":
        time = label = None
        inputs, outputs = [], []
        for col, name in enumerate(header):
            if name == "t":
                if time is not None:
                    raise ParseError(f"row 1, column {col + 1}: duplicate time column")
                time = name
            elif name == "label":
                if label is not None:
                    raise ParseError(f"row 1, column {col + 1}: more than one label column")
                label = name
            elif name.startswith("x:") and len(name) > 2:
                inputs.append(name)
            elif name.startswith("y:") and len(name) > 2:
                outputs.append(name)
            else:
                raise ParseError(f"row 1, column {col + 1}: unknown column {name!r} (expected t, x:..., y:... or label)")
        if not inputs or not outputs:
            raise ParseError("row 1: header needs at least one x: and one y: column")
        return cls(time, inputs, outputs, label)

    def header(self) -> list[str]:
        cols = [self.time] if self.time else []
        cols += self.inputs + self.outputs
        if self.label:
            cols.append(self.label)
        return cols


def format_real(v: float) -> str:
    return repr(float(v))


def _parse_real(cell: str, row: int, col: int, name: str) -> float:
    if not _NUMBER.match(cell):
        raise ParseError(f"row {row}, column {col} ({name}): not a number: {cell!r}")
    return float(cell)


def read_csv(path, schema: ColumnSchema | None = None) -> TimeSeries:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ParseError(f"{path}: row 1: missing header")
    header = rows[0]
    if schema is None:
        schema = ColumnSchema.infer(header)
    index = {name: i for i, name in enumerate(header)}
    for name in schema.header():
        if name not in index:
            raise ParseError(f"{path}: row 1: missing column {name!r}")

    body = rows[1:]
    n = len(body)
    xs = np.empty((n, len(schema.inputs)))
    ys = np.empty((n, len(schema.outputs)))
    labels = np.zeros(n, dtype=bool) if schema.label else None
    time = np.empty(n) if schema.time else None
    for r, cells in enumerate(body):
        row_no = r + 2
        if len(cells) != len(header):
            raise ParseError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(cells)}")
        for j, name in enumerate(schema.inputs):
            xs[r, j] = _parse_real(cells[index[name]], row_no, index[name] + 1, name)
        for j, name in enumerate(schema.outputs):
            ys[r, j] = _parse_real(cells[index[name]], row_no, index[name] + 1, name)
        if schema.label:
            cell = cells[index[schema.label]]
            if cell not in ("0", "1"):
                raise ParseError(f"{path}: row {row_no}, column {index[schema.label] + 1} (label): expected 0 or 1, got {cell!r}")
            labels[r] = cell == "1"
        if schema.time:
            time[r] = _parse_real(cells[index[schema.time]], row_no, index[schema.time] + 1, schema.time)
            if r > 0 and time[r] <= time[r - 1]:
                raise ParseError(f"{path}: row {row_no}, column {index[schema.time] + 1} (t): time not strictly increasing")
    return TimeSeries(
        xs, ys, labels,
        [c.split(":", 1)[1] if c.startswith("x:") else c for c in schema.inputs],
        [c.split(":", 1)[1] if c.startswith("y:") else c for c in schema.outputs],
        time,
    )


def write_csv(series: TimeSeries, path) -> None:
    cols = ["t"] + [f"x:{n}" for n in series.x_names] + [f"y:{n}" for n in series.y_names]
    if series.labels is not None:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(len(series)):
        cells = [format_real(series.time[i])]
        cells += [format_real(v) for v in series.xs[i]]
        cells += [format_real(v) for v in series.ys[i]]
        if series.labels is not None:
            cells.append("1" if series.labels[i] else "0")
        lines.append(",".join(cells))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_table(path, header: list[str], rows) -> None:
    """Generic numeric CSV writer used for residual and plot-data files."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else format_real(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: row 1: missing header")
    header = rows[0]
    data = np.empty((len(rows) - 1, len(header)))
    for r, cells in enumerate(rows[1:]):
        if len(cells) != len(header):
            raise ParseError(f"{path}: row {r + 2}: expected {len(header)} cells, got {len(cells)}")
        for c, cell in enumerate(cells):
            data[r, c] = _parse_real(cell, r + 2, c + 1, header[c])
    return header, data


# --------------------------------------------------------------------------
# model files

FORMAT_VERSION = 1


def _dump(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def encode_arrays(arrays: dict[str, np.ndarray]) -> dict:
    return {k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]} for k, v in arrays.items()}


def decode_arrays(doc: dict, where: str) -> dict[str, np.ndarray]:
    out = {}
    for name, entry in doc.items():
        try:
            shape = tuple(int(s) for s in entry["shape"])
            data = np.array(entry["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{where}.{name}: malformed array ({exc})") from exc
        if data.ndim != 1 or data.size != int(np.prod(shape)):
            raise ModelFormatError(f"{where}.{name}: {data.size} values do not fill shape {shape}")
        out[name] = data.reshape(shape)
    return out


def model_document(params, normalization, seed: int | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "seed": seed,
        "parameters": encode_arrays(params.arrays),
        "normalization": normalization.to_dict() if normalization is not None else None,
    }


def save_model(params, normalization, path, seed: int | None = None, extra: dict | None = None) -> None:
    doc = model_document(params, normalization, seed)
    if extra:
        doc.update(extra)
    _dump(doc, path)


def parse_model_document(doc: dict):
    from .model import ModelConfig, ModelParameters
    from .trainer import NormalizationSpec

    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"format_version: expected {FORMAT_VERSION}, got {doc.get('format_version')!r}")
    for key in ("config", "parameters"):
        if key not in doc:
            raise ModelFormatError(f"{key}: missing")
    try:
        config = ModelConfig.from_dict(doc["config"])
    except (TypeError, KeyError, ValueError) as exc:
        raise ModelFormatError(f"config: {exc}") from exc
    arrays = decode_arrays(doc["parameters"], "parameters")
    params = ModelParameters.from_arrays(config, arrays)
    norm = doc.get("normalization")
    normalization = None if norm is None else NormalizationSpec.from_dict(norm, config)
    return params, normalization


def load_model(path):
    """Return ``(params, normalization, document)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    params, normalization = parse_model_document(doc)
    return params, normalization, doc

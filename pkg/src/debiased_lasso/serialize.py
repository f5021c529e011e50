"""Report and dataset (de)serialization.

Floats are written with 17 significant digits so every value survives a
write/read cycle bit for bit; non-finite values become ``null`` in JSON and
an empty cell in CSV.  Field order is fixed, so equal reports give equal bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .errors import DimensionError
from .inference import InferenceReport

PathLike = Union[str, Path]

COORD_FIELDS = ("index", "name", "estimate", "se", "ci_lower", "ci_upper", "p_value", "p_adj",
                "reject", "reject_fwer")
_FLOAT_FIELDS = ("estimate", "se", "ci_lower", "ci_upper", "p_value", "p_adj")


class ReportFormatError(ValueError):
    """Malformed report file."""


class DataFormatError(ValueError):
    """Malformed dataset file."""


def format_float(x: float) -> str:
    x = float(x)
    return format(x, ".17g") if math.isfinite(x) else ""


def _json_float(x: float) -> str:
    s = format_float(x)
    return s if s else "null"


def _coord_rows(report: InferenceReport):
    names = report.coord_names()
    for i in range(report.p):
        yield {"index": i, "name": names[i],
               **{f: float(getattr(report, f)[i]) for f in _FLOAT_FIELDS},
               "reject": bool(report.reject[i]), "reject_fwer": bool(report.reject_fwer[i])}


def report_to_json(report: InferenceReport) -> str:
    # assembled by hand: json.dumps uses repr, which we want pinned to 17 digits
    parts = [
        "{",
        f'  "alpha": {_json_float(report.alpha)},',
        f'  "method": {json.dumps(report.method)},',
        f'  "sigma_hat": {_json_float(report.sigma_hat)},',
        '  "coords": [',
    ]
    rows = []
    for row in _coord_rows(report):
        items = [f'"index": {row["index"]}', f'"name": {json.dumps(row["name"])}']
        items += [f'"{f}": {_json_float(row[f])}' for f in _FLOAT_FIELDS]
        items += [f'"reject": {"true" if row["reject"] else "false"}',
                  f'"reject_fwer": {"true" if row["reject_fwer"] else "false"}']
        rows.append("    {" + ", ".join(items) + "}")
    parts.append(",\n".join(rows))
    parts += ["  ]", "}"]
    return "\n".join(parts) + "\n"


def report_to_csv(report: InferenceReport) -> str:
    """One row per coordinate; ``alpha``, ``method`` and ``sigma_hat`` are
    repeated on every row so the file is self-contained."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("alpha", "method", "sigma_hat") + COORD_FIELDS)
    head = (format_float(report.alpha), report.method, format_float(report.sigma_hat))
    for row in _coord_rows(report):
        w.writerow(head + (row["index"], row["name"]) +
                   tuple(format_float(row[f]) for f in _FLOAT_FIELDS) +
                   (str(row["reject"]).lower(), str(row["reject_fwer"]).lower()))
    return out.getvalue()


def write_report(report: InferenceReport, path: PathLike, fmt: str = "json") -> None:
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _num(v, what):
    if v is None or v == "":
        return float("nan")
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ReportFormatError(f"{what}: expected a number, got {v!r}")
    try:
        return float(v)
    except ValueError:
        raise ReportFormatError(f"{what}: expected a number, got {v!r}") from None


def _flag(v, what):
    if isinstance(v, bool):
        return v
    if v in ("true", "false"):
        return v == "true"
    raise ReportFormatError(f"{what}: expected true/false, got {v!r}")


def _assemble(alpha, method, sigma_hat, coords) -> InferenceReport:
    if not coords:
        raise ReportFormatError("report has no coordinates")
    p = len(coords)
    for k, c in enumerate(coords):
        if c["index"] != k:
            raise ReportFormatError(f"coordinate {k} has index {c['index']}")
    arr = {f: np.array([c[f] for c in coords], dtype=float) for f in _FLOAT_FIELDS}
    return InferenceReport(
        alpha, method, sigma_hat, arr["estimate"], arr["se"], arr["ci_lower"], arr["ci_upper"],
        arr["p_value"], arr["p_adj"],
        np.array([c["reject"] for c in coords], dtype=bool),
        np.array([c["reject_fwer"] for c in coords], dtype=bool),
        tuple(c["name"] for c in coords), np.zeros(p, dtype=bool))


def _parse_coord(raw, k) -> dict:
    missing = [f for f in ("index",) + _FLOAT_FIELDS + ("reject", "reject_fwer") if f not in raw]
    if missing:
        raise ReportFormatError(f"coords[{k}]: missing field(s) {missing}")
    idx = raw["index"]
    try:
        if isinstance(idx, (bool, float)):
            raise ValueError
        idx = int(idx)
    except (TypeError, ValueError):
        raise ReportFormatError(f"coords[{k}]: bad index {idx!r}") from None
    c = {"index": idx, "name": str(raw.get("name") or f"x{idx}")}
    for f in _FLOAT_FIELDS:
        c[f] = _num(raw[f], f"coords[{k}].{f}")
    c["reject"] = _flag(raw["reject"], f"coords[{k}].reject")
    c["reject_fwer"] = _flag(raw["reject_fwer"], f"coords[{k}].reject_fwer")
    return c


def report_from_json(text: str) -> InferenceReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("coords"), list):
        raise ReportFormatError("expected an object with a 'coords' list")
    try:
        alpha = _num(doc["alpha"], "alpha")
        sigma_hat = _num(doc["sigma_hat"], "sigma_hat")
        method = str(doc["method"])
    except KeyError as exc:
        raise ReportFormatError(f"missing field {exc}") from None
    coords = [_parse_coord(c if isinstance(c, dict) else {}, k)
              for k, c in enumerate(doc["coords"])]
    return _assemble(alpha, method, sigma_hat, coords)


def report_from_csv(text: str) -> InferenceReport:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ReportFormatError("empty report")
    first = rows[0]
    try:
        alpha, method, sigma_hat = _num(first["alpha"], "alpha"), first["method"], \
            _num(first["sigma_hat"], "sigma_hat")
    except KeyError as exc:
        raise ReportFormatError(f"missing column {exc}") from None
    return _assemble(alpha, method, sigma_hat, [_parse_coord(r, k) for k, r in enumerate(rows)])


def read_report(path: PathLike) -> InferenceReport:
    """Read a report written by :func:`write_report`; the format is sniffed."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return report_from_json(text)
    return report_from_csv(text)


# -- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    names: tuple

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_numeric_csv(path: PathLike):
    """Read a comma-separated numeric table with an optional header row.

    The first row is a header if any of its cells is not a number.

    Returns
    -------
    header : list of str or None
    data : ndarray, shape (rows, cols)
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: no data")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: header but no data rows")
    width = len(header) if header is not None else len(rows[0])
    data = np.empty((len(rows), width))
    for k, r in enumerate(rows):
        line = k + 1 + (header is not None)
        if len(r) != width:
            raise DataFormatError(f"{path}, line {line}: {len(r)} fields, expected {width}")
        for j, cell in enumerate(r):
            try:
                data[k, j] = float(cell)
            except ValueError:
                raise DataFormatError(f"{path}, line {line}: non-numeric cell {cell!r}") from None
    if not np.all(np.isfinite(data)):
        raise DataFormatError(f"{path}: non-finite values")
    return header, data


def load_dataset(x_path: PathLike, y_path: Optional[PathLike] = None,
                 y_col: Optional[str] = None) -> Dataset:
    """Load a design and response.

    The response is either the column ``y_col`` of the X file (which then
    needs a header) or the single column of a separate file ``y_path``.
    """
    if (y_path is None) == (y_col is None):
        raise ValueError("give exactly one of y_path and y_col")
    header, data = read_numeric_csv(x_path)
    if y_col is not None:
        if header is None:
            raise DataFormatError(f"{x_path}: --y-col needs a header row")
        if header.count(y_col) != 1:
            raise DataFormatError(f"{x_path}: response column {y_col!r} "
                                  f"{'not found' if y_col not in header else 'is ambiguous'}")
        j = header.index(y_col)
        Y = data[:, j].copy()
        X = np.delete(data, j, axis=1)
        names = tuple(h for k, h in enumerate(header) if k != j)
    else:
        _, ydata = read_numeric_csv(y_path)
        if ydata.shape[1] != 1:
            raise DataFormatError(f"{y_path}: expected one column, found {ydata.shape[1]}")
        Y = ydata[:, 0]
        X = data
        names = tuple(header) if header is not None else tuple(f"x{i}" for i in range(X.shape[1]))
        if Y.shape[0] != X.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if X.shape[1] == 0:
        raise DataFormatError(f"{x_path}: no covariate columns")
    return Dataset(X, Y, names)


def write_matrix_csv(M: np.ndarray, path: PathLike) -> None:
    """Row-major CSV dump, 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(M):
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def write_dataset_csv(X: np.ndarray, Y: np.ndarray, path: PathLike,
                      names: Optional[List[str]] = None, y_name: str = "y") -> None:
    """Write ``X`` with a header row and the response as the last column."""
    names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names + [y_name]) + "\n")
        for xi, yi in zip(X, Y):
            fh.write(",".join(format(float(v), ".17g") for v in (*xi, yi)) + "\n")

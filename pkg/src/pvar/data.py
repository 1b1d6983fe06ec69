"""CSV ingestion and preprocessing for seasonal multivariate series."""

from __future__ import annotations

import csv
import enum
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimate import seasonal_means
from .exceptions import DimensionMismatch, NonNumeric, ParseError, TooShort
from .model import SeriesData


class Transform(str, enum.Enum):
    NONE = "none"
    LOG = "log"
    LOG_RETURN = "log_return"


@dataclass
class DatasetConfig:
    """Where the data live and how to preprocess them.

    ``columns=None`` selects every column. ``truncate="front"`` drops the
    oldest observations to reach whole years; "back" drops the newest.
    """

    path: str
    season_length: int
    columns: list | None = None
    transform: Transform = Transform.NONE
    demean_seasonal: bool = True
    drop_partial_years: bool = True
    truncate: str = "front"

    def __post_init__(self):
        self.transform = Transform(self.transform)
        if self.season_length < 1:
            raise ValueError("season_length must be at least 1")
        if self.truncate not in ("front", "back"):
            raise ValueError("truncate must be 'front' or 'back'")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        data_path = doc.get("path")
        if data_path and not os.path.isabs(data_path):
            doc["path"] = os.path.join(os.path.dirname(os.path.abspath(path)), data_path)
        return cls(**doc)

    def to_dict(self):
        out = asdict(self)
        out["transform"] = self.transform.value
        return out


@dataclass
class PreprocessInfo:
    columns: list
    n_raw: int
    n_transformed: int
    n_dropped: int
    transform: str
    mu: np.ndarray
    trail: list = field(default_factory=list)

    def to_dict(self):
        return {"columns": self.columns, "n_raw": self.n_raw, "n_transformed": self.n_transformed,
                "n_dropped": self.n_dropped, "transform": self.transform,
                "mu": self.mu.tolist(), "trail": self.trail}


def read_csv(path, columns=None):
    """Read selected numeric columns; returns (names, n x k array)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "missing header row") from None
        except csv.Error as exc:
            raise ParseError(reader.line_num, str(exc)) from None
        header = [h.strip() for h in header]
        names = header if columns is None else list(columns)
        missing = [c for c in names if c not in header]
        if missing:
            raise ParseError(1, f"unknown columns {missing}")
        idx = [header.index(c) for c in names]
        rows = []
        try:
            for row in reader:
                line = reader.line_num
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != len(header):
                    raise ParseError(line, f"expected {len(header)} fields, got {len(row)}")
                vals = []
                for name, i in zip(names, idx):
                    try:
                        vals.append(float(row[i]))
                    except ValueError:
                        raise NonNumeric(name, line) from None
                rows.append(vals)
        except csv.Error as exc:
            raise ParseError(reader.line_num, str(exc)) from None
    return names, np.array(rows, dtype=float).reshape(len(rows), len(names))


def apply_transform(values, transform):
    """Transform an n x d array; log returns are ``100 ln(I_t / I_{t-1})``."""
    transform = Transform(transform)
    if transform is Transform.NONE:
        return values
    if np.any(values <= 0):
        raise ValueError(f"{transform.value} transform needs positive data")
    if transform is Transform.LOG:
        return np.log(values)
    return 100.0 * np.diff(np.log(values), axis=0)


def ingest(cfg):
    """Load, transform, align to whole years and optionally demean."""
    names, raw = read_csv(cfg.path, cfg.columns)
    s = cfg.season_length
    trail = []
    values = apply_transform(raw, cfg.transform)
    if cfg.transform is not Transform.NONE:
        trail.append(cfg.transform.value)
    extra = values.shape[0] % s
    if extra:
        if not cfg.drop_partial_years:
            raise DimensionMismatch(f"{values.shape[0]} observations are not whole years of {s}")
        values = values[extra:] if cfg.truncate == "front" else values[:-extra]
        trail.append(f"dropped {extra} observations at the {cfg.truncate}")
    if values.shape[0] < s:
        raise TooShort(f"fewer than one whole year of {s} observations")
    series = SeriesData(values.T.copy(), s)
    mu = np.zeros((s, series.d))
    if cfg.demean_seasonal:
        mu = seasonal_means(series)
        series = SeriesData(series.values - np.tile(mu.T, series.N), s)
        trail.append("seasonal means removed")
    info = PreprocessInfo(names, raw.shape[0], values.shape[0] + extra, extra, cfg.transform.value, mu, trail)
    return series, info


def format_number(x):
    return format(float(x), ".17g")


def write_series_csv(fh, values, names=None):
    """Write an n x d array with a header; 17 significant digits."""
    values = np.atleast_2d(values)
    names = names or [f"y{i + 1}" for i in range(values.shape[1])]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(names)
    for row in values:
        w.writerow([format_number(x) for x in row])


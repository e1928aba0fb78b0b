"""Per-slice area records, canonical preprocessing and dataset ingestion.

Areas are in mm^2, listed from one end of the stack to the other. The model
works on the *canonical* form of a series: exactly one zero at each end and
strictly positive areas in between.
"""
import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    InteriorZeroError,
    ParseError,
    SchemaError,
    TooFewSlicesError,
)
from .formats import FORMAT_VERSION, check_version, csv_text, json_text, split_version_comment

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 10.0  # mm^2
MIN_N = 4

CSV_HEADER = ["id", "slice_index", "pred_area_mm2", "truth_area_mm2", "slice_spacing_mm"]


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RawHeart:
    id: str
    slice_areas_pred: np.ndarray
    slice_areas_truth: Optional[np.ndarray] = None
    slice_spacing: float = 10.0
    pixel_area: float = 1.0

    def __post_init__(self):
        pred = _frozen(self.slice_areas_pred)
        if pred.ndim != 1 or pred.size == 0:
            raise SchemaError(f"{self.id}: prediction list must be non-empty")
        if not np.all(np.isfinite(pred)) or np.any(pred < 0):
            raise SchemaError(f"{self.id}: predicted areas must be finite and >= 0")
        object.__setattr__(self, "slice_areas_pred", pred)
        if self.slice_areas_truth is not None:
            truth = _frozen(self.slice_areas_truth)
            if truth.shape != pred.shape:
                raise SchemaError(f"{self.id}: truth length {truth.size} != prediction length {pred.size}")
            if not np.all(np.isfinite(truth)) or np.any(truth < 0):
                raise SchemaError(f"{self.id}: truth areas must be finite and >= 0")
            object.__setattr__(self, "slice_areas_truth", truth)
        for name in ("slice_spacing", "pixel_area"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise SchemaError(f"{self.id}: {name} must be a positive finite number")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class SliceSeries:
    """Canonical series ``p_0..p_N`` with ``p_0 = p_N = 0`` and a positive interior.

    ``g`` is the optional ground truth on the same slices.
    """

    id: str
    p: np.ndarray
    g: Optional[np.ndarray] = None
    slice_spacing: float = 10.0

    def __post_init__(self):
        p = _frozen(self.p)
        if p.ndim != 1:
            raise SchemaError(f"{self.id}: p must be one-dimensional")
        if p.size - 1 < MIN_N:
            raise TooFewSlicesError(f"{self.id}: N = {p.size - 1} < {MIN_N}")
        if p[0] != 0.0 or p[-1] != 0.0:
            raise SchemaError(f"{self.id}: p must start and end with an exact zero")
        if not np.all(p[1:-1] > 0):
            raise InteriorZeroError(f"{self.id}: interior predictions must be > 0")
        object.__setattr__(self, "p", p)
        if self.g is not None:
            g = _frozen(self.g)
            if g.shape != p.shape:
                raise SchemaError(f"{self.id}: g length {g.size} != p length {p.size}")
            if not np.all(np.isfinite(g)) or np.any(g < 0):
                raise SchemaError(f"{self.id}: truth areas must be finite and >= 0")
            if not is_connected(g):
                raise SchemaError(f"{self.id}: ground truth is not a connected volume")
            object.__setattr__(self, "g", g)
        spacing = float(self.slice_spacing)
        if not (math.isfinite(spacing) and spacing > 0):
            raise SchemaError(f"{self.id}: slice_spacing must be positive")
        object.__setattr__(self, "slice_spacing", spacing)

    @property
    def N(self):
        return self.p.size - 1

    @property
    def has_truth(self):
        return self.g is not None

    def point_volume_ml(self):
        """Volume of the point prediction, in ml."""
        return self.slice_spacing * float(np.sum(self.p)) / 1000.0

    def truth_volume_ml(self):
        return self.slice_spacing * float(np.sum(self.g)) / 1000.0


def is_connected(areas):
    """True if the nonzero entries of ``areas`` form one contiguous run."""
    nz = np.flatnonzero(np.asarray(areas) > 0)
    if nz.size == 0:
        return True
    return nz[-1] - nz[0] + 1 == nz.size


def bracket(areas, epsilon=DEFAULT_EPSILON, truth=None):
    """Threshold at ``epsilon`` and collapse the zero runs at both ends to one zero.

    Returns ``(p, g)`` where ``g`` is ``truth`` realigned to ``p`` (or None).
    Raises ``InteriorZeroError`` if a zero separates nonzero areas.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    a = np.asarray(areas, dtype=float)
    a = np.where(a < epsilon, 0.0, a)
    nz = np.flatnonzero(a > 0)
    if nz.size == 0:
        raise TooFewSlicesError("no slice above the zero threshold")
    lo, hi = nz[0], nz[-1]
    if np.any(a[lo:hi + 1] == 0):
        raise InteriorZeroError("a zero prediction separates nonzero predictions")
    p = np.concatenate(([0.0], a[lo:hi + 1], [0.0]))
    g = None
    if truth is not None:
        t = np.asarray(truth, dtype=float)
        # Leading/trailing zero of p maps to slice lo-1 / hi+1 when it exists.
        first = t[lo - 1] if lo >= 1 else 0.0
        last = t[hi + 1] if hi + 1 < t.size else 0.0
        dropped = np.concatenate((t[:max(lo - 1, 0)], t[hi + 2:]))
        if np.any(dropped > 0):
            log.warning("truncated slices carry nonzero ground truth (%.1f mm^2 dropped)", dropped.sum())
        g = np.concatenate(([first], t[lo:hi + 1], [last]))
    return p, g


def preprocess(raw, epsilon=DEFAULT_EPSILON):
    """Turn a ``RawHeart`` (or an existing ``SliceSeries``) into a canonical ``SliceSeries``."""
    if isinstance(raw, SliceSeries):
        raw = RawHeart(raw.id, raw.p, raw.g, raw.slice_spacing)
    try:
        p, g = bracket(raw.slice_areas_pred, epsilon, raw.slice_areas_truth)
    except (InteriorZeroError, TooFewSlicesError) as exc:
        raise type(exc)(f"{raw.id}: {exc}") from None
    return SliceSeries(raw.id, p, g, raw.slice_spacing)


def reverse(series):
    g = None if series.g is None else series.g[::-1]
    return SliceSeries(series.id, series.p[::-1], g, series.slice_spacing)


class PiecewiseLinear:
    """Linear interpolant through ``(t_i, y_i)``; zero outside the node range.

    ``slope(t)`` is the right-hand derivative, so a node takes the slope of the
    segment that starts there.
    """

    def __init__(self, t, y):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.t.size < 2 or self.t.shape != self.y.shape or np.any(np.diff(self.t) <= 0):
            raise ValueError("need >= 2 strictly increasing nodes")

    @classmethod
    def constant(cls, value, t_start, t_end):
        return cls([t_start, t_end], [value, value])

    @property
    def t_min(self):
        return float(self.t[0])

    @property
    def t_max(self):
        return float(self.t[-1])

    def __call__(self, t):
        return np.interp(t, self.t, self.y, left=0.0, right=0.0)

    def segment(self, t):
        """Index of the segment ``[t_i, t_{i+1})`` holding ``t`` (last segment for t_max)."""
        idx = np.searchsorted(self.t, t, side="right") - 1
        return np.clip(idx, 0, self.t.size - 2)

    def slope(self, t):
        i = self.segment(t)
        return (self.y[i + 1] - self.y[i]) / (self.t[i + 1] - self.t[i])

    def breakpoints(self, t_start, t_end):
        """Nodes strictly inside ``(t_start, t_end)``."""
        return self.t[(self.t > t_start) & (self.t < t_end)]

    def integral(self):
        return float(np.sum(0.5 * (self.y[1:] + self.y[:-1]) * np.diff(self.t)))


def interpolate(series):
    """Interpolant of ``p`` on ``[-1, N+1]`` with ``p_{-1} = p_{N+1} = 0`` appended."""
    p = np.asarray(series.p if isinstance(series, SliceSeries) else series, dtype=float)
    n = p.size - 1
    return PiecewiseLinear(np.arange(-1, n + 2, dtype=float), np.concatenate(([0.0], p, [0.0])))


# ---------------------------------------------------------------- file IO


def _parse_float(text, where, allow_empty=False):
    text = text.strip()
    if text == "":
        if allow_empty:
            return None
        raise SchemaError(f"{where}: missing value")
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise SchemaError(f"{where}: non-finite value {text!r}")
    return value


def _build(hid, pred, truth, spacing, where, pixel_area=1.0):
    try:
        return RawHeart(hid, pred, truth, spacing, pixel_area)
    except SchemaError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _load_csv(text, source):
    version, body = split_version_comment(text)
    check_version(version, source)
    if not body.strip():
        return []
    reader = csv.DictReader(io.StringIO(body))
    fields = reader.fieldnames or []
    missing = [c for c in CSV_HEADER if c not in fields]
    if missing:
        raise SchemaError(f"{source}: missing column(s) {', '.join(missing)}")
    has_pixel = "pixel_area_mm2" in fields
    groups = {}
    order = []
    line_offset = 2 if version is None else 3
    for lineno, row in enumerate(reader, start=line_offset):
        where = f"{source}:{lineno}"
        if None in row or any(v is None for v in row.values()):
            raise ParseError(f"{where}: wrong number of fields")
        hid = row["id"].strip()
        if not hid:
            raise SchemaError(f"{where}: empty id")
        try:
            idx = int(row["slice_index"])
        except ValueError:
            raise ParseError(f"{where}: slice_index {row['slice_index']!r} is not an integer") from None
        pred = _parse_float(row["pred_area_mm2"], where)
        truth = _parse_float(row["truth_area_mm2"], where, allow_empty=True)
        spacing = _parse_float(row["slice_spacing_mm"], where)
        pixel = _parse_float(row["pixel_area_mm2"], where, allow_empty=True) if has_pixel else None
        if hid not in groups:
            groups[hid] = []
            order.append(hid)
        elif order[-1] != hid:
            raise SchemaError(f"{where}: rows for {hid!r} are not contiguous")
        groups[hid].append((idx, pred, truth, spacing, pixel, where))

    hearts = []
    for hid in order:
        rows = groups[hid]
        idxs = [r[0] for r in rows]
        where = rows[0][5]
        if idxs != sorted(idxs) or len(set(idxs)) != len(idxs):
            raise SchemaError(f"{where}: slice_index for {hid!r} must be strictly increasing")
        spacings = {r[3] for r in rows}
        if len(spacings) != 1:
            raise SchemaError(f"{where}: {hid!r} has inconsistent slice_spacing_mm")
        truths = [r[2] for r in rows]
        if all(t is None for t in truths):
            truth = None
        elif any(t is None for t in truths):
            raise SchemaError(f"{where}: {hid!r} has truth_area_mm2 on some slices only")
        else:
            truth = truths
        pixel = rows[0][4] if rows[0][4] is not None else 1.0
        hearts.append(_build(hid, [r[1] for r in rows], truth, spacings.pop(), where, pixel))
    return hearts


def _reject_constant(name):
    raise SchemaError(f"non-finite value {name} in JSON")


def _load_json(text, source):
    if not text.strip():
        return []
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}:{exc.lineno}: {exc.msg}") from None
    if isinstance(doc, dict):
        check_version(doc.get("format_version"), source)
        doc = doc.get("hearts")
    if not isinstance(doc, list):
        raise SchemaError(f"{source}: expected a JSON array of heart records")
    hearts = []
    for i, rec in enumerate(doc):
        where = f"{source}[{i}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: record must be an object")
        for key in ("id", "slice_spacing_mm", "pred_areas_mm2"):
            if key not in rec:
                raise SchemaError(f"{where}: missing field {key!r}")
        pred = rec["pred_areas_mm2"]
        truth = rec.get("truth_areas_mm2")
        if not isinstance(pred, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pred):
            raise SchemaError(f"{where}: pred_areas_mm2 must be a list of numbers")
        if truth is not None and (
            not isinstance(truth, list)
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in truth)
        ):
            raise SchemaError(f"{where}: truth_areas_mm2 must be a list of numbers or null")
        spacing = rec["slice_spacing_mm"]
        if not isinstance(spacing, (int, float)) or isinstance(spacing, bool):
            raise SchemaError(f"{where}: slice_spacing_mm must be a number")
        hearts.append(_build(str(rec["id"]), pred, truth, spacing, where, rec.get("pixel_area_mm2", 1.0)))
    return hearts


def load_dataset(path, format=None):
    """Read heart records from a CSV or JSON file; ``format`` defaults to the file suffix."""
    path = str(path)
    if format is None:
        format = "json" if path.lower().endswith(".json") else "csv"
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc.reason})") from None
    if format == "csv":
        return _load_csv(text, path)
    if format == "json":
        return _load_json(text, path)
    raise ValueError(f"unknown format {format!r}")


def _as_records(items):
    """Yield ``(id, pred, truth, spacing)`` from RawHeart or SliceSeries objects."""
    for it in items:
        if isinstance(it, SliceSeries):
            yield it.id, it.p, it.g, it.slice_spacing
        else:
            yield it.id, it.slice_areas_pred, it.slice_areas_truth, it.slice_spacing


def dataset_csv(items):
    rows = []
    for hid, pred, truth, spacing in _as_records(items):
        for i, a in enumerate(pred):
            t = "" if truth is None else float(truth[i])
            rows.append([hid, i, float(a), t, float(spacing)])
    return csv_text(CSV_HEADER, rows)


def dataset_json(items):
    hearts = [
        {
            "id": hid,
            "slice_spacing_mm": float(spacing),
            "pred_areas_mm2": [float(a) for a in pred],
            "truth_areas_mm2": None if truth is None else [float(a) for a in truth],
        }
        for hid, pred, truth, spacing in _as_records(items)
    ]
    return json_text({"format_version": FORMAT_VERSION, "hearts": hearts})


def save_dataset(items, path, format=None):
    path = str(path)
    if format is None:
        format = "json" if path.lower().endswith(".json") else "csv"
    text = dataset_json(items) if format == "json" else dataset_csv(items)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)

"""Read crime CSV exports, drop unusable rows and keep events inside the bounding box."""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Iterator, TextIO

import numpy as np

from .geo import BBox

log = logging.getLogger(__name__)

RECORD_DTYPE = np.dtype([("lat", "<f8"), ("lon", "<f8"), ("type_id", "<u2"),
                         ("hour", "u1"), ("month", "u1")])

CHICAGO_COLUMNS = {
    "date_text": "Date",
    "primary_type": "Primary Type",
    "description": "Description",
    "latitude": "Latitude",
    "longitude": "Longitude",
    "arrest": "Arrest",
    "beat": "Beat",
    "district": "District",
    "ward": "Ward",
    "fbi_code": "FBI Code",
}
REQUIRED_FIELDS = ("date_text", "primary_type", "latitude", "longitude")


@dataclass(frozen=True)
class Schema:
    """Logical field -> CSV header name. Optional fields may map to None."""

    columns: dict = field(default_factory=lambda: dict(CHICAGO_COLUMNS))
    timestamp_formats: tuple = ("%m/%d/%Y %I:%M:%S %p", "%m/%d/%Y %H:%M:%S")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    date_text: str
    primary_type: str
    description: str = ""
    latitude: float | None = None
    longitude: float | None = None
    arrest: bool | None = None
    beat: str | None = None
    district: str | None = None
    ward: str | None = None
    fbi_code: str | None = None


@dataclass(frozen=True)
class CleanRecord:
    latitude: float
    longitude: float
    primary_type: str
    hour: int
    month: int


@dataclass
class IngestReport:
    total_rows: int = 0
    rows_after_null_removal: int = 0
    rows_after_bbox: int = 0
    reject_reasons: dict = field(default_factory=dict)

    def merge(self, other: "IngestReport") -> "IngestReport":
        reasons = Counter(self.reject_reasons)
        reasons.update(other.reject_reasons)
        return IngestReport(self.total_rows + other.total_rows,
                            self.rows_after_null_removal + other.rows_after_null_removal,
                            self.rows_after_bbox + other.rows_after_bbox, dict(sorted(reasons.items())))

    def to_dict(self) -> dict:
        return {"total_rows": self.total_rows,
                "rows_after_null_removal": self.rows_after_null_removal,
                "rows_after_bbox": self.rows_after_bbox,
                "reject_reasons": dict(sorted(self.reject_reasons.items()))}


def _opt_float(text: str) -> float | None:
    text = text.strip()
    return float(text) if text else None


def _opt_bool(text: str) -> bool | None:
    t = text.strip().lower()
    if t in ("true", "t", "1", "yes", "y"):
        return True
    if t in ("false", "f", "0", "no", "n"):
        return False
    if not t:
        return None
    raise ValueError(f"not a boolean: {text!r}")


def _opt_str(text: str) -> str | None:
    return text if text != "" else None


_CONVERTERS = {"latitude": _opt_float, "longitude": _opt_float, "arrest": _opt_bool}


class ParseResult:
    """Iterator over RawRecords that counts rows it had to skip."""

    def __init__(self, source: TextIO, schema: Schema):
        self.errors = 0
        reader = csv.reader(source)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("CSV source is empty (no header row)") from None
        if header and header[0].startswith("﻿"):
            header[0] = header[0][1:]
        positions = {}
        for logical, column in schema.columns.items():
            if column is None:
                continue
            if column not in header:
                raise SchemaError(f"column {column!r} (for {logical}) missing from header")
            positions[logical] = header.index(column)
        missing = [f for f in REQUIRED_FIELDS if f not in positions]
        if missing:
            raise SchemaError(f"schema does not map required fields {missing}")
        self._width = len(header)
        self._positions = positions
        self._reader = reader

    def __iter__(self) -> Iterator[RawRecord]:
        for row in self._reader:
            if len(row) != self._width:
                self.errors += 1
                continue
            try:
                kw = {}
                for name, pos in self._positions.items():
                    conv = _CONVERTERS.get(name)
                    if conv is not None:
                        kw[name] = conv(row[pos])
                    elif name in ("date_text", "primary_type", "description"):
                        kw[name] = row[pos]
                    else:
                        kw[name] = _opt_str(row[pos])
                yield RawRecord(**kw)
            except ValueError:
                self.errors += 1


def parse_records(source: TextIO, schema: Schema | None = None) -> tuple[list[RawRecord], int]:
    parsed = ParseResult(source, schema or Schema())
    records = list(parsed)
    return records, parsed.errors


def parse_timestamp(text: str, formats: Iterable[str]) -> datetime:
    text = text.strip()
    for fmt in formats:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"unrecognised timestamp {text!r}")


def clean_one(rec: RawRecord, formats) -> tuple[CleanRecord | None, str | None]:
    lat, lon = rec.latitude, rec.longitude
    if lat is None or lon is None:
        return None, "missing_coords"
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None, "non_finite_coords"
    if abs(lat) > 90 or abs(lon) > 180:
        return None, "implausible_coords"
    ptype = rec.primary_type.strip()
    if not ptype:
        return None, "missing_type"
    try:
        ts = parse_timestamp(rec.date_text, formats)
    except ValueError:
        return None, "bad_timestamp"
    return CleanRecord(lat, lon, ptype, ts.hour, ts.month), None


def iter_clean(records: Iterable[RawRecord], report: IngestReport,
               schema: Schema | None = None) -> Iterator[CleanRecord]:
    """Streaming form of :func:`clean`; updates ``report`` as it goes."""
    formats = (schema or Schema()).timestamp_formats
    reasons = Counter(report.reject_reasons)
    for rec in records:
        report.total_rows += 1
        out, why = clean_one(rec, formats)
        if out is None:
            reasons[why] += 1
            continue
        report.rows_after_null_removal += 1
        report.rows_after_bbox += 1
        yield out
    report.reject_reasons = dict(sorted(reasons.items()))


def clean(records: Iterable[RawRecord], schema: Schema | None = None) -> tuple[list[CleanRecord], IngestReport]:
    report = IngestReport()
    out = list(iter_clean(records, report, schema))
    return out, report


def bbox_filter(records: Iterable[CleanRecord], box: BBox = BBox()) -> list[CleanRecord]:
    """Keep records inside ``box``; every edge is inclusive."""
    return [r for r in records if box.contains(r.latitude, r.longitude)]


@dataclass
class IngestResult:
    records: np.ndarray  # RECORD_DTYPE
    type_names: list[str]
    report: IngestReport
    parse_errors: int


def ingest_csv(source: TextIO, schema: Schema | None = None, box: BBox = BBox(),
               chunk_rows: int = 200_000) -> IngestResult:
    """Parse, clean and bbox-filter a CSV into the compact columnar layout.

    Crime types are interned in order of first appearance, then renumbered
    alphabetically so ids do not depend on row order. Malformed rows count
    toward ``total_rows`` under the ``malformed_row`` reason.
    """
    schema = schema or Schema()
    parsed = ParseResult(source, schema)
    report = IngestReport()
    interned: dict[str, int] = {}
    chunks = []
    buf = np.empty(chunk_rows, dtype=RECORD_DTYPE)
    k = 0
    for rec in iter_clean(parsed, report, schema):
        if not box.contains(rec.latitude, rec.longitude):
            report.rows_after_bbox -= 1
            continue
        tid = interned.setdefault(rec.primary_type, len(interned))
        if tid > np.iinfo(np.uint16).max:
            raise ValueError("more than 65535 distinct crime types")
        buf[k] = (rec.latitude, rec.longitude, tid, rec.hour, rec.month)
        k += 1
        if k == chunk_rows:
            chunks.append(buf)
            buf = np.empty(chunk_rows, dtype=RECORD_DTYPE)
            k = 0
    chunks.append(buf[:k])
    records = np.concatenate(chunks)

    if parsed.errors:
        reasons = Counter(report.reject_reasons)
        reasons["malformed_row"] += parsed.errors
        report.reject_reasons = dict(sorted(reasons.items()))
        report.total_rows += parsed.errors

    names = sorted(interned)
    remap = np.zeros(max(len(interned), 1), dtype=np.uint16)
    for name, old in interned.items():
        remap[old] = names.index(name)
    records["type_id"] = remap[records["type_id"]]
    log.info("ingested %d rows -> %d in bbox (%d parse errors)",
             report.total_rows, report.rows_after_bbox, parsed.errors)
    return IngestResult(records, names, report, parsed.errors)

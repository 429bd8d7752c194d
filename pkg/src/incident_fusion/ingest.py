"""Readers and writers for crowdsourced report feeds and official records.

Report feeds are JSON lines in the upstream alert layout. Note that the
``location`` object follows the feed convention ``x`` = longitude,
``y`` = latitude, which is the reverse of the (lat, lon) order used
everywhere else in this package.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import IO, Iterable

from .geo import GeoPoint, InvalidInput

REPORT_FIELDS = ("id", "type", "confidence", "reportRating", "reliability", "location", "pubMillis")
GROUND_TRUTH_HEADER = ["latitude", "longitude", "timestamp", "unit_segment_id"]


class FormatError(ValueError):
    """The input file as a whole does not follow the expected layout."""


@dataclass(frozen=True)
class Report:
    id: str
    type: str
    confidence: int
    report_rating: int
    reliability: int
    location: GeoPoint
    pub_millis: int

    def __post_init__(self):
        if not 1 <= self.reliability <= 10:
            raise InvalidInput(f"reliability {self.reliability} outside [1, 10]")
        if not 0 <= self.confidence <= 10:
            raise InvalidInput(f"confidence {self.confidence} outside [0, 10]")
        if not 1 <= self.report_rating <= 6:
            raise InvalidInput(f"reportRating {self.report_rating} outside [1, 6]")
        if self.pub_millis < 0:
            raise InvalidInput(f"pubMillis {self.pub_millis} is negative")


@dataclass(frozen=True)
class GroundTruthRecord:
    location: GeoPoint
    timestamp: int
    unit_segment_id: str

    def __post_init__(self):
        if self.timestamp < 0:
            raise InvalidInput(f"timestamp {self.timestamp} is negative")


@dataclass(frozen=True)
class LineError:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    errors: list[LineError] = field(default_factory=list)


def _text_lines(stream) -> list[str]:
    if isinstance(stream, (bytes, bytearray)):
        return stream.decode("utf-8").splitlines()
    if isinstance(stream, str):
        return stream.splitlines()
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.splitlines()


def _int_field(obj: dict, key: str) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise InvalidInput(f"field {key!r} must be an integer, got {v!r}")
    return v


def _report_from_obj(obj) -> Report:
    if not isinstance(obj, dict):
        raise InvalidInput("record is not an object")
    missing = [k for k in REPORT_FIELDS if k not in obj]
    if missing:
        raise InvalidInput(f"missing field {missing[0]!r}")
    loc = obj["location"]
    if not isinstance(loc, dict) or "x" not in loc or "y" not in loc:
        raise InvalidInput("field 'location' needs 'x' (lon) and 'y' (lat)")
    try:
        point = GeoPoint(lat=float(loc["y"]), lon=float(loc["x"]))
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"bad location: {exc}") from None
    return Report(
        id=str(obj["id"]),
        type=str(obj["type"]),
        confidence=_int_field(obj, "confidence"),
        report_rating=_int_field(obj, "reportRating"),
        reliability=_int_field(obj, "reliability"),
        location=point,
        pub_millis=_int_field(obj, "pubMillis"),
    )


def parse_reports(stream) -> ParseResult:
    """Parse a JSON-lines report feed.

    Every input line yields either a report or a :class:`LineError`;
    reports come back sorted by ``pub_millis`` (stable for ties).
    """
    result = ParseResult()
    for lineno, line in enumerate(_text_lines(stream), start=1):
        if not line.strip():
            result.errors.append(LineError(lineno, "blank line"))
            continue
        try:
            obj = json.loads(line)
            result.records.append(_report_from_obj(obj))
        except json.JSONDecodeError as exc:
            result.errors.append(LineError(lineno, f"invalid JSON: {exc.msg}"))
        except InvalidInput as exc:
            result.errors.append(LineError(lineno, str(exc)))
    result.records.sort(key=lambda r: r.pub_millis)
    return result


def report_to_obj(r: Report) -> dict:
    return {
        "id": r.id,
        "type": r.type,
        "confidence": r.confidence,
        "reportRating": r.report_rating,
        "reliability": r.reliability,
        "location": {"x": r.location.lon, "y": r.location.lat},
        "pubMillis": r.pub_millis,
    }


def write_reports(reports: Iterable[Report], out: IO[str]) -> None:
    for r in reports:
        out.write(json.dumps(report_to_obj(r), separators=(",", ":")))
        out.write("\n")


def dumps_reports(reports: Iterable[Report]) -> str:
    buf = io.StringIO()
    write_reports(reports, buf)
    return buf.getvalue()


def filter_accidents(reports: Iterable[Report]) -> list[Report]:
    return [r for r in reports if r.type == "ACCIDENT"]


def parse_ground_truth(stream) -> ParseResult:
    """Parse official incident records from CSV.

    Raises :class:`FormatError` when the header differs from
    ``latitude,longitude,timestamp,unit_segment_id``.
    """
    lines = _text_lines(stream)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("ground-truth file is empty (header required)") from None
    if [h.strip() for h in header] != GROUND_TRUTH_HEADER:
        raise FormatError(f"expected header {','.join(GROUND_TRUTH_HEADER)!r}, got {','.join(header)!r}")
    result = ParseResult()
    for row in reader:
        lineno = reader.line_num
        if not row:
            result.errors.append(LineError(lineno, "blank line"))
            continue
        if len(row) != 4:
            result.errors.append(LineError(lineno, f"expected 4 columns, got {len(row)}"))
            continue
        try:
            lat, lon = float(row[0]), float(row[1])
        except ValueError:
            result.errors.append(LineError(lineno, f"non-numeric coordinate {row[0]!r},{row[1]!r}"))
            continue
        try:
            ts = int(row[2])
            result.records.append(GroundTruthRecord(GeoPoint(lat, lon), ts, row[3]))
        except ValueError as exc:
            result.errors.append(LineError(lineno, str(exc)))
    result.records.sort(key=lambda g: g.timestamp)
    return result


def write_ground_truth(records: Iterable[GroundTruthRecord], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(GROUND_TRUTH_HEADER)
    for g in records:
        w.writerow([repr(g.location.lat), repr(g.location.lon), g.timestamp, g.unit_segment_id])


def read_reports_file(path) -> ParseResult:
    with open(path, "rb") as fh:
        return parse_reports(fh)


def read_ground_truth_file(path) -> ParseResult:
    with open(path, "rb") as fh:
        return parse_ground_truth(fh)

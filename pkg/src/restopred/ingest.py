"""Outage and weather CSV ingestion: parsing, cleaning rules, weather alignment.

Timestamps are stored as UTC epoch seconds. The source timezone is part of
the schema config and is applied once, at parse time, so every later stage
works on a single total order.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping
from zoneinfo import ZoneInfo

from .errors import IngestError

logger = logging.getLogger(__name__)

WEATHER_CONDITIONS = ("normal", "snowstorm", "lightning", "high_wind", "flood")

#: mins ceiling for grossly erroneous restoration times: 14 days
DEFAULT_CEILING_MIN = 20160.0

OUTAGE_FIELDS = (
    "start_time",
    "end_time",
    "customers_interrupted",
    "repair_time_min",
    "restoration_time_min",
    "cause_key",
    "equipment_cause_key",
    "location_id",
    "circuit_id",
)

#: column order of the cleaned-records CSV written by the ingest stage
CLEANED_COLUMNS = OUTAGE_FIELDS + (
    "weather_temp",
    "weather_precip",
    "weather_wind",
    "weather_condition",
)


@dataclass(frozen=True)
class RawOutageRow:
    """One outage row as parsed, before cleaning; any field may be None."""

    start_time: int | None = None
    end_time: int | None = None
    customers_interrupted: int | None = None
    repair_time_min: float | None = None
    restoration_time_min: float | None = None
    cause_key: int | None = None
    equipment_cause_key: int | None = None
    location_id: str | None = None
    circuit_id: str | None = None

    def missing_fields(self) -> list[str]:
        return [f for f in OUTAGE_FIELDS if getattr(self, f) is None]


@dataclass(frozen=True)
class WeatherRow:
    hour_start: int  # epoch seconds, truncated to the hour
    temp: float
    precip: float
    wind: float
    condition: str


@dataclass(frozen=True)
class OutageRecord:
    """A cleaned outage with aligned hourly weather. All fields present."""

    start_time: int
    end_time: int
    customers_interrupted: int
    repair_time_min: float
    restoration_time_min: float
    cause_key: int
    equipment_cause_key: int
    location_id: str
    circuit_id: str
    weather_temp: float
    weather_precip: float
    weather_wind: float
    weather_condition: str


@dataclass(frozen=True)
class Diagnostic:
    line: int  # 1-based file line (header is line 1)
    field: str
    message: str


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str  # "missing" | "logic" | "gross"


@dataclass
class ParseResult:
    rows: list[RawOutageRow]
    line_numbers: list[int]
    diagnostics: list[Diagnostic]


DEFAULT_SCHEMA: dict[str, str] = {f: f for f in OUTAGE_FIELDS}

_TS_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y/%m/%d %H:%M:%S")


def read_schema_config(path: str | Path) -> dict[str, str]:
    """Read a key=value schema mapping file (outage field -> CSV column).

    Recognized extra keys: ``timezone`` (IANA name, default UTC).
    Lines starting with ``#`` and blank lines are ignored.
    """
    mapping: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise IngestError(f"schema config: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def parse_timestamp(text: str, tz: timezone | ZoneInfo) -> int:
    """Parse a wall-clock timestamp in the given zone to UTC epoch seconds."""
    text = text.strip()
    dt = None
    for fmt in _TS_FORMATS:
        try:
            dt = datetime.strptime(text, fmt)
            break
        except ValueError:
            continue
    if dt is None:
        try:
            dt = datetime.fromisoformat(text)
        except ValueError:
            raise ValueError(f"unparseable timestamp {text!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=tz)
    return int(dt.timestamp())


def _parse_int(text: str, nonneg: bool = True) -> int:
    value = int(text)
    if nonneg and value < 0:
        raise ValueError(f"negative value {value}")
    return value


def _parse_float(text: str, nonneg: bool = True) -> float:
    value = float(text)
    if nonneg and value < 0:
        raise ValueError(f"negative value {value}")
    return value


def parse_outage_csv(
    path: str | Path, schema: Mapping[str, str] | None = None
) -> ParseResult:
    """Parse an outage CSV into RawOutageRow values plus line-numbered diagnostics.

    ``schema`` maps the canonical field names to the file's column names and
    may carry a ``timezone`` entry. Empty cells become None fields (cleaning
    drops them later); malformed cells skip the row with a diagnostic.
    Row order is preserved.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"outage file not found: {path}")
    schema = dict(schema or DEFAULT_SCHEMA)
    tz = _resolve_tz(schema.pop("timezone", "UTC"))

    rows: list[RawOutageRow] = []
    line_numbers: list[int] = []
    diagnostics: list[Diagnostic] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file, header row required")
        for field in OUTAGE_FIELDS:
            column = schema.get(field, field)
            if column not in reader.fieldnames:
                raise IngestError(f"{path}: header missing mapped column {column!r} for {field!r}")
        for lineno, record in enumerate(reader, start=2):
            parsed: dict[str, object] = {}
            bad: Diagnostic | None = None
            for field in OUTAGE_FIELDS:
                cell = (record.get(schema.get(field, field)) or "").strip()
                if cell == "":
                    parsed[field] = None
                    continue
                try:
                    if field in ("start_time", "end_time"):
                        parsed[field] = parse_timestamp(cell, tz)
                    elif field in ("customers_interrupted", "cause_key", "equipment_cause_key"):
                        parsed[field] = _parse_int(cell, nonneg=field == "customers_interrupted")
                    elif field in ("repair_time_min", "restoration_time_min"):
                        parsed[field] = _parse_float(cell)
                    else:
                        parsed[field] = cell
                except ValueError as exc:
                    bad = Diagnostic(lineno, field, str(exc))
                    break
            if bad is not None:
                diagnostics.append(bad)
                continue
            rows.append(RawOutageRow(**parsed))  # type: ignore[arg-type]
            line_numbers.append(lineno)
    return ParseResult(rows, line_numbers, diagnostics)


def _resolve_tz(name: str) -> timezone | ZoneInfo:
    if name.upper() == "UTC":
        return timezone.utc
    try:
        return ZoneInfo(name)
    except Exception as exc:
        raise IngestError(f"unknown timezone {name!r}") from exc


def parse_weather_csv(path: str | Path, tz_name: str = "UTC") -> list[WeatherRow]:
    """Parse the hourly weather CSV. Columns: hour_start, temp, precip, wind, condition."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"weather file not found: {path}")
    tz = _resolve_tz(tz_name)
    rows: list[WeatherRow] = []
    seen: set[int] = set()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"hour_start", "temp", "precip", "wind", "condition"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestError(f"{path}: weather header must contain {sorted(required)}")
        for lineno, record in enumerate(reader, start=2):
            try:
                hour = parse_timestamp(record["hour_start"], tz)
                hour -= hour % 3600
                condition = record["condition"].strip()
                if condition not in WEATHER_CONDITIONS:
                    raise ValueError(f"unknown condition {condition!r}")
                row = WeatherRow(
                    hour_start=hour,
                    temp=float(record["temp"]),
                    precip=_parse_float(record["precip"]),
                    wind=_parse_float(record["wind"]),
                    condition=condition,
                )
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
            if hour in seen:
                raise IngestError(f"{path}:{lineno}: duplicate weather hour {hour}")
            seen.add(hour)
            rows.append(row)
    return rows


def clean(
    rows: Iterable[RawOutageRow],
    ceiling_min: float = DEFAULT_CEILING_MIN,
    line_numbers: Iterable[int] | None = None,
) -> tuple[list[RawOutageRow], list[Rejection]]:
    """Apply the cleaning rules; returns (retained rows, rejection log).

    Rules, in the order tested per row:
      missing  any empty field
      logic    end not after start, or restoration exceeding the outage span
      gross    restoration at or above ``ceiling_min``

    Every input row lands in exactly one of the two outputs. Idempotent.
    """
    if ceiling_min <= 0:
        raise ValueError("ceiling_min must be positive")
    rows = list(rows)
    lines = list(line_numbers) if line_numbers is not None else list(range(len(rows)))
    if len(lines) != len(rows):
        raise ValueError("line_numbers length does not match rows")
    kept: list[RawOutageRow] = []
    rejected: list[Rejection] = []
    for row, line in zip(rows, lines):
        if row.missing_fields():
            rejected.append(Rejection(line, "missing"))
            continue
        span_sec = row.end_time - row.start_time  # type: ignore[operator]
        # 1e-6 s slack: restoration minutes may round-trip through division by 60
        if span_sec <= 0 or row.restoration_time_min * 60.0 > span_sec + 1e-6:  # type: ignore[operator]
            rejected.append(Rejection(line, "logic"))
            continue
        if row.restoration_time_min >= ceiling_min:  # type: ignore[operator]
            rejected.append(Rejection(line, "gross"))
            continue
        kept.append(row)
    return kept, rejected


def join_weather(
    outages: Iterable[RawOutageRow], weather: Iterable[WeatherRow]
) -> tuple[list[OutageRecord], list[tuple[int, str]]]:
    """Attach the weather row whose hour contains each outage's start time.

    Outage fields are copied unchanged; weather fields are appended. Rows whose
    start hour is not covered are excluded and reported as (index, message).
    """
    by_hour = {w.hour_start: w for w in weather}
    records: list[OutageRecord] = []
    errors: list[tuple[int, str]] = []
    for idx, row in enumerate(outages):
        if row.missing_fields():
            errors.append((idx, "row has missing fields; run clean() first"))
            continue
        hour = row.start_time - row.start_time % 3600  # type: ignore[operator]
        w = by_hour.get(hour)
        if w is None:
            errors.append((idx, f"no weather row for hour {hour}"))
            continue
        records.append(
            OutageRecord(
                start_time=row.start_time,  # type: ignore[arg-type]
                end_time=row.end_time,  # type: ignore[arg-type]
                customers_interrupted=row.customers_interrupted,  # type: ignore[arg-type]
                repair_time_min=row.repair_time_min,  # type: ignore[arg-type]
                restoration_time_min=row.restoration_time_min,  # type: ignore[arg-type]
                cause_key=row.cause_key,  # type: ignore[arg-type]
                equipment_cause_key=row.equipment_cause_key,  # type: ignore[arg-type]
                location_id=row.location_id,  # type: ignore[arg-type]
                circuit_id=row.circuit_id,  # type: ignore[arg-type]
                weather_temp=w.temp,
                weather_precip=w.precip,
                weather_wind=w.wind,
                weather_condition=w.condition,
            )
        )
    return records, errors


def write_cleaned_csv(records: Iterable[OutageRecord], path: str | Path) -> None:
    """Write cleaned records with the documented fixed column order.

    Timestamps are UTC epoch seconds; floats use repr so a read back is exact.
    """
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CLEANED_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.start_time,
                    r.end_time,
                    r.customers_interrupted,
                    repr(r.repair_time_min),
                    repr(r.restoration_time_min),
                    r.cause_key,
                    r.equipment_cause_key,
                    r.location_id,
                    r.circuit_id,
                    repr(r.weather_temp),
                    repr(r.weather_precip),
                    repr(r.weather_wind),
                    r.weather_condition,
                ]
            )


def read_cleaned_csv(path: str | Path) -> list[OutageRecord]:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"cleaned file not found: {path}")
    records: list[OutageRecord] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(CLEANED_COLUMNS):
            raise IngestError(f"{path}: not a cleaned-records file (unexpected header)")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(
                    OutageRecord(
                        start_time=int(row["start_time"]),
                        end_time=int(row["end_time"]),
                        customers_interrupted=int(row["customers_interrupted"]),
                        repair_time_min=float(row["repair_time_min"]),
                        restoration_time_min=float(row["restoration_time_min"]),
                        cause_key=int(row["cause_key"]),
                        equipment_cause_key=int(row["equipment_cause_key"]),
                        location_id=row["location_id"],
                        circuit_id=row["circuit_id"],
                        weather_temp=float(row["weather_temp"]),
                        weather_precip=float(row["weather_precip"]),
                        weather_wind=float(row["weather_wind"]),
                        weather_condition=row["weather_condition"],
                    )
                )
            except (ValueError, KeyError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_rejections_csv(rejections: Iterable[Rejection], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line", "reason"])
        for rej in rejections:
            writer.writerow([rej.line, rej.reason])

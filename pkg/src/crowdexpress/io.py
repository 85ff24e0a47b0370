"""Trajectory CSV and network JSON on disk."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
import pathlib

from .model import DataError, GeoPoint, TrajectoryRecord, TransportNetwork

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = ("taxi_id", "pickup_datetime", "pickup_lat", "pickup_lon",
                     "dropoff_datetime", "dropoff_lat", "dropoff_lon")

# column names of the public NYC TLC 2013 trip_data extract
TLC_COLUMNS = ("medallion", "pickup_datetime", "dropoff_datetime", "pickup_longitude",
               "pickup_latitude", "dropoff_longitude", "dropoff_latitude")


def parse_time(text: str) -> float:
    """ISO-8601 to epoch seconds; naive values are read as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = _dt.datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=_dt.timezone.utc)
    return dt.timestamp()


def format_time(t: float) -> str:
    dt = _dt.datetime.fromtimestamp(t, _dt.timezone.utc)
    spec = "seconds" if float(t).is_integer() else "microseconds"
    return dt.isoformat(timespec=spec).replace("+00:00", "Z")


def _float(value: str, name: str) -> float:
    x = float(value)
    if not math.isfinite(x):
        raise ValueError(f"{name} is not finite")
    return x


def _sorted(records: list[TrajectoryRecord]) -> list[TrajectoryRecord]:
    return sorted(records, key=lambda r: (r.start_time, r.taxi_id))


def read_trajectories(path) -> list[TrajectoryRecord]:
    """Read a trajectory CSV; records come back sorted by (pickup, taxi id).

    Any malformed row raises ``DataError`` naming the file and the data row
    (1-based, header excluded).
    """
    path = pathlib.Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, expected header {','.join(TRAJECTORY_HEADER)}")
        header = [h.strip() for h in header]
        missing = [c for c in TRAJECTORY_HEADER if c not in header]
        if missing:
            raise DataError(f"{path}: header lacks column(s) {', '.join(missing)}")
        col = {c: header.index(c) for c in TRAJECTORY_HEADER}
        records = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                if len(row) != len(header):
                    raise ValueError(f"expected {len(header)} fields, got {len(row)}")
                records.append(TrajectoryRecord(
                    row[col["taxi_id"]].strip(),
                    GeoPoint(_float(row[col["pickup_lat"]], "pickup_lat"),
                             _float(row[col["pickup_lon"]], "pickup_lon")),
                    GeoPoint(_float(row[col["dropoff_lat"]], "dropoff_lat"),
                             _float(row[col["dropoff_lon"]], "dropoff_lon")),
                    parse_time(row[col["pickup_datetime"]]),
                    parse_time(row[col["dropoff_datetime"]]),
                ))
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no} (line {reader.line_num}): {exc}") from exc
    log.info("read %d trajectories from %s", len(records), path)
    return _sorted(records)


def write_trajectories(records, path) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in records:
            w.writerow([r.taxi_id, format_time(r.start_time), f"{r.origin.lat:.6f}",
                        f"{r.origin.lon:.6f}", format_time(r.end_time),
                        f"{r.destination.lat:.6f}", f"{r.destination.lon:.6f}"])
    return path


def read_tlc(path, limit: int | None = None) -> tuple[list[TrajectoryRecord], int]:
    """Read a NYC TLC 2013 trip_data file.

    Rows with zero or out-of-range coordinates or non-positive durations are
    common in that extract and are skipped; returns ``(records, skipped)``.
    """
    path = pathlib.Path(path)
    records, skipped = [], 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        reader.fieldnames = [f.strip() for f in reader.fieldnames]
        missing = [c for c in TLC_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: not a TLC trip_data file, missing {', '.join(missing)}")
        for row in reader:
            if limit is not None and len(records) >= limit:
                break
            try:
                rec = TrajectoryRecord(
                    row["medallion"],
                    GeoPoint(float(row["pickup_latitude"]), float(row["pickup_longitude"])),
                    GeoPoint(float(row["dropoff_latitude"]), float(row["dropoff_longitude"])),
                    parse_time(row["pickup_datetime"]),
                    parse_time(row["dropoff_datetime"]),
                )
            except (ValueError, TypeError):
                skipped += 1
                continue
            if 0.0 in (rec.origin.lat, rec.origin.lon, rec.destination.lat, rec.destination.lon):
                skipped += 1
                continue
            records.append(rec)
    return _sorted(records), skipped


def save_network(net: TransportNetwork, path) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(net.to_dict(), indent=1) + "\n", encoding="utf-8")
    return path


def load_network(path) -> TransportNetwork:
    path = pathlib.Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from exc
    try:
        return TransportNetwork.from_dict(doc)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc

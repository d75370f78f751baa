"""Loading and windowing of time-aligned sensor data and sensor labels.

Data CSV layout::

    time,<id1>,<id2>,...
    2016-02-12T10:00:00Z,71.2,,0.4
    ...

The time column holds either RFC-3339 timestamps or integer step indices.
An empty cell marks a missing sample; it is stored as NaN.

Labels CSV layout: ``id,tag1,tag2,...``, one sensor per line, no header.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import IO, Iterable, Mapping, Union

import numpy as np

from faultcorr.errors import (
    DuplicateSensorError,
    GapError,
    ParseError,
    RangeError,
    ValidationError,
)

Source = Union[str, os.PathLike, IO[bytes], IO[str]]


@dataclass(frozen=True)
class CsvSchema:
    """Column configuration for :func:`load_csv`.

    Attributes:
        interval: Sample spacing in seconds, used when the time column holds
            timestamps.
        step: Expected increment when the time column holds integer steps.
        delimiter: Field separator.
    """

    interval: float = 60.0
    step: int = 1
    delimiter: str = ","


@dataclass(frozen=True, eq=False)
class Dataset:
    """Aligned collection of sensor series.

    ``values`` has shape ``(n_sensors, length)``; NaN marks a missing sample.
    The array is made read-only on construction.
    """

    sensors: tuple[str, ...]
    values: np.ndarray
    start_time: datetime | int = 0
    interval: float = 60.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError(f"values must be 2-D (sensors x steps), got shape {values.shape}")
        sensors = tuple(str(s) for s in self.sensors)
        if values.shape[0] != len(sensors):
            raise ValidationError(
                f"{len(sensors)} sensor ids for {values.shape[0]} value rows"
            )
        _check_unique(sensors)
        if np.isinf(values).any():
            raise ValidationError("sample values must be finite or missing (NaN)")
        values.setflags(write=False)
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "values", values)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def index(self, sensor: str) -> int:
        return self.sensors.index(sensor)

    def subset(self, sensors: Iterable[str]) -> Dataset:
        idx = [self.index(s) for s in sensors]
        return Dataset(tuple(self.sensors[i] for i in idx), self.values[idx], self.start_time, self.interval)

    def timestamps(self) -> list[datetime | int]:
        if isinstance(self.start_time, datetime):
            return [self.start_time + timedelta(seconds=self.interval * i) for i in range(self.length)]
        return [self.start_time + i for i in range(self.length)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.sensors == other.sensors
            and self.start_time == other.start_time
            and self.interval == other.interval
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class LabelRegistry:
    """Sensor id -> tag tokens. May cover only part of a dataset."""

    tags: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[str, tuple[str, ...]] = {}
        for sensor, tags in self.tags.items():
            tags = tuple(tags)
            if not tags or any(not isinstance(t, str) or not t for t in tags):
                raise ValidationError(f"sensor {sensor!r}: tags must be non-empty strings")
            clean[str(sensor)] = tags
        object.__setattr__(self, "tags", clean)

    def __len__(self) -> int:
        return len(self.tags)

    def __contains__(self, sensor: object) -> bool:
        return sensor in self.tags

    def get(self, sensor: str) -> tuple[str, ...]:
        return self.tags.get(sensor, ())

    def join(self, sensors: Iterable[str]) -> tuple[list[str], list[str]]:
        """Compare against a dataset's sensor list.

        Returns:
            ``(unknown, untagged)``: registry ids absent from ``sensors``, and
            sensors with no registry entry.
        """
        sensors = list(sensors)
        known = set(sensors)
        unknown = [s for s in self.tags if s not in known]
        untagged = [s for s in sensors if s not in self.tags]
        return unknown, untagged


def _check_unique(sensors: Iterable[str]) -> None:
    seen: set[str] = set()
    for s in sensors:
        if s in seen:
            raise DuplicateSensorError(f"duplicate sensor id {s!r}")
        seen.add(s)


def _open_text(source: Source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, io.TextIOBase):
        return source, False
    try:
        # binary stream: wrap without taking ownership
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False  # type: ignore[arg-type]
    except (AttributeError, TypeError):
        return source, False  # type: ignore[return-value]


def _parse_time(text: str, line: int) -> datetime | int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    try:
        return datetime.fromisoformat(iso)
    except ValueError:
        raise ParseError(f"unparseable timestamp {text!r}", line) from None


def _parse_value(text: str, line: int, sensor: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"sensor {sensor!r}: non-numeric value {text!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"sensor {sensor!r}: non-finite value {text!r}; leave the cell empty for missing", line)
    return value


def load_csv(source: Source, schema: CsvSchema | None = None) -> Dataset:
    """Read a data CSV into a :class:`Dataset`.

    Raises:
        ParseError: ragged rows, bad timestamps or values (carries ``line``).
        DuplicateSensorError: repeated header name.
        GapError: a missing step in the time column.
        ValidationError: non-monotone or irregular time column.
    """
    schema = schema or CsvSchema()
    stream, owned = _open_text(source)
    try:
        reader = csv.reader(stream, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: missing header row", 1) from None
        if len(header) < 2:
            raise ParseError("header needs a time column and at least one sensor column", 1)
        sensors = [h.strip() for h in header[1:]]
        if any(not s for s in sensors):
            raise ParseError("empty sensor name in header", 1)
        _check_unique(sensors)

        times: list[datetime | int] = []
        rows: list[list[float]] = []
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            t = _parse_time(row[0], line)
            if times and type(t) is not type(times[0]):
                raise ParseError("time column mixes integer steps and timestamps", line)
            if times:
                _check_spacing(times[-1], t, schema, line)
            times.append(t)
            rows.append([_parse_value(v, line, s) for v, s in zip(row[1:], sensors)])
    finally:
        if owned:
            stream.close()
        elif isinstance(stream, io.TextIOWrapper) and not isinstance(source, io.TextIOBase):
            stream.detach()

    if not rows:
        values = np.empty((len(sensors), 0))
        start: datetime | int = 0
    else:
        values = np.asarray(rows, dtype=float).T
        start = times[0]
    interval = schema.interval if isinstance(start, datetime) else float(schema.step)
    return Dataset(tuple(sensors), values, start, interval)


def _check_spacing(prev: datetime | int, cur: datetime | int, schema: CsvSchema, line: int) -> None:
    if isinstance(prev, int):
        diff, step = cur - prev, schema.step  # type: ignore[operator]
        if diff <= 0:
            raise ValidationError(f"line {line}: non-monotone time {cur} after {prev}")
        if diff != step:
            if diff % step == 0:
                raise GapError(f"line {line}: missing step {prev + step}", prev + step)
            raise ValidationError(f"line {line}: irregular step {diff} (expected {step})")
        return
    seconds = (cur - prev).total_seconds()  # type: ignore[operator]
    if seconds <= 0:
        raise ValidationError(f"line {line}: non-monotone timestamp {cur.isoformat()} after {prev.isoformat()}")  # type: ignore[union-attr]
    if not math.isclose(seconds, schema.interval, rel_tol=0, abs_tol=1e-6):
        ratio = seconds / schema.interval
        if math.isclose(ratio, round(ratio), abs_tol=1e-9):
            missing = prev + timedelta(seconds=schema.interval)  # type: ignore[operator]
            raise GapError(f"line {line}: missing step {missing.isoformat()}", missing)
        raise ValidationError(f"line {line}: irregular interval {seconds}s (expected {schema.interval}s)")


def _format_time(t: datetime | int) -> str:
    if isinstance(t, datetime):
        text = t.isoformat()
        return text[:-6] + "Z" if text.endswith("+00:00") else text
    return str(t)


def save_csv(dataset: Dataset, dest: str | os.PathLike | IO[str]) -> None:
    """Write ``dataset`` in the data CSV layout; reloading gives an equal Dataset."""
    own = isinstance(dest, (str, os.PathLike))
    stream = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["time", *dataset.sensors])
        for t, col in zip(dataset.timestamps(), dataset.values.T):
            writer.writerow([_format_time(t), *("" if math.isnan(v) else repr(float(v)) for v in col)])
    finally:
        if own:
            stream.close()


def load_labels(source: Source) -> LabelRegistry:
    """Read a labels CSV. An empty file gives an empty registry."""
    stream, owned = _open_text(source)
    tags: dict[str, tuple[str, ...]] = {}
    try:
        reader = csv.reader(stream)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            sensor = row[0].strip()
            if not sensor:
                raise ParseError("empty sensor id", line)
            if sensor in tags:
                raise DuplicateSensorError(f"line {line}: duplicate label record for {sensor!r}")
            tokens = tuple(c.strip() for c in row[1:] if c.strip())
            if not tokens:
                raise ParseError(f"sensor {sensor!r} has an empty tag list", line)
            tags[sensor] = tokens
    finally:
        if owned:
            stream.close()
        elif isinstance(stream, io.TextIOWrapper) and not isinstance(source, io.TextIOBase):
            stream.detach()
    return LabelRegistry(tags)


def save_labels(registry: LabelRegistry, dest: str | os.PathLike | IO[str]) -> None:
    own = isinstance(dest, (str, os.PathLike))
    stream = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(stream, lineterminator="\n")
        for sensor, tags in registry.tags.items():
            writer.writerow([sensor, *tags])
    finally:
        if own:
            stream.close()


def window(dataset: Dataset, t_end: int, span: int) -> np.ndarray:
    """Last ``span`` samples ending at step ``t_end`` (inclusive), shape ``(N, span)``.

    The result is a read-only view into ``dataset.values``.
    """
    if span < 1 or t_end < 0 or t_end >= dataset.length or span > t_end + 1:
        raise RangeError(
            f"window t_end={t_end}, span={span} does not fit a series of length {dataset.length}"
        )
    return dataset.values[:, t_end - span + 1 : t_end + 1]

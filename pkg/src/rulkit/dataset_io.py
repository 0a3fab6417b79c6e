"""Parsing and validation for the turbofan dataset text files.

File layout (train/test trajectory files):
    26 whitespace-delimited numeric columns per row, no header:
    unit id, cycle, 3 operating settings, 21 sensor channels.
    Rows are grouped by engine, cycle-ascending, cycles starting at 1.

The companion RUL file holds one non-negative integer per line: the
remaining life of the i-th test engine at its last recorded cycle.

Parsing is fail-fast: a malformed row raises ParseError with its line
number, and structural violations (cycle gaps, duplicated engine blocks)
raise ValidationError naming the engine. Values are kept at full double
precision; downstream gradient checks depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import isfinite
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

N_SETTINGS = 3
N_SENSORS = 21
N_COLUMNS = 2 + N_SETTINGS + N_SENSORS

FD001_EXPECTED_TRAIN_ENGINES = 100
FD001_EXPECTED_TEST_ENGINES = 100


@dataclass(frozen=True)
class CycleRecord:
    """One engine cycle: 3 operating settings and 21 sensor readings."""

    cycle: int
    op_settings: tuple[float, ...]
    sensors: tuple[float, ...]

    def __post_init__(self):
        if self.cycle < 1:
            raise ValidationError(f"cycle must be positive, got {self.cycle}")
        if len(self.op_settings) != N_SETTINGS:
            raise ValidationError(
                f"expected {N_SETTINGS} operating settings, got {len(self.op_settings)}"
            )
        if len(self.sensors) != N_SENSORS:
            raise ValidationError(
                f"expected {N_SENSORS} sensor values, got {len(self.sensors)}"
            )
        for v in self.op_settings + self.sensors:
            if not isfinite(v):
                raise ValidationError(f"non-finite value {v!r} at cycle {self.cycle}")


@dataclass(frozen=True)
class EngineTrajectory:
    """One engine's cycle-ordered record list.

    Cycle numbers must be contiguous ascending integers. Freshly parsed
    trajectories start at cycle 1; head-trimmed ones keep their original
    numbering and start later.
    """

    engine_id: int
    cycles: tuple[CycleRecord, ...]

    def __post_init__(self):
        if self.engine_id < 1:
            raise ValidationError(f"engine id must be positive, got {self.engine_id}")
        if not self.cycles:
            raise ValidationError(f"engine {self.engine_id}: empty trajectory")
        for prev, cur in zip(self.cycles, self.cycles[1:]):
            if cur.cycle != prev.cycle + 1:
                raise ValidationError(
                    f"engine {self.engine_id}: non-contiguous cycles "
                    f"{prev.cycle} -> {cur.cycle}"
                )

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def first_cycle(self) -> int:
        return self.cycles[0].cycle

    @property
    def last_cycle(self) -> int:
        return self.cycles[-1].cycle

    @cached_property
    def settings_matrix(self) -> np.ndarray:
        """(L, 3) operating settings, row per cycle."""
        return np.array([r.op_settings for r in self.cycles], dtype=np.float64)

    @cached_property
    def sensors_matrix(self) -> np.ndarray:
        """(L, 21) sensor readings, row per cycle."""
        return np.array([r.sensors for r in self.cycles], dtype=np.float64)

    def with_sensors(self, sensors: np.ndarray) -> "EngineTrajectory":
        """Copy of this trajectory with sensor values replaced (L, 21)."""
        if sensors.shape != (len(self.cycles), N_SENSORS):
            raise ValidationError(
                f"engine {self.engine_id}: replacement sensors shape {sensors.shape} "
                f"does not match ({len(self.cycles)}, {N_SENSORS})"
            )
        records = tuple(
            CycleRecord(r.cycle, r.op_settings, tuple(float(v) for v in row))
            for r, row in zip(self.cycles, sensors)
        )
        return EngineTrajectory(self.engine_id, records)


@dataclass(frozen=True)
class RulLabelFile:
    """Ordered remaining-life labels; i-th label pairs with i-th test engine."""

    ruls: tuple[int, ...]

    def __post_init__(self):
        if not self.ruls:
            raise ValidationError("RUL label file is empty")
        for i, r in enumerate(self.ruls):
            if r < 0:
                raise ValidationError(f"label {i + 1}: RUL must be non-negative, got {r}")

    def __len__(self) -> int:
        return len(self.ruls)


def parse_trajectory_file(text: str) -> list[EngineTrajectory]:
    """Parse raw trajectory file contents into per-engine trajectories.

    Tolerates repeated delimiters and trailing whitespace (the published
    files use double-space separators). Every row must contribute to the
    output; engine blocks may appear in any order but must not repeat.
    """
    rows_by_engine: dict[int, list[CycleRecord]] = {}
    last_engine: int | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != N_COLUMNS:
            raise ParseError(
                f"line {lineno}: expected {N_COLUMNS} columns, got {len(tokens)}"
            )
        try:
            values = [float(t) for t in tokens]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric token ({exc})") from None
        engine_id = int(values[0])
        if engine_id != values[0] or engine_id < 1:
            raise ParseError(f"line {lineno}: unit id must be a positive integer")
        cycle = int(values[1])
        if cycle != values[1] or cycle < 1:
            raise ParseError(f"line {lineno}: cycle must be a positive integer")
        if engine_id in rows_by_engine and engine_id != last_engine:
            raise ValidationError(
                f"line {lineno}: engine {engine_id} appears in more than one block"
            )
        try:
            record = CycleRecord(
                cycle,
                tuple(values[2 : 2 + N_SETTINGS]),
                tuple(values[2 + N_SETTINGS :]),
            )
        except ValidationError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        rows_by_engine.setdefault(engine_id, []).append(record)
        last_engine = engine_id

    if not rows_by_engine:
        raise ValidationError("trajectory file contains no data rows")

    trajectories = []
    for engine_id in sorted(rows_by_engine):
        records = rows_by_engine[engine_id]
        if records[0].cycle != 1:
            raise ValidationError(
                f"engine {engine_id}: first cycle must be 1, got {records[0].cycle}"
            )
        trajectories.append(EngineTrajectory(engine_id, tuple(records)))
    return trajectories


def parse_rul_file(text: str) -> RulLabelFile:
    """Parse the companion RUL file: one non-negative integer per line."""
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            value = int(stripped)
        except ValueError:
            raise ParseError(f"line {lineno}: expected an integer, got {stripped!r}") from None
        if value < 0:
            raise ParseError(f"line {lineno}: RUL must be non-negative, got {value}")
        labels.append(value)
    return RulLabelFile(tuple(labels))


def serialize_trajectories(trajectories: list[EngineTrajectory]) -> str:
    """Re-emit trajectories in the whitespace format parse accepts.

    Floats use shortest round-trip formatting, so
    parse(serialize(x)) == x exactly.
    """
    lines = []
    for traj in trajectories:
        for rec in traj.cycles:
            fields = [str(traj.engine_id), str(rec.cycle)]
            fields += [repr(v) for v in rec.op_settings]
            fields += [repr(v) for v in rec.sensors]
            lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def read_trajectories(path: Path | str) -> list[EngineTrajectory]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trajectory file not found: {path}")
    return parse_trajectory_file(path.read_text())


def read_rul_labels(path: Path | str) -> RulLabelFile:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"RUL file not found: {path}")
    return parse_rul_file(path.read_text())


@dataclass
class DatasetStats:
    """Shape summary of a parsed train/test/label triple.

    Expectation mismatches for the single-condition FD001 layout are
    recorded in `flags` rather than raised: the summary is a report,
    not a gate.
    """

    train_engines: int
    test_engines: int
    rul_labels: int
    train_total_rows: int
    test_total_rows: int
    train_min_len: int
    train_max_len: int
    test_min_len: int
    test_max_len: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "train_engines": self.train_engines,
            "test_engines": self.test_engines,
            "rul_labels": self.rul_labels,
            "train_total_rows": self.train_total_rows,
            "test_total_rows": self.test_total_rows,
            "train_min_len": self.train_min_len,
            "train_max_len": self.train_max_len,
            "test_min_len": self.test_min_len,
            "test_max_len": self.test_max_len,
            "flags": list(self.flags),
        }


def dataset_summary(
    train: list[EngineTrajectory],
    test: list[EngineTrajectory],
    ruls: RulLabelFile,
) -> DatasetStats:
    """Summarize engine counts and trajectory lengths; flag FD001 mismatches."""
    train_lens = [len(t) for t in train]
    test_lens = [len(t) for t in test]
    stats = DatasetStats(
        train_engines=len(train),
        test_engines=len(test),
        rul_labels=len(ruls),
        train_total_rows=sum(train_lens),
        test_total_rows=sum(test_lens),
        train_min_len=min(train_lens),
        train_max_len=max(train_lens),
        test_min_len=min(test_lens),
        test_max_len=max(test_lens),
    )
    if stats.train_engines != FD001_EXPECTED_TRAIN_ENGINES:
        stats.flags.append(
            f"expected {FD001_EXPECTED_TRAIN_ENGINES} training engines, "
            f"found {stats.train_engines}"
        )
    if stats.test_engines != FD001_EXPECTED_TEST_ENGINES:
        stats.flags.append(
            f"expected {FD001_EXPECTED_TEST_ENGINES} test engines, found {stats.test_engines}"
        )
    if stats.rul_labels != stats.test_engines:
        stats.flags.append(
            f"label count {stats.rul_labels} does not match test engine count "
            f"{stats.test_engines}"
        )
    return stats

"""Preprocessing chain for trajectory data.

Fixed stage order: drop constant sensors -> exponential smoothing (sensor
channels only) -> head trim -> min-max scaling fitted on training engines
-> remaining-life labeling -> windowing, with an engine-level train/validation
split. Re-running on identical inputs and seed reproduces identical arrays.

The default drop set is detected, not hardcoded: any sensor whose raw value
range across all training engines is below CONSTANT_TOLERANCE carries no
signal and is excluded. Operating settings are kept as features, except that
a zero-range setting (the single-condition files ship one) is excluded the
same way, since a constant column cannot be min-max scaled.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset_io import EngineTrajectory, N_SENSORS, N_SETTINGS
from .errors import ConfigError, ValidationError
from .ioutil import atomic_write_text, canonical_json, sha256_text
from .numerics import SeededRng

logger = logging.getLogger(__name__)

DEFAULT_DROPPED_SENSORS = frozenset({1, 5, 6, 10, 16, 18, 19})
CONSTANT_TOLERANCE = 1e-12
DEFAULT_ALPHA = 0.1
DEFAULT_TRIM = 10
DEFAULT_WINDOW = 20
DEFAULT_N_VAL = 20


@dataclass(frozen=True)
class FeatureSelection:
    """Which of the 3 settings and 21 sensors feed the models."""

    dropped_sensors: frozenset[int]
    dropped_settings: frozenset[int] = frozenset()

    def __post_init__(self):
        bad = [s for s in self.dropped_sensors if not 1 <= s <= N_SENSORS]
        if bad:
            raise ConfigError(f"sensor indices out of range 1..{N_SENSORS}: {sorted(bad)}")
        bad = [s for s in self.dropped_settings if not 1 <= s <= N_SETTINGS]
        if bad:
            raise ConfigError(f"setting indices out of range 1..{N_SETTINGS}: {sorted(bad)}")

    @property
    def kept_settings(self) -> list[int]:
        return [i for i in range(1, N_SETTINGS + 1) if i not in self.dropped_settings]

    @property
    def kept_sensors(self) -> list[int]:
        return [i for i in range(1, N_SENSORS + 1) if i not in self.dropped_sensors]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(
            [f"setting_{i}" for i in self.kept_settings]
            + [f"sensor_{i}" for i in self.kept_sensors]
        )

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def selection_from_feature_names(names: Sequence[str]) -> FeatureSelection:
    """Rebuild a FeatureSelection from a stored feature-name list.

    Inverse of FeatureSelection.feature_names; rejects unknown names and
    orderings other than the canonical settings-then-sensors layout.
    """
    kept_settings, kept_sensors = set(), set()
    for name in names:
        kind, _, num = name.partition("_")
        if not num.isdigit():
            raise ValidationError(f"unrecognized feature name {name!r}")
        idx = int(num)
        if kind == "setting" and 1 <= idx <= N_SETTINGS:
            kept_settings.add(idx)
        elif kind == "sensor" and 1 <= idx <= N_SENSORS:
            kept_sensors.add(idx)
        else:
            raise ValidationError(f"unrecognized feature name {name!r}")
    selection = FeatureSelection(
        frozenset(range(1, N_SENSORS + 1)) - frozenset(kept_sensors),
        frozenset(range(1, N_SETTINGS + 1)) - frozenset(kept_settings),
    )
    if selection.feature_names != tuple(names):
        raise ValidationError(
            f"feature names {tuple(names)} are not in canonical order "
            f"{selection.feature_names}"
        )
    return selection


def detect_constant_sensors(
    trajectories: Sequence[EngineTrajectory], tol: float = CONSTANT_TOLERANCE
) -> set[int]:
    """Sensor indices (1-based) whose raw range over all engines is <= tol."""
    if not trajectories:
        raise ValidationError("cannot detect constant sensors on empty input")
    stacked = np.vstack([t.sensors_matrix for t in trajectories])
    spans = stacked.max(axis=0) - stacked.min(axis=0)
    return {i + 1 for i in range(N_SENSORS) if spans[i] <= tol}


def detect_constant_settings(
    trajectories: Sequence[EngineTrajectory], tol: float = CONSTANT_TOLERANCE
) -> set[int]:
    """Operating-setting indices (1-based) with zero range, analogously."""
    if not trajectories:
        raise ValidationError("cannot detect constant settings on empty input")
    stacked = np.vstack([t.settings_matrix for t in trajectories])
    spans = stacked.max(axis=0) - stacked.min(axis=0)
    return {i + 1 for i in range(N_SETTINGS) if spans[i] <= tol}


def select_features(
    trajectories: Sequence[EngineTrajectory], tol: float = CONSTANT_TOLERANCE
) -> FeatureSelection:
    """Build the feature selection by scanning raw training data."""
    dropped_sensors = detect_constant_sensors(trajectories, tol)
    dropped_settings = detect_constant_settings(trajectories, tol)
    if dropped_settings:
        logger.info(
            "excluding zero-range operating settings %s from features",
            sorted(dropped_settings),
        )
    return FeatureSelection(frozenset(dropped_sensors), frozenset(dropped_settings))


def ewma_smooth(series: np.ndarray, alpha: float) -> np.ndarray:
    """Exponentially weighted average along axis 0.

    s[0] = x[0]; s[t] = alpha * x[t] + (1 - alpha) * s[t-1].
    """
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha must be in (0, 1], got {alpha}")
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValidationError("cannot smooth an empty series")
    out = np.empty_like(x)
    out[0] = x[0]
    decay = 1.0 - alpha
    for t in range(1, x.shape[0]):
        out[t] = alpha * x[t] + decay * out[t - 1]
    return out


def smooth_trajectory(traj: EngineTrajectory, alpha: float) -> EngineTrajectory:
    """Smooth sensor channels only; operating settings pass through untouched."""
    return traj.with_sensors(ewma_smooth(traj.sensors_matrix, alpha))


def trim_head(traj: EngineTrajectory, n: int = DEFAULT_TRIM) -> EngineTrajectory:
    """Drop the first n cycles; retained cycle numbers are preserved."""
    if n < 0:
        raise ConfigError(f"trim length must be >= 0, got {n}")
    if n == 0:
        return traj
    if len(traj) <= n:
        raise ValidationError(
            f"engine {traj.engine_id}: cannot trim {n} cycles from a "
            f"{len(traj)}-cycle trajectory"
        )
    return EngineTrajectory(traj.engine_id, traj.cycles[n:])


def feature_matrix(traj: EngineTrajectory, selection: FeatureSelection) -> np.ndarray:
    """(L, F) matrix of the kept settings and sensors, in feature_names order."""
    cols = []
    settings = traj.settings_matrix
    sensors = traj.sensors_matrix
    for i in selection.kept_settings:
        cols.append(settings[:, i - 1])
    for i in selection.kept_sensors:
        cols.append(sensors[:, i - 1])
    return np.column_stack(cols)


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature min/max fitted on training engines only.

    transform maps fitted training data into [0, 1] exactly; out-of-range
    values (test time) are clamped to [0, 1].
    """

    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if len(self.feature_names) != self.mins.shape[0] or self.mins.shape != self.maxs.shape:
            raise ValidationError("scaler feature names and bounds disagree in length")
        if np.any(self.maxs < self.mins):
            raise ValidationError("scaler has max < min for some feature")

    def transform(self, features: np.ndarray) -> np.ndarray:
        scaled = (features - self.mins) / (self.maxs - self.mins)
        return np.clip(scaled, 0.0, 1.0)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return self.mins + scaled * (self.maxs - self.mins)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(
            tuple(d["feature_names"]),
            np.array(d["mins"], dtype=np.float64),
            np.array(d["maxs"], dtype=np.float64),
        )


def fit_minmax(
    trajectories: Sequence[EngineTrajectory], selection: FeatureSelection
) -> ScalerParams:
    """Fit per-feature min/max over all rows of (smoothed, trimmed) train data."""
    if not trajectories:
        raise ValidationError("cannot fit a scaler on empty input")
    stacked = np.vstack([feature_matrix(t, selection) for t in trajectories])
    mins = stacked.min(axis=0)
    maxs = stacked.max(axis=0)
    flat = np.flatnonzero(maxs - mins <= 0.0)
    if flat.size:
        names = [selection.feature_names[i] for i in flat]
        raise ConfigError(
            f"features {names} are constant on the training data; "
            "extend the drop set so every kept feature has positive range"
        )
    return ScalerParams(selection.feature_names, mins, maxs)


@dataclass(frozen=True)
class ScaledEngine:
    """One engine after smoothing, trimming and scaling."""

    engine_id: int
    cycle_numbers: np.ndarray
    features: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


def apply_minmax(
    scaler: ScalerParams, traj: EngineTrajectory, selection: FeatureSelection
) -> ScaledEngine:
    """Scale one trajectory's kept features into [0, 1] (clamped)."""
    if selection.feature_names != scaler.feature_names:
        raise ValidationError(
            f"feature order mismatch: selection {selection.feature_names} "
            f"vs scaler {scaler.feature_names}"
        )
    cycles = np.array([r.cycle for r in traj.cycles], dtype=np.int64)
    return ScaledEngine(traj.engine_id, cycles, scaler.transform(feature_matrix(traj, selection)))


def label_rul(
    traj: EngineTrajectory | ScaledEngine,
    known_terminal_rul: int = 0,
    cap: int | None = None,
) -> np.ndarray:
    """Per-cycle remaining life: (last_cycle - cycle) + terminal RUL.

    Training engines run to failure (terminal RUL 0); test engines stop
    early and take their terminal value from the label file. An optional
    cap clips large early-life labels.
    """
    if known_terminal_rul < 0:
        raise ConfigError(f"terminal RUL must be non-negative, got {known_terminal_rul}")
    if isinstance(traj, ScaledEngine):
        cycles = traj.cycle_numbers
    else:
        cycles = np.array([r.cycle for r in traj.cycles], dtype=np.int64)
    rul = (cycles[-1] - cycles + known_terminal_rul).astype(np.float64)
    if cap is not None:
        if cap <= 0:
            raise ConfigError(f"RUL cap must be positive, got {cap}")
        np.minimum(rul, float(cap), out=rul)
    return rul


@dataclass(frozen=True)
class WindowSet:
    """Batched sequence samples: (N, W, F) windows with scalar targets."""

    windows: np.ndarray
    targets: np.ndarray
    engine_ids: np.ndarray

    def __len__(self) -> int:
        return self.windows.shape[0]

    @staticmethod
    def concat(parts: Iterable["WindowSet"]) -> "WindowSet":
        parts = list(parts)
        return WindowSet(
            np.concatenate([p.windows for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.engine_ids for p in parts]),
        )


@dataclass(frozen=True)
class RowSet:
    """Batched single-cycle samples: (N, F) rows with scalar targets."""

    rows: np.ndarray
    targets: np.ndarray
    engine_ids: np.ndarray

    def __len__(self) -> int:
        return self.rows.shape[0]

    @staticmethod
    def concat(parts: Iterable["RowSet"]) -> "RowSet":
        parts = list(parts)
        return RowSet(
            np.concatenate([p.rows for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.engine_ids for p in parts]),
        )


def make_windows(
    scaled: ScaledEngine, rul: np.ndarray, window: int = DEFAULT_WINDOW
) -> WindowSet:
    """All sliding windows of one engine: L - window + 1 samples.

    The target of a window is the RUL at its last (most recent) cycle.
    Windows never cross engine boundaries by construction.
    """
    length = len(scaled)
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if length < window:
        raise ValidationError(
            f"engine {scaled.engine_id}: {length} cycles is shorter than "
            f"window {window}"
        )
    n = length - window + 1
    idx = np.arange(window)[None, :] + np.arange(n)[:, None]
    return WindowSet(
        scaled.features[idx],
        rul[window - 1 :].copy(),
        np.full(n, scaled.engine_id, dtype=np.int64),
    )


def make_rows(scaled: ScaledEngine, rul: np.ndarray) -> RowSet:
    """Every retained cycle of one engine as an independent sample."""
    return RowSet(
        scaled.features.copy(),
        rul.copy(),
        np.full(len(scaled), scaled.engine_id, dtype=np.int64),
    )


def split_by_engine(
    engine_ids: Sequence[int], n_val: int = DEFAULT_N_VAL, seed: int = 0
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Seeded engine-level split into (train ids, validation ids).

    Deterministic per seed; the partition is disjoint and exhaustive.
    """
    ids = sorted(engine_ids)
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate engine ids in split input")
    if n_val < 0:
        raise ConfigError(f"n_val must be >= 0, got {n_val}")
    if n_val >= len(ids):
        raise ConfigError(f"n_val={n_val} must be smaller than engine count {len(ids)}")
    order = SeededRng(seed).shuffle(len(ids))
    val = tuple(sorted(ids[i] for i in order[:n_val]))
    train = tuple(sorted(ids[i] for i in order[n_val:]))
    return train, val


def effective_trim(length: int, trim: int, window: int) -> int:
    """Trim to apply to one engine, reduced so a final window still fits.

    Engines shorter than the window even untrimmed return 0; the window
    builder front-pads those (test-time policy).
    """
    return min(trim, max(length - window, 0))


def final_window(scaled: ScaledEngine, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Last `window` scaled rows, front-padded with the earliest row if short."""
    feats = scaled.features
    if len(scaled) >= window:
        return feats[-window:].copy()
    pad = np.repeat(feats[:1], window - len(scaled), axis=0)
    return np.vstack([pad, feats])


@dataclass
class PreprocessResult:
    """Everything the trainer needs, produced in one deterministic pass."""

    selection: FeatureSelection
    scaler: ScalerParams
    train_ids: tuple[int, ...]
    val_ids: tuple[int, ...]
    seed: int
    train_windows: WindowSet
    val_windows: WindowSet
    train_rows: RowSet
    val_rows: RowSet

    @property
    def total_windows(self) -> int:
        return len(self.train_windows) + len(self.val_windows)

    @property
    def total_rows(self) -> int:
        return len(self.train_rows) + len(self.val_rows)


def run_pipeline(
    train_trajectories: Sequence[EngineTrajectory],
    *,
    alpha: float = DEFAULT_ALPHA,
    trim: int = DEFAULT_TRIM,
    window: int = DEFAULT_WINDOW,
    n_val: int = DEFAULT_N_VAL,
    seed: int = 0,
    rul_cap: int | None = None,
    const_tol: float = CONSTANT_TOLERANCE,
) -> PreprocessResult:
    """Run the full training-side chain on parsed training trajectories."""
    if not train_trajectories:
        raise ValidationError("no training trajectories")
    selection = select_features(train_trajectories, const_tol)
    prepared = [
        trim_head(smooth_trajectory(t, alpha), trim) for t in train_trajectories
    ]
    scaler = fit_minmax(prepared, selection)
    scaled = [apply_minmax(scaler, t, selection) for t in prepared]
    labels = [label_rul(s, 0, rul_cap) for s in scaled]

    train_ids, val_ids = split_by_engine(
        [t.engine_id for t in train_trajectories], n_val, seed
    )
    train_id_set = set(train_ids)

    train_w, val_w, train_r, val_r = [], [], [], []
    for eng, rul in zip(scaled, labels):
        wset = make_windows(eng, rul, window)
        rset = make_rows(eng, rul)
        if eng.engine_id in train_id_set:
            train_w.append(wset)
            train_r.append(rset)
        else:
            val_w.append(wset)
            val_r.append(rset)

    empty_w = WindowSet(
        np.zeros((0, window, selection.n_features)), np.zeros(0), np.zeros(0, dtype=np.int64)
    )
    empty_r = RowSet(
        np.zeros((0, selection.n_features)), np.zeros(0), np.zeros(0, dtype=np.int64)
    )
    return PreprocessResult(
        selection=selection,
        scaler=scaler,
        train_ids=train_ids,
        val_ids=val_ids,
        seed=seed,
        train_windows=WindowSet.concat(train_w) if train_w else empty_w,
        val_windows=WindowSet.concat(val_w) if val_w else empty_w,
        train_rows=RowSet.concat(train_r) if train_r else empty_r,
        val_rows=RowSet.concat(val_r) if val_r else empty_r,
    )


BUNDLE_FORMAT = "rulkit-bundle-v1"

_BUNDLE_ARRAYS = (
    ("train_windows", "train_windows", "windows"),
    ("val_windows", "val_windows", "windows"),
    ("train_rows", "train_rows", "rows"),
    ("val_rows", "val_rows", "rows"),
)


def write_bundle(out_dir: Path | str, result: PreprocessResult, pipeline: dict) -> None:
    """Persist a PreprocessResult as meta.json, scaler.json and .npy arrays.

    `pipeline` records the arguments the chain ran with, so downstream
    stages can reuse them and refuse mismatched combinations.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scaler_json = canonical_json(result.scaler.to_dict())
    meta = {
        "format": BUNDLE_FORMAT,
        "pipeline": pipeline,
        "feature_names": list(result.selection.feature_names),
        "train_ids": list(result.train_ids),
        "val_ids": list(result.val_ids),
        "split_seed": result.seed,
        "scaler_hash": sha256_text(scaler_json),
        "counts": {
            "engines": len(result.train_ids) + len(result.val_ids),
            "train_windows": len(result.train_windows),
            "val_windows": len(result.val_windows),
            "train_rows": len(result.train_rows),
            "val_rows": len(result.val_rows),
            "total_windows": result.total_windows,
            "total_rows": result.total_rows,
        },
    }
    atomic_write_text(out / "meta.json", canonical_json(meta) + "\n")
    atomic_write_text(out / "scaler.json", scaler_json + "\n")
    for prefix, attr, field_name in _BUNDLE_ARRAYS:
        part = getattr(result, attr)
        np.save(out / f"{prefix}.npy", getattr(part, field_name))
        np.save(out / f"{prefix}_targets.npy", part.targets)
        np.save(out / f"{prefix}_engines.npy", part.engine_ids)


@dataclass
class Bundle:
    """A preprocessing bundle loaded back from disk."""

    meta: dict
    scaler: ScalerParams
    train_windows: WindowSet
    val_windows: WindowSet
    train_rows: RowSet
    val_rows: RowSet


def load_bundle(bundle_dir: Path | str) -> Bundle:
    out = Path(bundle_dir)
    meta_path = out / "meta.json"
    if not meta_path.is_file():
        raise ValidationError(f"{out} is not a preprocessing bundle (no meta.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format") != BUNDLE_FORMAT:
        raise ValidationError(f"unrecognized bundle format in {meta_path}")
    scaler = ScalerParams.from_dict(
        json.loads((out / "scaler.json").read_text(encoding="utf-8"))
    )
    parts = {}
    for prefix, attr, _ in _BUNDLE_ARRAYS:
        main = np.load(out / f"{prefix}.npy")
        targets = np.load(out / f"{prefix}_targets.npy")
        engines = np.load(out / f"{prefix}_engines.npy")
        cls = WindowSet if "windows" in prefix else RowSet
        parts[attr] = cls(main, targets, engines)
    return Bundle(meta=meta, scaler=scaler, **parts)


def prepare_test_engine(
    traj: EngineTrajectory,
    scaler: ScalerParams,
    selection: FeatureSelection,
    *,
    alpha: float = DEFAULT_ALPHA,
    trim: int = DEFAULT_TRIM,
    window: int = DEFAULT_WINDOW,
) -> tuple[np.ndarray, np.ndarray]:
    """Test-time features for one engine: (final window (W, F), final row (F,)).

    Applies the identical chain with the short-engine policy: the trim is
    reduced when the trajectory is too short, and trajectories shorter than
    the window are front-padded with their earliest scaled row.
    """
    n = effective_trim(len(traj), trim, window)
    prepared = trim_head(smooth_trajectory(traj, alpha), n)
    scaled = apply_minmax(scaler, prepared, selection)
    return final_window(scaled, window), scaled.features[-1].copy()

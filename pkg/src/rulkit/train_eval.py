"""Training loop, test-set evaluation, and the gradient verification suite.

The loop is the usual epoch/batch pattern: one seeded shuffle per epoch,
consecutive batches (final partial batch included), forward -> MSE ->
backward -> Adam. Validation MSE is computed over the full validation set
after every epoch. Targets stay in raw cycle units, so losses read as
squared cycles. Everything is deterministic given (seed, config, data).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import models
from .dataset_io import EngineTrajectory, RulLabelFile
from .errors import ConfigError, TrainingError, ValidationError
from .ioutil import atomic_write_text, canonical_json, fmt_double, sha256_text
from .numerics import SeededRng
from .optim import AdamState, adam_step, clip_gradients, init_adam
from .preprocess import (
    FeatureSelection,
    RowSet,
    ScalerParams,
    WindowSet,
    prepare_test_engine,
    selection_from_feature_names,
)

logger = logging.getLogger(__name__)

MODEL_KINDS = ("mlp", "lstm")


@dataclass(frozen=True)
class TrainConfig:
    """Run configuration; defaults mirror the reference training recipe."""

    model: str = "lstm"
    epochs: int = 35
    batch_size: int = 64
    lr: float = 0.001
    window: int = 20
    seed: int = 42
    alpha: float = 0.1
    trim: int = 10
    n_val: int = 20
    rul_cap: int | None = None
    grad_clip: float | None = None
    lstm_hidden: int = 64
    mlp_hidden: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        for name in ("epochs", "batch_size", "window", "lstm_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.trim < 0:
            raise ConfigError(f"trim must be >= 0, got {self.trim}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.rul_cap is not None and self.rul_cap <= 0:
            raise ConfigError(f"rul_cap must be positive, got {self.rul_cap}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be positive, got {self.grad_clip}")
        if any(h < 1 for h in self.mlp_hidden):
            raise ConfigError(f"mlp hidden sizes must be >= 1, got {self.mlp_hidden}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))


@dataclass
class TrainHistory:
    """Per-epoch loss curves; wall-clock stays out of the CSV artifact."""

    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_mse)


@dataclass
class EngineEval:
    engine_id: int
    true_rul: float
    predicted_rul: float
    predicted_rul_clamped: float


@dataclass
class EvalReport:
    """Per-engine predictions plus the aggregate test MSE and run metadata."""

    rows: list[EngineEval]
    mse: float
    seed: int
    config_hash: str
    checkpoint_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "engines": [
                {
                    "engine_id": r.engine_id,
                    "true_rul": r.true_rul,
                    "predicted_rul": r.predicted_rul,
                    "predicted_rul_clamped": r.predicted_rul_clamped,
                }
                for r in self.rows
            ],
            "mse": self.mse,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "checkpoint_hash": self.checkpoint_hash,
        }


@dataclass
class TrainedModel:
    """A parameter set plus the metadata needed to apply it safely."""

    kind: str
    params: models.MlpParams | models.LstmParams
    window: int
    feature_names: tuple[str, ...]
    scaler_hash: str
    config_hash: str
    seed: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Predictions for a batch: (N, W, F) windows or (N, F) rows."""
        if self.kind == "lstm":
            if x.ndim != 3 or x.shape[1] != self.window:
                raise ValidationError(
                    f"lstm model expects (batch, {self.window}, features), got {x.shape}"
                )
            pred, _ = models.lstm_forward(self.params, x)
        else:
            pred, _ = models.mlp_forward(self.params, x)
        return pred


def scaler_hash(scaler: ScalerParams) -> str:
    return sha256_text(canonical_json(scaler.to_dict()))


def _batch_inputs(dataset: WindowSet | RowSet) -> np.ndarray:
    return dataset.windows if isinstance(dataset, WindowSet) else dataset.rows


def _forward(kind: str, params, x: np.ndarray):
    if kind == "lstm":
        return models.lstm_forward(params, x)
    return models.mlp_forward(params, x)


def _backward(kind: str, params, cache, dpred: np.ndarray) -> dict[str, np.ndarray]:
    if kind == "lstm":
        return models.lstm_backward(params, cache, dpred)
    return models.mlp_backward(params, cache, dpred)


def _predict_in_chunks(kind: str, params, x: np.ndarray, chunk: int = 512) -> np.ndarray:
    preds = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        preds[start : start + chunk] = _forward(kind, params, x[start : start + chunk])[0]
    return preds


def init_model_params(config: TrainConfig, n_features: int, rng: SeededRng):
    if config.model == "lstm":
        return models.init_lstm(n_features, config.lstm_hidden, rng)
    return models.init_mlp((n_features, *config.mlp_hidden, 1), rng)


def train(
    config: TrainConfig,
    train_set: WindowSet | RowSet,
    val_set: WindowSet | RowSet,
    rng: SeededRng,
) -> tuple[models.MlpParams | models.LstmParams, AdamState, TrainHistory]:
    """Train per config; returns final parameters, optimizer state, history.

    The rng drives the weight init and one shuffle per epoch, in that
    order, so a given seed fixes the whole trajectory.
    """
    x_train = _batch_inputs(train_set)
    y_train = train_set.targets
    x_val = _batch_inputs(val_set)
    y_val = val_set.targets
    n = x_train.shape[0]
    if n == 0:
        raise ConfigError("training set is empty")
    expected_ndim = 3 if config.model == "lstm" else 2
    if x_train.ndim != expected_ndim:
        raise ConfigError(
            f"{config.model} model expects {expected_ndim}-d sample arrays, "
            f"got shape {x_train.shape}"
        )

    params_obj = init_model_params(config, x_train.shape[-1], rng)
    params = params_obj.to_dict()
    state = init_adam(params, lr=config.lr)
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = rng.shuffle(n)
        sq_sum = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            pred, cache = _forward(config.model, params_obj, xb)
            loss, dpred = models.mse_loss(pred, yb)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"epoch {epoch} batch {b}: non-finite training loss {loss}"
                )
            grads = _backward(config.model, params_obj, cache, dpred)
            if config.grad_clip is not None:
                clip_gradients(grads, config.grad_clip)
            adam_step(state, params, grads)
            sq_sum += loss * len(idx)

        history.train_mse.append(sq_sum / n)
        if x_val.shape[0]:
            val_pred = _predict_in_chunks(config.model, params_obj, x_val)
            history.val_mse.append(float(np.mean((val_pred - y_val) ** 2)))
        else:
            history.val_mse.append(float("nan"))
        history.epoch_seconds.append(time.perf_counter() - started)
        logger.info(
            "epoch %d/%d train_mse=%.4f val_mse=%.4f (%.1fs)",
            epoch, config.epochs,
            history.train_mse[-1], history.val_mse[-1], history.epoch_seconds[-1],
        )

    return params_obj, state, history


def evaluate(
    model: TrainedModel,
    test_trajectories: Sequence[EngineTrajectory],
    ruls: RulLabelFile,
    scaler: ScalerParams,
    config: TrainConfig,
    checkpoint_hash: str = "",
) -> EvalReport:
    """One prediction per test engine from its final window (or row).

    The i-th label pairs with the i-th engine in id order. Negative
    predictions are reported raw (they drive the MSE) with a clamped
    companion value.
    """
    if len(ruls) != len(test_trajectories):
        raise ValidationError(
            f"label count {len(ruls)} does not match test engine count "
            f"{len(test_trajectories)}"
        )
    if model.feature_names != scaler.feature_names:
        raise ValidationError("model feature order does not match the scaler")
    if model.scaler_hash and model.scaler_hash != scaler_hash(scaler):
        raise ValidationError(
            "checkpoint was trained against a different scaler (hash mismatch); "
            "re-run preprocessing or use the matching scaler.json"
        )
    selection = selection_from_feature_names(scaler.feature_names)

    windows, rows = [], []
    for traj in test_trajectories:
        w, r = prepare_test_engine(
            traj, scaler, selection,
            alpha=config.alpha, trim=config.trim, window=config.window,
        )
        windows.append(w)
        rows.append(r)
    x = np.stack(windows) if model.kind == "lstm" else np.stack(rows)
    preds = model.predict(x)

    rows_out = [
        EngineEval(
            engine_id=traj.engine_id,
            true_rul=float(label),
            predicted_rul=float(pred),
            predicted_rul_clamped=float(max(pred, 0.0)),
        )
        for traj, label, pred in zip(test_trajectories, ruls.ruls, preds)
    ]
    mse = float(np.mean([(r.predicted_rul - r.true_rul) ** 2 for r in rows_out]))
    return EvalReport(
        rows=rows_out,
        mse=mse,
        seed=model.seed,
        config_hash=model.config_hash,
        checkpoint_hash=checkpoint_hash,
    )


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def _flat_loss(kind: str, params_obj, x: np.ndarray, y: np.ndarray) -> float:
    pred, _ = _forward(kind, params_obj, x)
    loss, _ = models.mse_loss(pred, y)
    return loss


def numeric_gradients(
    kind: str, params_obj, x: np.ndarray, y: np.ndarray, eps: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central finite differences of the batch MSE w.r.t. every parameter."""
    out: dict[str, np.ndarray] = {}
    for name, tensor in params_obj.to_dict().items():
        grad = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = _flat_loss(kind, params_obj, x, y)
            flat[j] = orig - eps
            down = _flat_loss(kind, params_obj, x, y)
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * eps)
        out[name] = grad
    return out


def gradient_check_suite(
    model_kind: str,
    trials: int,
    rng: SeededRng,
    eps: float = 1e-5,
    kink_margin: float = 1e-3,
) -> float:
    """Worst relative gap between analytic and finite-difference gradients.

    Each trial draws a small random architecture, inputs and targets, and
    compares every coordinate with denominator max(1, |analytic|).

    Finite differences only approximate a derivative where the function is
    differentiable across the whole +/-eps interval, and relu has a kink
    at zero, so instances whose pre-activations land within kink_margin of
    zero are redrawn. The recurrent model is smooth everywhere and needs
    no such screening.
    """
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got {model_kind!r}")
    worst = 0.0
    gen = rng.generator
    for _ in range(trials):
        feats = int(gen.integers(1, 6))
        batch = int(gen.integers(1, 4))
        if model_kind == "lstm":
            hidden = int(gen.integers(1, 5))
            steps = int(gen.integers(1, 6))
            params_obj = models.init_lstm(feats, hidden, rng)
            x = rng.uniform(-1.0, 1.0, (batch, steps, feats))
            _, cache = _forward(model_kind, params_obj, x)
        else:
            while True:
                h1 = int(gen.integers(1, 7))
                h2 = int(gen.integers(1, 7))
                params_obj = models.init_mlp((feats, h1, h2, 1), rng)
                x = rng.uniform(-1.0, 1.0, (batch, feats))
                _, cache = _forward(model_kind, params_obj, x)
                if min(np.abs(z).min() for z in cache.pre_acts) > kink_margin:
                    break
        y = rng.uniform(0.0, 5.0, (batch,))

        pred, cache = _forward(model_kind, params_obj, x)
        _, dpred = models.mse_loss(pred, y)
        analytic = _backward(model_kind, params_obj, cache, dpred)
        numeric = numeric_gradients(model_kind, params_obj, x, y, eps)
        for name in analytic:
            ga = analytic[name].reshape(-1)
            gn = numeric[name].reshape(-1)
            rel = np.abs(ga - gn) / np.maximum(1.0, np.abs(ga))
            worst = max(worst, float(rel.max()))
    return worst


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "rulkit-checkpoint-v1"


def write_history_csv(path: Path | str, history: TrainHistory) -> None:
    lines = ["epoch,train_mse,val_mse"]
    for e, (tr, va) in enumerate(zip(history.train_mse, history.val_mse), start=1):
        lines.append(f"{e},{fmt_double(tr)},{fmt_double(va)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def checkpoint_dict(model: TrainedModel, adam_state: AdamState, config: TrainConfig) -> dict:
    if model.kind == "lstm":
        arch = {"hidden_size": model.params.hidden_size, "input_size": model.params.input_size}
    else:
        arch = {"layer_sizes": list(model.params.layer_sizes)}
    return {
        "format": CHECKPOINT_FORMAT,
        "model": model.kind,
        "gate_order": list(models.GATE_ORDER),
        "arch": arch,
        "window": model.window,
        "feature_names": list(model.feature_names),
        "scaler_hash": model.scaler_hash,
        "config": config.to_dict(),
        "config_hash": model.config_hash,
        "seed": model.seed,
        "params": {k: v.tolist() for k, v in model.params.to_dict().items()},
        "adam_state": adam_state.to_dict(),
    }


def write_checkpoint(
    path: Path | str, model: TrainedModel, adam_state: AdamState, config: TrainConfig
) -> None:
    atomic_write_text(path, canonical_json(checkpoint_dict(model, adam_state, config)) + "\n")


def load_checkpoint(path: Path | str) -> tuple[TrainedModel, AdamState, TrainConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"unrecognized checkpoint format in {path}")
    if d.get("gate_order") != list(models.GATE_ORDER):
        raise ValidationError(
            f"checkpoint gate order {d.get('gate_order')} does not match "
            f"this build's {list(models.GATE_ORDER)}"
        )
    tensors = {k: np.array(v, dtype=np.float64) for k, v in d["params"].items()}
    if d["model"] == "lstm":
        params = models.LstmParams.from_dict(tensors)
    elif d["model"] == "mlp":
        params = models.MlpParams.from_dict(tensors)
    else:
        raise ValidationError(f"unknown model kind {d['model']!r} in checkpoint")
    cfg_dict = dict(d["config"])
    cfg_dict["mlp_hidden"] = tuple(cfg_dict["mlp_hidden"])
    config = TrainConfig(**cfg_dict)
    model = TrainedModel(
        kind=d["model"],
        params=params,
        window=d["window"],
        feature_names=tuple(d["feature_names"]),
        scaler_hash=d["scaler_hash"],
        config_hash=d["config_hash"],
        seed=d["seed"],
    )
    return model, AdamState.from_dict(d["adam_state"]), config


def write_eval_report(path: Path | str, report: EvalReport) -> None:
    atomic_write_text(path, canonical_json(report.to_dict()) + "\n")


def write_predictions_csv(path: Path | str, report: EvalReport) -> None:
    lines = ["engine_id,true_rul,predicted_rul,predicted_rul_clamped"]
    for r in report.rows:
        lines.append(
            f"{r.engine_id},{fmt_double(r.true_rul)},"
            f"{fmt_double(r.predicted_rul)},{fmt_double(r.predicted_rul_clamped)}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")

"""Mini-batch truncated-BPTT training with Adam and a tau-freeze stage.

The training series is cut into ``batch_size`` contiguous lanes that are
processed side by side. Each lane is walked in time order in windows of
``t_max`` steps; the LSTM state is carried from one window to the next but
gradients stop at window boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data_io
from .data_io import TimeSeries
from .errors import ContractError, ModelFormatError, TrainingDiverged
from .model import LstmState, ModelConfig, ModelParameters, align_forecast, backward_tbptt, init_parameters
from .numerics import SeededRng, derive_seed

SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    tau_freeze_epochs: int | None = None
    seed: int = 0
    shuffle: bool = True
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.tau_freeze_epochs is None:
            object.__setattr__(self, "tau_freeze_epochs", int(0.2 * self.epochs))
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be >= 1")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ContractError("Adam betas must lie in (0, 1)")
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise ContractError("learning_rate and adam_eps must be positive")
        if not 0 <= self.tau_freeze_epochs <= self.epochs:
            raise ContractError(f"tau_freeze_epochs={self.tau_freeze_epochs} must lie in [0, epochs={self.epochs}]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParameters) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)

    def to_dict(self) -> dict:
        return {"m": data_io.encode_arrays(self.m), "v": data_io.encode_arrays(self.v), "step": self.step}

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        return cls(data_io.decode_arrays(d["m"], "adam_state.m"), data_io.decode_arrays(d["v"], "adam_state.v"), int(d["step"]))


@dataclass
class NormalizationSpec:
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray

    def __post_init__(self):
        for name in ("x_mean", "x_scale", "y_mean", "y_scale"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.any(self.x_scale <= 0) or np.any(self.y_scale <= 0):
            raise ContractError("normalization scales must be positive")

    @classmethod
    def identity(cls, p: int, q: int) -> "NormalizationSpec":
        return cls(np.zeros(p), np.ones(p), np.zeros(q), np.ones(q))

    def transform_x(self, xs):
        return (xs - self.x_mean) / self.x_scale

    def transform_y(self, ys):
        return (ys - self.y_mean) / self.y_scale

    def inverse_y(self, y_hat, sigma=None):
        mean = y_hat * self.y_scale + self.y_mean
        return mean if sigma is None else (mean, sigma * self.y_scale)

    def to_dict(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)] for k in ("x_mean", "x_scale", "y_mean", "y_scale")}

    @classmethod
    def from_dict(cls, d: dict, config: ModelConfig | None = None) -> "NormalizationSpec":
        try:
            spec = cls(*(np.array(d[k], dtype=np.float64) for k in ("x_mean", "x_scale", "y_mean", "y_scale")))
        except KeyError as exc:
            raise ModelFormatError(f"normalization.{exc.args[0]}: missing") from exc
        if config is not None:
            for k, n in (("x_mean", config.input_dim), ("x_scale", config.input_dim),
                         ("y_mean", config.output_dim), ("y_scale", config.output_dim)):
                if getattr(spec, k).shape != (n,):
                    raise ModelFormatError(f"normalization.{k}: expected {n} values")
        return spec


def fit_normalization(data: TimeSeries) -> NormalizationSpec:
    if len(data) == 0:
        raise ContractError("cannot fit normalization on an empty series")

    def stats(cols, binary_passthrough):
        mean = cols.mean(axis=0)
        scale = np.maximum(cols.std(axis=0), SCALE_FLOOR)
        if binary_passthrough:
            binary = np.all((cols == 0.0) | (cols == 1.0), axis=0)
            mean[binary] = 0.0
            scale[binary] = 1.0
        return mean, scale

    xm, xs = stats(data.xs, True)
    ym, ys = stats(data.ys, False)
    return NormalizationSpec(xm, xs, ym, ys)


def adam_step(params: ModelParameters, grads: dict, state: AdamState, config: TrainConfig, freeze_tau: bool = False):
    """One bias-corrected Adam update. Returns new ``(params, state)``."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    step = state.step + 1
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    frozen = params.tau_mask() if freeze_tau else None
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.arrays.items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        update = config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        if frozen is not None and frozen[name].any():
            keep = frozen[name]
            m = np.where(keep, state.m[name], m)
            v = np.where(keep, state.v[name], v)
            new_params[name] = np.where(keep, p, p - update)
        else:
            new_params[name] = p - update
        new_m[name], new_v[name] = m, v
    return ModelParameters(params.config, new_params), AdamState(new_m, new_v, step)


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale gradients in place to a global L2 norm of at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def _lanes(arr: np.ndarray, lanes: int) -> np.ndarray:
    n = len(arr) // lanes
    return arr[: n * lanes].reshape(lanes, n, arr.shape[1]).transpose(1, 0, 2)


@dataclass
class TrainResult:
    params: ModelParameters
    normalization: NormalizationSpec
    loss_history: list[float]
    adam: AdamState
    epoch: int = 0


@dataclass
class Checkpointing:
    path: str | None = None
    every: int = 0
    extra: dict = field(default_factory=dict)


def train(
    data: TimeSeries,
    mconfig: ModelConfig,
    tconfig: TrainConfig,
    *,
    resume: TrainResult | None = None,
    checkpoint: Checkpointing | None = None,
    stop_after: int | None = None,
    log=None,
) -> TrainResult:
    """Fit a model to ``data``; deterministic given the two configs.

    ``resume`` continues from a checkpoint state; ``stop_after`` ends the
    run after that many total epochs (used to produce checkpoints).
    """
    if data.input_dim != mconfig.input_dim or data.output_dim != mconfig.output_dim:
        raise ContractError(
            f"data has p={data.input_dim}, q={data.output_dim}; model expects "
            f"p={mconfig.input_dim}, q={mconfig.output_dim}"
        )
    if resume is None:
        norm = fit_normalization(data)
        params = init_parameters(mconfig, SeededRng(derive_seed(tconfig.seed, 0)))
        adam = AdamState.zeros(params)
        history: list[float] = []
        start = 0
    else:
        norm, params, adam = resume.normalization, resume.params, resume.adam
        history = list(resume.loss_history)
        start = resume.epoch

    xs, ys = align_forecast(norm.transform_x(data.xs), norm.transform_y(data.ys), mconfig.forecast_shift)
    t_max = mconfig.t_max
    end = tconfig.epochs if stop_after is None else min(stop_after, tconfig.epochs)

    for epoch in range(start, end):
        rng = SeededRng(derive_seed(tconfig.seed, 1, epoch))
        offset = rng.integers(t_max) if tconfig.shuffle and len(xs) > 2 * t_max else 0
        lanes = max(1, min(tconfig.batch_size, (len(xs) - offset) // t_max))
        X = _lanes(xs[offset:], lanes)
        Y = _lanes(ys[offset:], lanes)
        if len(X) == 0:
            raise ContractError("training series shorter than one window")
        state = LstmState.zeros(mconfig, lanes)
        freeze = epoch < tconfig.tau_freeze_epochs
        total, count = 0.0, 0
        for w in range(0, len(X), t_max):
            xw, yw = X[w:w + t_max], Y[w:w + t_max]
            with np.errstate(all="ignore"):
                grads, loss, state = backward_tbptt(params, xw, yw, state)
            n = xw.shape[0] * lanes
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            for g in grads.values():
                g /= n
            clip_gradients(grads, tconfig.clip_norm)
            with np.errstate(all="ignore"):
                params, adam = adam_step(params, grads, adam, tconfig, freeze_tau=freeze)
            total += loss
            count += n
        mean = total / count
        if not math.isfinite(mean):
            raise TrainingDiverged(epoch, mean)
        history.append(mean)
        if log is not None:
            log(epoch, mean)
        done = epoch + 1
        if checkpoint and checkpoint.path and checkpoint.every and done % checkpoint.every == 0:
            save_checkpoint(checkpoint.path, TrainResult(params, norm, history, adam, done), mconfig, tconfig, checkpoint.extra)
    return TrainResult(params, norm, history, adam, end)


def save_checkpoint(path, result: TrainResult, mconfig: ModelConfig, tconfig: TrainConfig, extra: dict | None = None) -> None:
    doc = data_io.model_document(result.params, result.normalization, tconfig.seed)
    doc["train_config"] = tconfig.to_dict()
    doc["adam_state"] = result.adam.to_dict()
    doc["epoch"] = result.epoch
    doc["loss_history"] = [float(v) for v in result.loss_history]
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[TrainResult, TrainConfig]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    params, norm = data_io.parse_model_document(doc)
    for key in ("adam_state", "epoch", "loss_history", "train_config"):
        if key not in doc:
            raise ModelFormatError(f"{key}: missing from checkpoint")
    tconfig = TrainConfig(**doc["train_config"])
    result = TrainResult(params, norm, list(doc["loss_history"]), AdamState.from_dict(doc["adam_state"]), int(doc["epoch"]))
    return result, tconfig


def predict_series(params: ModelParameters, norm: NormalizationSpec, data: TimeSeries, keep_cells: bool = False):
    """Run a trained model over ``data`` in original units.

    Returns ``(y_hat, sigma, targets, cells)`` aligned for the model's
    forecast shift (the last ``shift`` inputs have no target and are dropped).
    """
    from .model import run_sequence

    cfg = params.config
    if data.input_dim != cfg.input_dim or data.output_dim != cfg.output_dim:
        raise ContractError(
            f"data has p={data.input_dim}, q={data.output_dim}; model expects p={cfg.input_dim}, q={cfg.output_dim}"
        )
    xs, ys = align_forecast(norm.transform_x(data.xs), data.ys, cfg.forecast_shift)
    y_hat, tau, _, cells = run_sequence(params, xs, keep_cells=keep_cells)
    mean, sigma = norm.inverse_y(y_hat, np.exp(tau))
    return mean, sigma, ys, cells

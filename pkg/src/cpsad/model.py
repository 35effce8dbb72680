"""Stacked LSTM predicting a mean and a log standard deviation per output.

Each layer is a forget-gate LSTM without peepholes. Gate pre-activations are
stacked as ``[input, forget, output, candidate]`` along the first axis of the
``W`` (input-to-hidden), ``U`` (hidden-to-hidden) and ``b`` arrays. The top
hidden state goes through one tanh layer and an affine map to ``2q`` channels:
the first ``q`` are the predicted means, the last ``q`` are ``tau`` with
``sigma = exp(tau)``.

All forward/backward routines work on a batch axis so that the trainer can
push several lanes through at once; single-sequence calls use a batch of one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError, ModelFormatError, ShapeError
from .numerics import SeededRng


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    output_dim: int
    layer_sizes: tuple[int, ...] = (16,)
    head_hidden: int = 16
    t_max: int = 25
    forecast_shift: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if not 1 <= len(self.layer_sizes) <= 5:
            raise ContractError(f"need 1 to 5 LSTM layers, got {len(self.layer_sizes)}")
        dims = (self.input_dim, self.output_dim, self.head_hidden, self.t_max, *self.layer_sizes)
        if any(d < 1 for d in dims):
            raise ContractError(f"all dimensions and t_max must be >= 1: {self}")
        if self.forecast_shift < 0:
            raise ContractError("forecast_shift must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "layer_sizes": tuple(d["layer_sizes"])})

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        fan_in = self.input_dim
        for k, n in enumerate(self.layer_sizes):
            shapes[f"lstm{k}.W"] = (4 * n, fan_in)
            shapes[f"lstm{k}.U"] = (4 * n, n)
            shapes[f"lstm{k}.b"] = (4 * n,)
            fan_in = n
        shapes["head.W1"] = (self.head_hidden, fan_in)
        shapes["head.b1"] = (self.head_hidden,)
        shapes["head.W2"] = (2 * self.output_dim, self.head_hidden)
        shapes["head.b2"] = (2 * self.output_dim,)
        return shapes


@dataclass
class ModelParameters:
    config: ModelConfig
    arrays: dict[str, np.ndarray]

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict[str, np.ndarray]) -> "ModelParameters":
        shapes = config.param_shapes()
        missing = set(shapes) - set(arrays)
        if missing:
            raise ModelFormatError(f"parameters: missing {sorted(missing)}")
        extra = set(arrays) - set(shapes)
        if extra:
            raise ModelFormatError(f"parameters: unexpected {sorted(extra)}")
        out = {}
        for name, shape in shapes.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ModelFormatError(f"parameters.{name}: shape {arr.shape}, expected {shape}")
            out[name] = arr
        return cls(config, out)

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def tau_mask(self) -> dict[str, np.ndarray]:
        """Boolean mask selecting the output-head entries that only feed tau."""
        q = self.config.output_dim
        mask = {k: np.zeros(v.shape, dtype=bool) for k, v in self.arrays.items()}
        mask["head.W2"][q:] = True
        mask["head.b2"][q:] = True
        return mask

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])


@dataclass
class LstmState:
    """Per-layer hidden (short-term) and cell (long-term) state, batch-first."""

    h: list[np.ndarray]
    c: list[np.ndarray]

    @classmethod
    def zeros(cls, config: ModelConfig, batch: int = 1) -> "LstmState":
        return cls(
            [np.zeros((batch, n)) for n in config.layer_sizes],
            [np.zeros((batch, n)) for n in config.layer_sizes],
        )

    def copy(self) -> "LstmState":
        return LstmState([a.copy() for a in self.h], [a.copy() for a in self.c])

    def cells(self) -> np.ndarray:
        """All cell states concatenated across layers, shape (batch, sum(sizes))."""
        return np.concatenate(self.c, axis=1)


@dataclass
class Prediction:
    y_hat: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray = field(init=False)

    def __post_init__(self):
        self.y_hat = np.asarray(self.y_hat, dtype=np.float64)
        self.tau = np.asarray(self.tau, dtype=np.float64)
        self.sigma = np.exp(self.tau)


def init_parameters(config: ModelConfig, rng: SeededRng) -> ModelParameters:
    arrays = {}
    for name, shape in config.param_shapes().items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            s = 1.0 / np.sqrt(shape[1])
            arrays[name] = rng.uniform(shape, -s, s)
    for k, n in enumerate(config.layer_sizes):
        arrays[f"lstm{k}.b"][n:2 * n] = 1.0
    q = config.output_dim
    arrays["head.W2"][q:] = 0.0
    return ModelParameters(config, arrays)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _as_batch(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"expected input of width {dim}, got shape {x.shape}")
    return x, single


def _check_state(params: ModelParameters, state: LstmState, batch: int):
    sizes = params.config.layer_sizes
    if len(state.h) != len(sizes) or len(state.c) != len(sizes):
        raise ShapeError(f"state has {len(state.h)} layers, model has {len(sizes)}")
    for k, n in enumerate(sizes):
        if state.h[k].shape != (batch, n) or state.c[k].shape != (batch, n):
            raise ShapeError(f"layer {k} state shape {state.h[k].shape}, expected {(batch, n)}")


def _cell(params, k, u, h, c):
    a = params.arrays
    n = params.config.layer_sizes[k]
    z = u @ a[f"lstm{k}.W"].T + h @ a[f"lstm{k}.U"].T + a[f"lstm{k}.b"]
    i = _sigmoid(z[:, :n])
    f = _sigmoid(z[:, n:2 * n])
    o = _sigmoid(z[:, 2 * n:3 * n])
    g = np.tanh(z[:, 3 * n:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (i, f, o, g, tc)


def _head(params, h_top):
    a = params.arrays
    hid = np.tanh(h_top @ a["head.W1"].T + a["head.b1"])
    out = hid @ a["head.W2"].T + a["head.b2"]
    return out, hid


def forward_step(params: ModelParameters, state: LstmState, x) -> tuple[LstmState, Prediction]:
    x, single = _as_batch(x, params.config.input_dim)
    _check_state(params, state, x.shape[0])
    hs, cs = [], []
    u = x
    for k in range(len(params.config.layer_sizes)):
        h, c, _ = _cell(params, k, u, state.h[k], state.c[k])
        hs.append(h)
        cs.append(c)
        u = h
    out, _ = _head(params, u)
    q = params.config.output_dim
    y_hat, tau = out[:, :q], out[:, q:]
    if single:
        y_hat, tau = y_hat[0], tau[0]
    return LstmState(hs, cs), Prediction(y_hat, tau)


def run_sequence(params: ModelParameters, xs, initial: LstmState | None = None, keep_cells: bool = False):
    """Array form of :func:`forward_sequence` for one sequence.

    Returns ``(y_hat (T, q), tau (T, q), final_state, cells)`` where ``cells``
    is ``(T, sum(layer_sizes))`` when ``keep_cells`` else None.
    """
    cfg = params.config
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, cfg.input_dim)
    state = LstmState.zeros(cfg) if initial is None else initial.copy()
    _check_state(params, state, 1)
    T = len(xs)
    q = cfg.output_dim
    out = np.empty((T, 2 * q))
    cells = np.empty((T, sum(cfg.layer_sizes))) if keep_cells else None
    h, c = list(state.h), list(state.c)
    for t in range(T):
        u = xs[t:t + 1]
        for k in range(len(cfg.layer_sizes)):
            h[k], c[k], _ = _cell(params, k, u, h[k], c[k])
            u = h[k]
        out[t] = _head(params, u)[0][0]
        if keep_cells:
            cells[t] = np.concatenate([ck[0] for ck in c])
    return out[:, :q], out[:, q:], LstmState(h, c), cells


def forward_sequence(params: ModelParameters, xs, initial: LstmState | None = None):
    """Iterate :func:`forward_step`, returning every prediction and state."""
    state = LstmState.zeros(params.config) if initial is None else initial
    preds, states = [], []
    for x in np.asarray(xs, dtype=np.float64).reshape(-1, params.config.input_dim):
        state, pred = forward_step(params, state, x)
        preds.append(pred)
        states.append(state)
    return preds, states


def nll_loss(y, pred: Prediction) -> float:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != pred.y_hat.shape:
        raise ShapeError(f"target shape {y.shape} does not match prediction {pred.y_hat.shape}")
    r = (y - pred.y_hat) / pred.sigma
    return float(np.sum(r * r + 2.0 * pred.tau))


def nll_loss_grad(y, pred: Prediction) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != pred.y_hat.shape:
        raise ShapeError(f"target shape {y.shape} does not match prediction {pred.y_hat.shape}")
    diff = y - pred.y_hat
    r = diff / pred.sigma
    return -2.0 * diff / pred.sigma**2, 2.0 * (1.0 - r * r)


def align_forecast(xs, ys, shift: int):
    """Pair input ``t`` with target ``t + shift``."""
    if shift == 0:
        return xs, ys
    return xs[:len(xs) - shift], ys[shift:]


def backward_tbptt(params: ModelParameters, xs, ys, initial: LstmState | None = None):
    """Loss and exact gradient over one truncation window.

    ``xs`` is ``(T, p)`` or ``(T, B, p)`` and ``ys`` correspondingly. The
    window-initial state is a constant: no gradient flows into it. Returns
    ``(grads, loss, final_state)`` with the loss summed over time, lanes and
    channels.
    """
    cfg = params.config
    a = params.arrays
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim == 2:
        xs, ys = xs[:, None, :], ys[:, None, :]
    T, B = xs.shape[:2]
    if T > cfg.t_max:
        raise ContractError(f"window of {T} steps exceeds t_max={cfg.t_max}")
    if xs.shape[2] != cfg.input_dim or ys.shape != (T, B, cfg.output_dim):
        raise ShapeError(f"window shapes {xs.shape} / {ys.shape} do not match the model")
    state = LstmState.zeros(cfg, B) if initial is None else initial
    _check_state(params, state, B)

    L = len(cfg.layer_sizes)
    q = cfg.output_dim
    h_prev = [[None] * T for _ in range(L)]
    c_prev = [[None] * T for _ in range(L)]
    inputs = [[None] * T for _ in range(L)]
    gates = [[None] * T for _ in range(L)]
    tops, hids, d_outs = [], [], []
    h, c = list(state.h), list(state.c)
    loss = 0.0
    for t in range(T):
        u = xs[t]
        for k in range(L):
            inputs[k][t], h_prev[k][t], c_prev[k][t] = u, h[k], c[k]
            h[k], c[k], gates[k][t] = _cell(params, k, u, h[k], c[k])
            u = h[k]
        out, hid = _head(params, u)
        y_hat, tau = out[:, :q], out[:, q:]
        sigma = np.exp(tau)
        diff = ys[t] - y_hat
        r = diff / sigma
        loss += float(np.sum(r * r + 2.0 * tau))
        d_outs.append(np.concatenate([-2.0 * diff / sigma**2, 2.0 * (1.0 - r * r)], axis=1))
        tops.append(u)
        hids.append(hid)

    grads = params.zeros_like()
    dh_next = [np.zeros_like(x) for x in state.h]
    dc_next = [np.zeros_like(x) for x in state.c]
    for t in range(T - 1, -1, -1):
        d_out, hid = d_outs[t], hids[t]
        grads["head.W2"] += d_out.T @ hid
        grads["head.b2"] += d_out.sum(axis=0)
        d_pre = (d_out @ a["head.W2"]) * (1.0 - hid * hid)
        grads["head.W1"] += d_pre.T @ tops[t]
        grads["head.b1"] += d_pre.sum(axis=0)
        dh = d_pre @ a["head.W1"]
        for k in range(L - 1, -1, -1):
            i, f, o, g, tc = gates[k][t]
            dh = dh + dh_next[k]
            dc = dc_next[k] + dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev[k][t] * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ], axis=1)
            grads[f"lstm{k}.W"] += dz.T @ inputs[k][t]
            grads[f"lstm{k}.U"] += dz.T @ h_prev[k][t]
            grads[f"lstm{k}.b"] += dz.sum(axis=0)
            dh_next[k] = dz @ a[f"lstm{k}.U"]
            dc_next[k] = dc * f
            dh = dz @ a[f"lstm{k}.W"]
    return grads, loss, LstmState(h, c)


def window_loss(params: ModelParameters, xs, ys, initial: LstmState | None = None) -> float:
    """Summed NLL over a window by forward pass only (finite-difference oracle)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim == 2:
        xs, ys = xs[:, None, :], ys[:, None, :]
    state = LstmState.zeros(params.config, xs.shape[1]) if initial is None else initial
    total = 0.0
    for t in range(len(xs)):
        state, pred = forward_step(params, state, xs[t])
        total += nll_loss(ys[t], pred)
    return total

"""Central finite-difference check of the truncated-BPTT gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LstmState, ModelConfig, ModelParameters, backward_tbptt, init_parameters, window_loss
from .numerics import SeededRng


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    analytic: float
    numeric: float
    n_checked: int


def relative_error(analytic, numeric, floor: float = 1e-6):
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries from dominating."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def random_problem(config: ModelConfig, seed: int, steps: int | None = None, scale: float = 0.5):
    """Random parameters (tau rows included), inputs, targets and a non-zero initial state."""
    rng = SeededRng(seed)
    params = init_parameters(config, rng.spawn(1))
    noise = rng.spawn(2)
    for name, arr in params.arrays.items():
        arr += noise.normal(arr.shape, sd=scale)
    T = config.t_max if steps is None else steps
    data = rng.spawn(3)
    xs = data.normal((T, config.input_dim))
    ys = data.normal((T, config.output_dim))
    init = LstmState(
        [data.normal((1, n), sd=0.5) for n in config.layer_sizes],
        [data.normal((1, n), sd=0.5) for n in config.layer_sizes],
    )
    return params, xs, ys, init


def numeric_gradient(params: ModelParameters, xs, ys, initial, step: float = 1e-5) -> dict[str, np.ndarray]:
    grads = {}
    for name, arr in params.arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = window_loss(params, xs, ys, initial)
            flat[j] = orig - step
            down = window_loss(params, xs, ys, initial)
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def gradient_check(config: ModelConfig, seed: int, step: float = 1e-5, corrupt: bool = False) -> GradCheckResult:
    params, xs, ys, init = random_problem(config, seed)
    analytic, _, _ = backward_tbptt(params, xs, ys, init)
    if corrupt:
        # negative control: perturb one analytic entry
        analytic["lstm0.U"].flat[0] += 1.0
    numeric = numeric_gradient(params, xs, ys, init, step)
    worst = (-1.0, "", (), 0.0, 0.0)
    count = 0
    for name in params.arrays:
        err = relative_error(analytic[name], numeric[name])
        count += err.size
        idx = np.unravel_index(int(np.argmax(err)), err.shape)
        if err[idx] > worst[0]:
            worst = (float(err[idx]), name, tuple(int(i) for i in idx), float(analytic[name][idx]), float(numeric[name][idx]))
    return GradCheckResult(worst[0], worst[1], worst[2], worst[3], worst[4], count)

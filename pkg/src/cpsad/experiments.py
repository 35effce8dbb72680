"""End-to-end scenario runs shared by the experiment scripts and the acceptance suite.

Each function trains a fresh model on simulated normal data, runs it over a
test series and returns the quantities the scenario is judged on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anomaly import Threshold, classify, detect, residuals
from .model import ModelConfig
from .numerics import SeededRng
from .simulators import (
    BLOCKAGE, Anomaly, AnomalySchedule, PowerDemandParams, WaterTankParams, default_holidays,
    periodic_toy_generate, power_demand_generate, water_tank_simulate,
)
from .trainer import TrainConfig, TrainResult, predict_series, train


@dataclass(frozen=True)
class TankExperiment:
    train_steps: int = 2000
    test_steps: int = 10_000
    blockage_start: int = 6000
    blockage_length: int = 300
    blockage_factor: float = 0.75
    train_seed: int = 1
    test_seed: int = 2
    model: ModelConfig = field(default_factory=lambda: ModelConfig(1, 1, (16,), 16, 50))
    training: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=300, batch_size=8, learning_rate=0.01))
    threshold: float = 4.0


@dataclass
class TankOutcome:
    fit: TrainResult
    residuals: np.ndarray  # (T,) on the test run
    labels: np.ndarray
    blockage_start: int
    normal_within: float  # fraction of normal test points with |r| < threshold
    onset_max: float  # largest |r| over the first five blockage steps


def run_watertank(cfg: TankExperiment = TankExperiment(), log=None) -> TankOutcome:
    params = WaterTankParams()
    train_ts = water_tank_simulate(params, cfg.train_steps, rng=SeededRng(cfg.train_seed))
    fit = train(train_ts, cfg.model, cfg.training, log=log)
    blockage = Anomaly(cfg.blockage_start, cfg.blockage_start + cfg.blockage_length, BLOCKAGE, cfg.blockage_factor)
    test = water_tank_simulate(params, cfg.test_steps, AnomalySchedule([blockage]), SeededRng(cfg.test_seed))
    mean, sigma, ys, _ = predict_series(fit.params, fit.normalization, test)
    r = residuals(ys, mean, sigma)[:, 0]
    normal = ~test.labels
    onset = np.abs(r[cfg.blockage_start:cfg.blockage_start + 5])
    return TankOutcome(
        fit, r, test.labels, cfg.blockage_start,
        float(np.mean(np.abs(r[normal]) < cfg.threshold)), float(onset.max()),
    )


@dataclass(frozen=True)
class ToyExperiment:
    period: int = 30
    cycles: int = 100
    seed: int = 3
    model: ModelConfig = field(default_factory=lambda: ModelConfig(1, 2, (16,), 16, 30))
    training: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=300, batch_size=8, learning_rate=0.01))
    warmup_cycles: int = 2


@dataclass
class ToyOutcome:
    fit: TrainResult
    sigma: np.ndarray  # (T, 2) learned
    residuals: np.ndarray  # (T, 2)
    true_ratio: float
    learned_ratio: float  # mean sigma on high-noise phases / low-noise phases, channel 0
    coverage: dict[str, float]  # within-1-sigma fraction: gaussian channel, uniform channel, pooled


def run_toy(cfg: ToyExperiment = ToyExperiment(), log=None) -> ToyOutcome:
    data, truth = periodic_toy_generate(cfg.period, cfg.cycles, SeededRng(cfg.seed))
    fit = train(data, cfg.model, cfg.training, log=log)
    mean, sigma, ys, _ = predict_series(fit.params, fit.normalization, data)
    r = residuals(ys, mean, sigma)
    phase = np.arange(len(data)) % cfg.period
    settled = np.arange(len(data)) >= cfg.warmup_cycles * cfg.period
    high = truth.high_noise_phases[phase]
    learned = sigma[settled & high, 0].mean() / sigma[settled & ~high, 0].mean()
    true_ratio = truth.sd[truth.high_noise_phases, 0].mean() / truth.sd[~truth.high_noise_phases, 0].mean()
    within = np.abs(r) <= 1.0
    coverage = {"gaussian": float(within[:, 0].mean()), "uniform": float(within[:, 1].mean()),
                "pooled": float(within.mean())}
    return ToyOutcome(fit, sigma, r, float(true_ratio), float(learned), coverage)


@dataclass(frozen=True)
class PowerExperiment:
    steps_per_day: int = 6
    days: int = 364
    train_weeks: int = 12
    seed: int = 5
    seasonal_amplitude: float = 0.05
    model: ModelConfig = field(default_factory=lambda: ModelConfig(2, 1, (16,), 16, 50))
    training: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=600, batch_size=4, learning_rate=0.005))
    warn_r: float = 4.0
    alarm_r: float = 8.0
    beta: float = 0.1


@dataclass
class PowerOutcome:
    fit: TrainResult
    residuals: np.ndarray
    labels: np.ndarray
    holidays: tuple[int, ...]
    alarms_per_holiday: dict[int, int]
    precision: float | None
    recall: float | None
    f_beta: float | None
    warned: int
    alarmed: int


def run_power(cfg: PowerExperiment = PowerExperiment(), log=None) -> PowerOutcome:
    params = PowerDemandParams(steps_per_day=cfg.steps_per_day, days=cfg.days,
                               holiday_days=default_holidays(cfg.days), seasonal_amplitude=cfg.seasonal_amplitude)
    year = power_demand_generate(params, SeededRng(cfg.seed))
    train_ts = year.slice(0, cfg.train_weeks * 7 * cfg.steps_per_day)
    if train_ts.labels.any():
        raise ValueError("training span contains a holiday; shorten train_weeks")
    fit = train(train_ts, cfg.model, cfg.training, log=log)
    mean, sigma, ys, _ = predict_series(fit.params, fit.normalization, year)
    r = residuals(ys, mean, sigma)
    report = detect(r, Threshold.from_r(cfg.alarm_r), year.labels, cfg.beta, warn=Threshold.from_r(cfg.warn_r))
    day = np.arange(len(year)) // cfg.steps_per_day
    per_holiday = {d: int(report.predicted[day == d].sum()) for d in params.holiday_days}
    return PowerOutcome(
        fit, r, year.labels, params.holiday_days, per_holiday,
        report.precision, report.recall, report.f_beta,
        int(report.warn.sum()), int(report.predicted.sum()),
    )


def exceedance_fractions(res, levels=(1.0, 2.0, 3.0)) -> dict[float, float]:
    return {R: float(classify(res, R).mean()) for R in levels}

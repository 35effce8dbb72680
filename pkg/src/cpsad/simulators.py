"""Seedable generators for the benchmark scenarios.

* a level-controlled water tank (root-square outflow, hysteresis valve) with
  optional injected faults,
* a two-channel periodic toy signal whose noise level depends on the phase,
* a synthetic power-demand series with daily/weekly cycles and holidays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data_io import TimeSeries
from .errors import ContractError
from .numerics import SeededRng

BLOCKAGE = "outflow-blockage"
SENSOR_OFFSET = "sensor-offset"
SENSOR_SCALE = "sensor-scale"
ANOMALY_KINDS = (BLOCKAGE, SENSOR_OFFSET, SENSOR_SCALE)


@dataclass(frozen=True)
class WaterTankParams:
    a: float = 0.5
    inflow: float = 2.5
    h_low: float = 1.0
    h_high: float = 9.0
    h0: float = 4.0
    noise_coeff: float = 0.02
    dt: float = 0.15

    def __post_init__(self):
        if not 0 <= self.h_low < self.h_high:
            raise ContractError("need 0 <= h_low < h_high")
        if self.a <= 0 or self.inflow <= 0 or self.dt <= 0:
            raise ContractError("a, inflow and dt must be positive")
        if self.h0 < 0 or self.noise_coeff < 0:
            raise ContractError("h0 and noise_coeff must be non-negative")


@dataclass(frozen=True)
class Anomaly:
    start: int
    end: int
    kind: str
    magnitude: float

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ContractError(f"unknown anomaly kind {self.kind!r}; expected one of {ANOMALY_KINDS}")
        if self.magnitude <= 0:
            raise ContractError("anomaly magnitude must be positive")
        if not 0 <= self.start < self.end:
            raise ContractError(f"anomaly interval [{self.start}, {self.end}) is empty or negative")


@dataclass
class AnomalySchedule:
    anomalies: list[Anomaly] = field(default_factory=list)

    def __post_init__(self):
        spans = sorted(self.anomalies, key=lambda an: an.start)
        for prev, nxt in zip(spans, spans[1:]):
            if nxt.start < prev.end:
                raise ContractError(f"anomaly intervals overlap: {prev} and {nxt}")
        self.anomalies = spans

    def active(self, t: int) -> Anomaly | None:
        for an in self.anomalies:
            if an.start <= t < an.end:
                return an
        return None


def tank_noise_sd(q_out: float, noise_coeff: float) -> float:
    """Observation noise sd, proportional to the outflow magnitude."""
    return noise_coeff * abs(q_out)


def water_tank_simulate(
    params: WaterTankParams,
    steps: int,
    schedule: AnomalySchedule | None = None,
    rng: SeededRng | None = None,
    *,
    valve_override: int | None = None,
    return_levels: bool = False,
):
    """Simulate ``steps`` samples of the tank.

    Emits ``x = [valve]`` and ``y = [q_out + noise]``; labels mark the
    scheduled anomaly intervals. ``valve_override`` pins the valve (0 or 1)
    and disables the controller. With ``return_levels`` the true level at
    every step is returned as well.
    """
    if steps < 1:
        raise ContractError("steps must be >= 1")
    schedule = schedule or AnomalySchedule()
    rng = rng or SeededRng(0)
    noise = rng.normal(steps) if params.noise_coeff > 0 else np.zeros(steps)
    h = params.h0
    valve = 0 if valve_override is None else valve_override
    xs = np.empty(steps)
    ys = np.empty(steps)
    labels = np.zeros(steps, dtype=bool)
    levels = np.empty(steps)
    for t in range(steps):
        if valve_override is None:
            if valve == 0 and h <= params.h_low:
                valve = 1
            elif valve == 1 and h >= params.h_high:
                valve = 0
        an = schedule.active(t)
        a_eff = params.a * an.magnitude if an is not None and an.kind == BLOCKAGE else params.a
        q_out = a_eff * math.sqrt(h)
        y = q_out + tank_noise_sd(q_out, params.noise_coeff) * noise[t]
        if an is not None and an.kind == SENSOR_OFFSET:
            y += an.magnitude
        elif an is not None and an.kind == SENSOR_SCALE:
            y *= an.magnitude
        xs[t], ys[t], labels[t], levels[t] = valve, y, an is not None, h
        h = max(0.0, h + params.dt * (params.inflow * valve - q_out))
    series = TimeSeries(xs[:, None], ys[:, None], labels, ["valve"], ["qout"])
    return (series, levels) if return_levels else series


@dataclass
class ToyTruth:
    mean: np.ndarray  # (period, 2)
    sd: np.ndarray  # (period, 2)
    high_noise_phases: np.ndarray  # bool (period,), channel 0


def periodic_toy_generate(
    period: int,
    cycles: int,
    rng: SeededRng,
    *,
    sd_low: float = 0.05,
    sd_high: float = 0.3,
    uniform_half_width: float = 0.2,
) -> tuple[TimeSeries, ToyTruth]:
    """Two periodic signals driven by a once-per-period impulse.

    Channel 0 carries Gaussian noise with ``sd_high`` on the second half of
    each period and ``sd_low`` on the first; channel 1 carries uniform noise.
    """
    if period < 4:
        raise ContractError("period must be >= 4")
    if cycles < 1:
        raise ContractError("cycles must be >= 1")
    phase = np.arange(period)
    w0 = np.sin(2 * np.pi * phase / period)
    w1 = np.where(phase < period // 3, 0.8, -0.4) + 0.4 * np.cos(4 * np.pi * phase / period)
    high = phase >= period // 2
    sd0 = np.where(high, sd_high, sd_low)
    sd1 = np.full(period, uniform_half_width / math.sqrt(3.0))

    n = period * cycles
    g = rng.normal(n)
    u = rng.uniform(n, -1.0, 1.0)
    t_phase = np.arange(n) % period
    ys = np.stack([w0[t_phase] + sd0[t_phase] * g, w1[t_phase] + uniform_half_width * u], axis=1)
    xs = (t_phase == 0).astype(np.float64)[:, None]
    series = TimeSeries(xs, ys, None, ["impulse"], ["gauss", "uniform"])
    return series, ToyTruth(np.stack([w0, w1], axis=1), np.stack([sd0, sd1], axis=1), high)


@dataclass(frozen=True)
class PowerDemandParams:
    steps_per_day: int = 96
    days: int = 364
    base_night: float = 1.0
    base_day: float = 2.0
    weekend_factor: float = 0.15
    holiday_days: tuple[int, ...] = ()
    noise_sd: float = 0.05
    seasonal_amplitude: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "holiday_days", tuple(sorted(int(d) for d in self.holiday_days)))
        if self.steps_per_day < 4:
            raise ContractError("steps_per_day must be >= 4")
        if self.days < 1:
            raise ContractError("days must be >= 1")
        for d in self.holiday_days:
            if not 0 <= d < self.days:
                raise ContractError(f"holiday day {d} outside [0, {self.days})")
        if self.noise_sd < 0:
            raise ContractError("noise_sd must be >= 0")

    def daytime(self) -> np.ndarray:
        """Boolean (steps_per_day,) mask of the working-hours plateau."""
        s = self.steps_per_day
        phase = np.arange(s)
        return (phase >= round(s / 3)) & (phase < round(5 * s / 6))


DAYS_PER_WEEK = 7
YEAR_DAYS = 364


def is_weekend(day: int) -> bool:
    """Day 0 is the first working day of a week; days 5 and 6 are the weekend."""
    return day % DAYS_PER_WEEK >= 5


def power_demand_generate(params: PowerDemandParams, rng: SeededRng) -> TimeSeries:
    for d in params.holiday_days:
        if is_weekend(d):
            raise ContractError(f"holiday on day {d} falls on a weekend and would be undetectable")
    s, days = params.steps_per_day, params.days
    n = s * days
    day = np.arange(n) // s
    phase = np.arange(n) % s
    workday = np.array([not is_weekend(d) and d not in params.holiday_days for d in range(days)])
    level = np.where(workday[day], 1.0, params.weekend_factor)
    excess = (params.base_day - params.base_night) * level * params.daytime()[phase]
    seasonal = 1.0 + params.seasonal_amplitude * np.cos(2 * np.pi * (day + phase / s) / YEAR_DAYS)
    ys = (params.base_night + excess) * seasonal
    if params.noise_sd > 0:
        ys = ys + rng.normal(n, sd=params.noise_sd)
    xs = np.stack([phase == 0, (phase == 0) & (day % DAYS_PER_WEEK == 0)], axis=1).astype(np.float64)
    labels = np.isin(day, params.holiday_days)
    return TimeSeries(xs, ys[:, None], labels, ["day_start", "week_start"], ["power"])


def default_holidays(days: int) -> tuple[int, ...]:
    """Eight workday holidays spread over a year, moved off weekends."""
    raw = (87, 90, 120, 125, 128, 139, 359, 360)
    out = []
    for d in raw:
        while is_weekend(d) or d in out:
            d += 1
        if d < days:
            out.append(d)
    return tuple(out)


# --------------------------------------------------------------------------
# named presets used by the command line


def scenario_watertank(steps: int, seed: int, anomaly: Anomaly | None = None) -> TimeSeries:
    schedule = AnomalySchedule([anomaly] if anomaly else [])
    return water_tank_simulate(WaterTankParams(), steps, schedule, SeededRng(seed))


def default_blockage(steps: int, start: int | None = None, length: int | None = None, magnitude: float = 0.75) -> Anomaly:
    start = int(0.6 * steps) if start is None else start
    length = max(1, int(0.03 * steps)) if length is None else length
    if start + length > steps:
        raise ContractError(f"anomaly window [{start}, {start + length}) exceeds {steps} steps")
    return Anomaly(start, start + length, BLOCKAGE, magnitude)


def scenario_toy(steps: int, seed: int, period: int = 30) -> TimeSeries:
    cycles = max(1, steps // period)
    return periodic_toy_generate(period, cycles, SeededRng(seed))[0]


def scenario_power(steps: int, seed: int, steps_per_day: int = 96, holidays: tuple[int, ...] | None = None,
                   **overrides) -> TimeSeries:
    days = max(1, steps // steps_per_day)
    hol = default_holidays(days) if holidays is None else holidays
    params = PowerDemandParams(steps_per_day=steps_per_day, days=days, holiday_days=hol, **overrides)
    return power_demand_generate(params, SeededRng(seed))


SCENARIOS = ("watertank-normal", "watertank-blockage25", "toy-fig3", "powerdemand-analog")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsad.errors import ContractError
from cpsad.numerics import SeededRng
from cpsad.simulators import (
    BLOCKAGE, SENSOR_OFFSET, SENSOR_SCALE, Anomaly, AnomalySchedule, PowerDemandParams, WaterTankParams,
    default_holidays, is_weekend, periodic_toy_generate, power_demand_generate, water_tank_simulate,
)


class TestWaterTank:
    def test_root_square_step(self):
        p = WaterTankParams(a=0.5, inflow=1.0, h_low=1.0, h_high=9.0, h0=4.0, noise_coeff=0.0, dt=1.0)
        ts, levels = water_tank_simulate(p, 2, rng=SeededRng(0), return_levels=True)
        assert ts.xs[0, 0] == 0.0
        assert ts.ys[0, 0] == 1.0
        assert levels[1] == 3.0

    def test_blockage_reduces_flux(self):
        p = WaterTankParams(a=0.5, inflow=1.0, h_low=1.0, h_high=9.0, h0=4.0, noise_coeff=0.0, dt=1.0)
        ts = water_tank_simulate(p, 1, AnomalySchedule([Anomaly(0, 1, BLOCKAGE, 0.75)]))
        assert ts.ys[0, 0] == 0.75
        assert ts.labels.tolist() == [True]

    def test_drain_matches_analytic(self):
        p = WaterTankParams(a=0.5, inflow=1.0, h_low=0.0, h_high=9.0, h0=4.0, noise_coeff=0.0, dt=1e-3)
        steps = 7000  # empties at t = 2 sqrt(h0) / a = 8
        _, levels = water_tank_simulate(p, steps, valve_override=0, return_levels=True)
        t = np.arange(steps) * p.dt
        analytic = np.sqrt(4.0) - 0.5 / 2 * t
        assert np.max(np.abs(np.sqrt(levels) - analytic)) <= 1e-3

    def test_sensor_faults(self):
        p = WaterTankParams(noise_coeff=0.0)
        base = water_tank_simulate(p, 30)
        off = water_tank_simulate(p, 30, AnomalySchedule([Anomaly(10, 20, SENSOR_OFFSET, 0.3)]))
        sc = water_tank_simulate(p, 30, AnomalySchedule([Anomaly(10, 20, SENSOR_SCALE, 2.0)]))
        np.testing.assert_allclose(off.ys[10:20] - base.ys[10:20], 0.3, rtol=1e-12)
        np.testing.assert_allclose(sc.ys[10:20], 2 * base.ys[10:20], rtol=1e-15)
        assert np.array_equal(off.ys[20:], base.ys[20:])

    def test_labels_inclusive_exclusive(self):
        ts = water_tank_simulate(WaterTankParams(), 50, AnomalySchedule([Anomaly(10, 20, BLOCKAGE, 0.75)]))
        assert np.flatnonzero(ts.labels).tolist() == list(range(10, 20))

    def test_overlap_rejected(self):
        with pytest.raises(ContractError):
            AnomalySchedule([Anomaly(0, 10, BLOCKAGE, 0.5), Anomaly(5, 15, BLOCKAGE, 0.5)])

    def test_invalid_params(self):
        with pytest.raises(ContractError):
            WaterTankParams(h_low=5, h_high=5)
        with pytest.raises(ContractError):
            Anomaly(0, 5, BLOCKAGE, 0.0)

    def test_level_non_negative_and_hysteresis(self):
        p = WaterTankParams(a=2.0, inflow=2.5, noise_coeff=0.05)
        ts, levels = water_tank_simulate(p, 3000, rng=SeededRng(4), return_levels=True)
        assert levels.min() >= 0
        valve = ts.xs[:, 0]
        changes = np.flatnonzero(np.diff(valve)) + 1
        for t in changes:
            assert not (p.h_low < levels[t] < p.h_high)

    def test_eventually_periodic(self):
        ts, levels = water_tank_simulate(WaterTankParams(noise_coeff=0.0), 3000, return_levels=True)
        valve = ts.xs[:, 0]
        opens = np.flatnonzero(np.diff(valve) == 1) + 1
        periods = np.diff(opens)
        assert len(periods) >= 5 and len(set(periods[2:].tolist())) == 1
        period = int(periods[-1])
        a, b = opens[-2], opens[-1]
        assert np.max(np.abs(levels[a:b] - levels[a - period:b - period])) <= 1e-9

    def test_cycle_length(self):
        ts = water_tank_simulate(WaterTankParams(noise_coeff=0.0), 2000)
        opens = np.flatnonzero(np.diff(ts.xs[:, 0]) == 1)
        assert 80 <= np.diff(opens).mean() <= 120

    def test_noise_proportional(self):
        p = WaterTankParams(noise_coeff=0.02)
        clean = water_tank_simulate(WaterTankParams(noise_coeff=0.0), 20000)
        noisy = water_tank_simulate(p, 20000, rng=SeededRng(9))
        rel = (noisy.ys - clean.ys) / clean.ys
        assert abs(rel.std() - 0.02) < 0.001

    def test_deterministic(self):
        a = water_tank_simulate(WaterTankParams(), 500, rng=SeededRng(3))
        b = water_tank_simulate(WaterTankParams(), 500, rng=SeededRng(3))
        assert a.equals(b)


class TestToy:
    def test_zero_noise_is_waveform(self):
        ts, truth = periodic_toy_generate(10, 5, SeededRng(0), sd_low=0, sd_high=0, uniform_half_width=0)
        phase = np.arange(50) % 10
        assert np.array_equal(ts.ys, truth.mean[phase])

    def test_impulse_count(self):
        ts, _ = periodic_toy_generate(7, 13, SeededRng(0))
        assert ts.xs.sum() == 13
        assert np.flatnonzero(ts.xs[:, 0]).tolist() == list(range(0, 91, 7))

    def test_per_phase_sd(self):
        period = 8
        ts, truth = periodic_toy_generate(period, 10_000, SeededRng(12))
        noise = ts.ys - np.tile(truth.mean, (10_000, 1))
        emp = noise.reshape(10_000, period, 2).std(axis=0)
        np.testing.assert_allclose(emp, truth.sd, rtol=0.03)

    def test_noise_ratio(self):
        _, truth = periodic_toy_generate(30, 1, SeededRng(0))
        hi = truth.sd[truth.high_noise_phases, 0].mean()
        lo = truth.sd[~truth.high_noise_phases, 0].mean()
        assert hi / lo >= 4

    def test_short_period(self):
        with pytest.raises(ContractError):
            periodic_toy_generate(3, 5, SeededRng(0))


class TestPowerDemand:
    def test_degenerate_is_daily_periodic(self):
        p = PowerDemandParams(steps_per_day=8, days=21, weekend_factor=1.0, noise_sd=0.0, seasonal_amplitude=0.0)
        ys = power_demand_generate(p, SeededRng(0)).ys[:, 0]
        assert np.array_equal(ys[8:], ys[:-8])

    def test_holiday_labels(self):
        hol = (2, 8, 15)
        p = PowerDemandParams(steps_per_day=6, days=21, holiday_days=hol)
        ts = power_demand_generate(p, SeededRng(0))
        assert ts.labels.sum() == len(hol) * 6

    def test_weekend_holiday_rejected(self):
        with pytest.raises(ContractError):
            power_demand_generate(PowerDemandParams(steps_per_day=6, days=14, holiday_days=(5,)), SeededRng(0))

    def test_inputs(self):
        ts = power_demand_generate(PowerDemandParams(steps_per_day=6, days=14), SeededRng(0))
        assert np.flatnonzero(ts.xs[:, 0]).tolist() == list(range(0, 84, 6))
        assert np.flatnonzero(ts.xs[:, 1]).tolist() == [0, 42]

    def test_levels(self):
        days = 364
        p = PowerDemandParams(steps_per_day=24, days=days, holiday_days=default_holidays(days),
                              seasonal_amplitude=0.0, noise_sd=0.1)
        ts = power_demand_generate(p, SeededRng(2))
        day = np.arange(len(ts)) // 24
        daytime = p.daytime()[np.arange(len(ts)) % 24]
        hol = np.isin(day, p.holiday_days)
        weekend = np.array([is_weekend(d) for d in day])
        work = daytime & ~hol & ~weekend
        weekend_level = p.base_night + p.weekend_factor * (p.base_day - p.base_night)
        y = ts.ys[:, 0]
        assert abs(y[work].mean() - p.base_day) <= 3 * p.noise_sd / math.sqrt(work.sum())
        sel = daytime & hol
        assert abs(y[sel].mean() - weekend_level) <= 3 * p.noise_sd / math.sqrt(sel.sum())

    def test_default_holidays_are_workdays(self):
        hol = default_holidays(364)
        assert len(hol) == 8 and not any(is_weekend(d) for d in hol)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**40))
def test_generators_deterministic(seed):
    a = periodic_toy_generate(6, 5, SeededRng(seed))[0]
    b = periodic_toy_generate(6, 5, SeededRng(seed))[0]
    assert a.equals(b)
    p = PowerDemandParams(steps_per_day=4, days=14)
    assert power_demand_generate(p, SeededRng(seed)).equals(power_demand_generate(p, SeededRng(seed)))

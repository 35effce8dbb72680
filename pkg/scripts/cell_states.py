#!/usr/bin/env python3
"""Compare LSTM cell states with the hidden water level of the tank.

Trains a tank model, runs it over a blockage scenario and reports the cell
unit whose trace correlates best with the true level, before and during the
fault. The traces go to ``cell_states.csv``.
"""

import argparse
from pathlib import Path

import numpy as np

from cpsad.data_io import write_table
from cpsad.experiments import TankExperiment
from cpsad.numerics import SeededRng
from cpsad.simulators import BLOCKAGE, Anomaly, AnomalySchedule, WaterTankParams, water_tank_simulate
from cpsad.trainer import predict_series, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/cells"))
    ap.add_argument("--steps", type=int, default=1500)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    cfg = TankExperiment()
    params = WaterTankParams()
    fit = train(water_tank_simulate(params, cfg.train_steps, rng=SeededRng(cfg.train_seed)), cfg.model, cfg.training)
    start = args.steps // 2
    fault = Anomaly(start, start + args.steps // 5, BLOCKAGE, cfg.blockage_factor)
    test, level = water_tank_simulate(params, args.steps, AnomalySchedule([fault]), SeededRng(cfg.test_seed),
                                      return_levels=True)
    _, _, _, cells = predict_series(fit.params, fit.normalization, test, keep_cells=True)

    corr = np.array([np.corrcoef(cells[:start, k], level[:start])[0, 1] for k in range(cells.shape[1])])
    best = int(np.nanargmax(np.abs(corr)))
    inside = slice(fault.start, fault.end)
    print(f"cell {best} tracks the level best before the fault: corr {corr[best]:+.3f}")
    print(f"during the fault: corr {np.corrcoef(cells[inside, best], level[inside])[0, 1]:+.3f}")

    header = ["t", "level", "label"] + [f"c:{k}" for k in range(cells.shape[1])]
    write_table(args.out / "cell_states.csv", header,
                [(str(t), level[t], "1" if test.labels[t] else "0", *cells[t]) for t in range(len(test))])


if __name__ == "__main__":
    main()

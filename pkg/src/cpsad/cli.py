"""Command line front end: simulate, train, detect, evaluate, gradcheck, report.

Exit codes: 0 success, 2 usage error, 3 training divergence, 4 data/model
mismatch or unreadable data, 5 gradient check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import anomaly, simulators
from .data_io import TimeSeries, load_model, read_csv, read_table, save_model, write_csv, write_table
from .errors import ContractError, ModelFormatError, ParseError, ShapeError, TrainingDiverged
from .gradcheck import gradient_check
from .model import ModelConfig
from .trainer import Checkpointing, TrainConfig, load_checkpoint, predict_series, save_checkpoint, train

EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_DATA = 4
EXIT_GRADCHECK = 5

REQUIRED = {
    "simulate": ("scenario", "out"),
    "train": ("data", "out"),
    "detect": ("model", "data", "out"),
    "evaluate": ("labels",),
    "gradcheck": (),
    "report": ("residuals", "out_dir"),
}


class UsageError(Exception):
    pass


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _emit(**kv) -> None:
    for k, v in kv.items():
        if v is None:
            v = "n/a"
        elif isinstance(v, float):
            v = repr(v)
        print(f"{k}={v}")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="cpsad", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        p.add_argument("--config", help="JSON file with flag defaults (flags override it)")
        return p

    p = add("simulate", "write a labeled scenario time series as CSV")
    p.add_argument("--scenario", choices=simulators.SCENARIOS, help="scenario preset")
    p.add_argument("--steps", type=int, default=5000, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--anomaly-start", type=int, default=None, help="first anomalous step (default 60%% of steps)")
    p.add_argument("--anomaly-length", type=int, default=None, help="anomaly length (default 3%% of steps)")
    p.add_argument("--anomaly-kind", choices=simulators.ANOMALY_KINDS, default=simulators.BLOCKAGE)
    p.add_argument("--anomaly-magnitude", type=float, default=0.75,
                   help="outflow factor for blockage, offset or scale for sensor faults")
    p.add_argument("--period", type=int, default=30, help="toy signal period")
    p.add_argument("--steps-per-day", type=int, default=96, help="power-demand sampling")
    p.add_argument("--holidays", type=_ints, default=None, help="power-demand holiday day indices")

    p = add("train", "train a model on a CSV time series")
    p.add_argument("--data", help="training CSV")
    p.add_argument("--out", help="model file to write")
    p.add_argument("--loss-log", default=None, help="per-epoch loss CSV (default: <out>.loss.csv)")
    p.add_argument("--layers", type=_ints, default=(16,), help="LSTM layer sizes, e.g. 16,16")
    p.add_argument("--head-hidden", type=int, default=16)
    p.add_argument("--t-max", type=int, default=25, help="truncation window length")
    p.add_argument("--forecast-shift", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None, help="default 100, or the checkpoint's value on --resume")
    p.add_argument("--batch-size", type=int, default=16, help="number of parallel lanes")
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--tau-freeze-epochs", type=int, default=None, help="default: 20%% of epochs")
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-shuffle", action="store_true", help="disable the random per-epoch lane offset")
    p.add_argument("--checkpoint", default=None, help="checkpoint file path")
    p.add_argument("--checkpoint-every", type=int, default=0, help="write a checkpoint every N epochs")
    p.add_argument("--resume", default=None, help="resume from this checkpoint")
    p.add_argument("--stop-after", type=int, default=None, help="stop after this many epochs in total")

    p = add("detect", "score a series with a trained model")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out", help="report JSON path")
    p.add_argument("--residuals-out", default=None, help="per-point CSV (default: <out>.residuals.csv)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--alpha", type=float, default=None, help="expected false-positive rate")
    group.add_argument("--r", type=float, default=None, help="residual threshold (default 3)")
    p.add_argument("--warn-r", type=float, default=None, help="warning level for dual-threshold mode")
    p.add_argument("--alarm-r", type=float, default=None, help="alarm level for dual-threshold mode")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--export-states", action="store_true", help="add LSTM cell states to the residual CSV")

    p = add("evaluate", "precision/recall/F-beta of a detection against labels")
    p.add_argument("--report", default=None, help="report JSON from detect")
    p.add_argument("--residuals", default=None, help="residual CSV from detect (needs --r or --alpha)")
    p.add_argument("--labels", help="CSV with a label column")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--alpha", type=float, default=None)
    group.add_argument("--r", type=float, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out", default=None, help="metrics JSON path")

    p = add("gradcheck", "compare analytic gradients with central finite differences")
    p.add_argument("--layers", type=_ints, default=(8, 8))
    p.add_argument("--input-dim", type=int, default=2)
    p.add_argument("--output-dim", type=int, default=2)
    p.add_argument("--head-hidden", type=int, default=8)
    p.add_argument("--t-max", type=int, default=10)
    p.add_argument("--seeds", type=_ints, default=(0, 1, 2))
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--corrupt-gradient", action="store_true", help="test hook: perturb one analytic entry")

    p = add("report", "plot-data CSVs from a residual file")
    p.add_argument("--residuals")
    p.add_argument("--out-dir")
    p.add_argument("--limit", type=float, default=5.0, help="histogram range is [-limit, limit]")
    p.add_argument("--bins", type=int, default=40)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config {args.config}: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults = {}
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if dest not in known:
                parser.error(f"unknown key {key!r} in --config")
            if dest in ("layers", "seeds", "holidays") and not isinstance(value, str):
                value = tuple(value)
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [f"--{d.replace('_', '-')}" for d in REQUIRED[args.command] if getattr(args, d) is None]
    if missing:
        parser.error(f"{args.command}: missing required flag(s) {', '.join(missing)}")
    return parser, args


# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    name = args.scenario
    if name == "watertank-normal":
        series = simulators.scenario_watertank(args.steps, args.seed)
    elif name == "watertank-blockage25":
        an = simulators.default_blockage(args.steps, args.anomaly_start, args.anomaly_length, args.anomaly_magnitude)
        if args.anomaly_kind != simulators.BLOCKAGE:
            an = simulators.Anomaly(an.start, an.end, args.anomaly_kind, args.anomaly_magnitude)
        series = simulators.scenario_watertank(args.steps, args.seed, an)
    elif name == "toy-fig3":
        series = simulators.scenario_toy(args.steps, args.seed, args.period)
    else:
        series = simulators.scenario_power(args.steps, args.seed, args.steps_per_day, args.holidays)
    write_csv(series, args.out)
    frac = float(np.mean(series.labels)) if series.labels is not None and len(series) else 0.0
    _emit(scenario=name, steps=len(series), anomaly_fraction=frac, out=args.out)
    return 0


def _write_loss_log(path, history) -> None:
    write_table(path, ["epoch", "loss"], [(str(i), v) for i, v in enumerate(history)])


def cmd_train(args) -> int:
    data = read_csv(args.data)
    tconfig = None
    resume = None
    if args.resume:
        resume, tconfig = load_checkpoint(args.resume)
        mconfig = resume.params.config
        if args.epochs is not None:
            tconfig = TrainConfig(**{**tconfig.to_dict(), "epochs": args.epochs})
    else:
        args.epochs = 100 if args.epochs is None else args.epochs
        mconfig = ModelConfig(data.input_dim, data.output_dim, args.layers, args.head_hidden, args.t_max,
                              args.forecast_shift)
        if args.tau_freeze_epochs is not None and args.tau_freeze_epochs > args.epochs:
            raise UsageError("--tau-freeze-epochs must not exceed --epochs")
        tconfig = TrainConfig(args.epochs, args.batch_size, args.learning_rate, args.beta1, args.beta2, args.eps,
                              args.tau_freeze_epochs, args.seed, not args.no_shuffle, args.clip_norm)
    ckpt = Checkpointing(args.checkpoint, args.checkpoint_every) if args.checkpoint else None
    result = train(data, mconfig, tconfig, resume=resume, checkpoint=ckpt, stop_after=args.stop_after)
    save_model(result.params, result.normalization, args.out, seed=tconfig.seed)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, result, mconfig, tconfig)
    loss_log = args.loss_log or f"{args.out}.loss.csv"
    _write_loss_log(loss_log, result.loss_history)
    h = result.loss_history
    _emit(epochs=result.epoch, initial_loss=h[0] if h else None, final_loss=h[-1] if h else None,
          model=args.out, loss_log=loss_log)
    return 0


def _threshold(args) -> anomaly.Threshold:
    if args.alpha is not None:
        return anomaly.threshold_for_fp_rate(args.alpha)
    return anomaly.Threshold.from_r(3.0 if args.r is None else args.r)


def cmd_detect(args) -> int:
    params, norm, _ = load_model(args.model)
    data = read_csv(args.data)
    cfg = params.config
    if data.input_dim != cfg.input_dim or data.output_dim != cfg.output_dim:
        raise ShapeError(f"data has p={data.input_dim}, q={data.output_dim}; model expects "
                         f"p={cfg.input_dim}, q={cfg.output_dim}")
    if (args.warn_r is None) != (args.alarm_r is None):
        raise UsageError("--warn-r and --alarm-r must be given together")
    dual = args.alarm_r is not None
    if dual and (args.alpha is not None or args.r is not None):
        raise UsageError("dual mode (--warn-r/--alarm-r) excludes --alpha and --r")
    thr = anomaly.Threshold.from_r(args.alarm_r) if dual else _threshold(args)
    warn = anomaly.Threshold.from_r(args.warn_r) if dual else None

    mean, sigma, ys, cells = predict_series(params, norm, data, keep_cells=args.export_states)
    res = anomaly.residuals(ys, mean, sigma)
    shift = cfg.forecast_shift
    times = data.time[shift:]
    truth = None if data.labels is None else data.labels[shift:]
    report = anomaly.detect(res, thr, truth, args.beta, warn)
    doc = report.to_dict()
    doc["t"] = [float(t) for t in times]
    Path(args.out).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    names = data.y_names
    header = ["t"] + [f"y:{n}" for n in names] + [f"yhat:{n}" for n in names] + [f"sigma:{n}" for n in names]
    header += [f"r:{n}" for n in names] + ["flag"]
    if dual:
        header.append("warn")
    if truth is not None:
        header.append("label")
    if cells is not None:
        header += [f"c:{k}" for k in range(cells.shape[1])]
    rows = []
    for i in range(len(res)):
        row = [times[i], *ys[i], *mean[i], *sigma[i], *res[i], "1" if report.predicted[i] else "0"]
        if dual:
            row.append("1" if report.warn[i] else "0")
        if truth is not None:
            row.append("1" if truth[i] else "0")
        if cells is not None:
            row += list(cells[i])
        rows.append(row)
    res_path = args.residuals_out or f"{args.out}.residuals.csv"
    write_table(res_path, header, rows)
    _emit(points=len(res), flagged=int(report.predicted.sum()),
          flagged_fraction=float(report.predicted.mean()) if len(res) else 0.0,
          threshold_r=thr.r, threshold_alpha=thr.alpha,
          warned=int(report.warn.sum()) if dual else None,
          precision=report.precision, recall=report.recall, f_beta=report.f_beta,
          report=args.out, residuals=res_path)
    return 0


def _residual_columns(header):
    return [i for i, h in enumerate(header) if h.startswith("r:")]


def cmd_evaluate(args) -> int:
    if (args.report is None) == (args.residuals is None):
        raise UsageError("give exactly one of --report and --residuals")
    labels_ts = read_csv(args.labels)
    if labels_ts.labels is None:
        raise ContractError(f"{args.labels} has no label column")
    if args.report:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
        predicted = np.array(doc["predicted"], dtype=bool)
        times = np.array(doc.get("t", labels_ts.time[: len(predicted)]), dtype=np.float64)
        thr_r, thr_alpha = doc.get("threshold_r"), doc.get("threshold_alpha")
    else:
        if args.r is None and args.alpha is None:
            raise UsageError("--residuals needs --r or --alpha")
        thr = _threshold(args)
        header, table = read_table(args.residuals)
        cols = _residual_columns(header)
        if not cols or header[0] != "t":
            raise ParseError(f"{args.residuals}: row 1: expected a t column and r: columns")
        predicted = anomaly.classify(table[:, cols], thr)
        times = table[:, 0]
        thr_r, thr_alpha = thr.r, thr.alpha
    index = {t: i for i, t in enumerate(labels_ts.time)}
    try:
        truth = labels_ts.labels[[index[t] for t in times]]
    except KeyError as exc:
        raise ContractError(f"time {exc.args[0]!r} of the detection is missing from {args.labels}") from exc
    if len(truth) != len(predicted):
        raise ContractError(f"{len(predicted)} predictions but {len(truth)} labels")
    rep = anomaly.evaluate(predicted, truth, args.beta)
    rep.threshold_r, rep.threshold_alpha = thr_r, thr_alpha
    metrics = {k: v for k, v in rep.to_dict().items() if k != "predicted"}
    if args.out:
        Path(args.out).write_text(json.dumps(metrics, indent=1) + "\n", encoding="utf-8")
    _emit(precision=rep.precision, recall=rep.recall, f_beta=rep.f_beta, beta=rep.beta,
          tp=rep.tp, fp=rep.fp, tn=rep.tn, fn=rep.fn)
    return 0


def cmd_gradcheck(args) -> int:
    cfg = ModelConfig(args.input_dim, args.output_dim, args.layers, args.head_hidden, args.t_max)
    worst = None
    for seed in args.seeds:
        res = gradient_check(cfg, seed, args.step, corrupt=args.corrupt_gradient)
        where = f"{res.worst_param}[{','.join(map(str, res.worst_index))}]"
        _emit(seed=seed, max_rel_error=res.max_rel_error, worst_param=where, checked=res.n_checked)
        if worst is None or res.max_rel_error > worst[0]:
            worst = (res.max_rel_error, where)
    ok = worst[0] < args.tol
    _emit(max_rel_error=worst[0], worst_param=worst[1], tolerance=args.tol, status="pass" if ok else "fail")
    return 0 if ok else EXIT_GRADCHECK


def cmd_report(args) -> int:
    header, table = read_table(args.residuals)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rcols = _residual_columns(header)
    ccols = [i for i, h in enumerate(header) if h.startswith("c:")]
    res = table[:, rcols]

    hist_rows = []
    if res.size:
        cal = anomaly.residual_calibration(res, args.limit, args.bins)
        e = cal.bin_edges
        hist_rows = [(e[i], e[i + 1], str(int(cal.counts[i])), cal.normal_density[i]) for i in range(len(cal.counts))]
        _emit(points=len(res), within_1=cal.within[1], within_2=cal.within[2], within_3=cal.within[3])
    else:
        _emit(points=0)
    write_table(out / "histogram.csv", ["bin_left", "bin_right", "count", "normal_density"], hist_rows)

    tcol = [header.index("t")] if "t" in header else []
    trace_cols = tcol + rcols + [i for i, h in enumerate(header) if h in ("flag", "warn", "label")]
    write_table(out / "residual_trace.csv", [header[i] for i in trace_cols], table[:, trace_cols].tolist())
    if ccols:
        extra = [i for i, h in enumerate(header) if h == "label"]
        cols = tcol + ccols + extra
        write_table(out / "state_trace.csv", [header[i] for i in cols], table[:, cols].tolist())
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser, args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"diverged_epoch={exc.epoch}")
        return EXIT_DIVERGED
    except (ParseError, ShapeError, ContractError, ModelFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())

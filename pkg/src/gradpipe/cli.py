"""Command-line driver.

Subcommands: ``run`` (train end to end), ``predict`` (analytic totals
from a calibration/params file), ``calibrate`` (measure stage times and
network parameters), ``compare`` (measured vs predicted iteration
times), ``chart`` (SVGs from existing CSVs).

Exit codes: 0 success, 2 configuration error, 3 transport failure,
4 prediction disagreement above threshold in ``compare``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .compression import Codec
from .errors import ConfigError, GradPipeError, TransportError
from .harness import (
    ExperimentConfig,
    calibrate,
    calibration_text,
    compare_prediction,
    compare_table,
    config_from_mapping,
    load_config_file,
    parse_breakdown_csv,
    parse_calibration,
    parse_kv_text,
    parse_metrics_csv,
    prediction_table,
    run_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_THRESHOLD = 4


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--mode", choices=["ps_sync", "d_sync", "pipe_sgd"])
    parser.add_argument("--workers", type=int)
    parser.add_argument("--codec", choices=["none", "trunc16", "quant8"])
    parser.add_argument("--k", dest="depth", type=int, help="pipeline depth K")
    parser.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    parser.add_argument("--transport", choices=["inproc", "tcp"])
    parser.add_argument("--roster", help="host:port per line, one per rank")
    parser.add_argument("--rank", type=int, help="this process's rank (tcp)")
    parser.add_argument("--inject-alpha-ms", dest="inject_alpha_ms", type=float)
    parser.add_argument("--inject-mbps", dest="inject_mbps", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--iters", dest="iterations", type=int)
    parser.add_argument("--lr", dest="learning_rate", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--eval-interval", dest="eval_interval", type=int)
    parser.add_argument("--dataset", choices=["synthetic-convex", "mnist"])
    parser.add_argument("--mnist-images", dest="mnist_images")
    parser.add_argument("--mnist-labels", dest="mnist_labels")
    parser.add_argument("--model", choices=["logistic", "mlp"])
    parser.add_argument("--hidden", help="comma-separated hidden layer sizes")
    parser.add_argument("--clock", choices=["monotonic", "logical"])
    parser.add_argument("--out", dest="out_dir", help="output directory")


def _gather_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict[str, str] = {}
    if args.config:
        values.update(load_config_file(args.config))
    for key in (
        "mode workers codec depth warmup_epochs transport roster rank "
        "inject_alpha_ms inject_mbps seed iterations learning_rate batch_size "
        "eval_interval dataset mnist_images mnist_labels model hidden clock out_dir"
    ).split():
        value = getattr(args, key, None)
        if value is not None:
            values[key] = str(value)
    return config_from_mapping(values)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _gather_config(args)
    result = run_experiment(config)
    where = f" -> {result.out_dir}" if result.out_dir else ""
    print(
        f"{config.mode} p={config.workers} T={config.iterations} "
        f"codec={config.codec.name.lower()}: wall {result.wall_seconds:.3f} s, "
        f"final loss {result.final_loss:.6f}, "
        f"accuracy {result.final_accuracy:.4f}{where}"
    )
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    stages, cluster = parse_calibration(parse_kv_text(Path(args.params).read_text()))
    text, csv_text = prediction_table(args.iters, args.k, stages, cluster)
    print(text, end="")
    if args.csv:
        Path(args.csv).write_text(csv_text)
        print(f"wrote {args.csv}")
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    config = _gather_config(args)
    stages, cluster = calibrate(config)
    text = calibration_text(stages, cluster)
    print(text, end="")
    if args.out_file:
        Path(args.out_file).write_text(text)
        print(f"wrote {args.out_file}")
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    stages, cluster = parse_calibration(parse_kv_text(Path(args.params).read_text()))
    measured = []
    for path in args.measured:
        measured.extend(parse_breakdown_csv(Path(path).read_text()))
    rows = compare_prediction(measured, stages, cluster, args.threshold)
    print(compare_table(rows), end="")
    return EXIT_THRESHOLD if any(r.flagged for r in rows) else EXIT_OK


def _cmd_chart(args: argparse.Namespace) -> int:
    from .charts import accuracy_chart, breakdown_chart, loss_chart

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.metrics:
        runs = [
            (Path(p).stem if Path(p).stem != "metrics" else Path(p).parent.name,
             parse_metrics_csv(Path(p).read_text()))
            for p in args.metrics
        ]
        if any(any(acc is not None for *_, acc in rows) for _, rows in runs):
            accuracy_chart(runs, out / "accuracy_vs_wallclock.svg")
            wrote.append("accuracy_vs_wallclock.svg")
        loss_chart(runs, out / "loss_vs_wallclock.svg")
        wrote.append("loss_vs_wallclock.svg")
    if args.breakdown:
        reports = []
        for path in args.breakdown:
            reports.extend(parse_breakdown_csv(Path(path).read_text()))
        breakdown_chart(reports, out / "breakdown.svg")
        wrote.append("breakdown.svg")
    if not wrote:
        raise ConfigError("chart needs --metrics and/or --breakdown inputs")
    print(f"wrote {', '.join(wrote)} in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradpipe",
        description="distributed SGD runner with ring collectives and timing models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one training experiment")
    _add_run_flags(run_p)
    run_p.set_defaults(fn=_cmd_run)

    pred_p = sub.add_parser("predict", help="analytic runtime totals")
    pred_p.add_argument("--params", required=True, help="calibration/params file")
    pred_p.add_argument("--iters", type=int, default=1000)
    pred_p.add_argument("--k", type=int, default=2)
    pred_p.add_argument("--csv", help="also write totals as CSV")
    pred_p.set_defaults(fn=_cmd_predict)

    cal_p = sub.add_parser("calibrate", help="measure stage and network parameters")
    _add_run_flags(cal_p)
    cal_p.add_argument("--out-file", dest="out_file", help="write calibration here")
    cal_p.set_defaults(fn=_cmd_calibrate)

    cmp_p = sub.add_parser("compare", help="measured vs predicted iteration times")
    cmp_p.add_argument("--params", required=True, help="calibration/params file")
    cmp_p.add_argument(
        "--measured", nargs="+", required=True, help="breakdown.csv files"
    )
    cmp_p.add_argument("--threshold", type=float, default=0.25)
    cmp_p.set_defaults(fn=_cmd_compare)

    chart_p = sub.add_parser("chart", help="render SVGs from CSV outputs")
    chart_p.add_argument("--metrics", nargs="*", default=[])
    chart_p.add_argument("--breakdown", nargs="*", default=[])
    chart_p.add_argument("--out", dest="out_dir", required=True)
    chart_p.set_defaults(fn=_cmd_chart)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as err:
        print(f"transport failure: {err}", file=sys.stderr)
        return EXIT_TRANSPORT
    except GradPipeError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

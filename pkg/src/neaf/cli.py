"""``neaf`` command line: fetch, run, sweep, report, gradcheck.

Settings resolve as flag > ``--config`` JSON file > built-in default.
Exit codes: 0 ok, 2 bad configuration, 3 data or I/O error, 4 gradient
check outside tolerance.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

from neaf import data, experiment, gradcheck
from neaf.experiment import ConfigError, RunConfig

log = logging.getLogger("neaf")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

GRADCHECK_PROBE_TOL = 1e-5
GRADCHECK_NET_TOL = 1e-4

_BASIS_ALIASES = {"xabsx": "xabsx", "absx3": "absx3", "x3": "x3"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS  # absent flags must not shadow the config file
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--activation", choices=["relu", "swish", "neaf"], default=S)
    p.add_argument("--basis", choices=sorted(_BASIS_ALIASES), default=S)
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--with-bias", action="store_true", default=S)
    p.add_argument("--swish-beta", type=float, default=S)
    p.add_argument("--trainable-beta", action="store_true", default=S)
    p.add_argument("--hidden", type=lambda s: tuple(int(v) for v in s.split(",")), default=S,
                   help="comma-separated hidden sizes, e.g. 512,50")
    p.add_argument("--learning-rate", type=float, default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--batch-size", type=int, default=S)
    p.add_argument("--eval-every", type=int, default=S)
    p.add_argument("--gate-epoch", type=int, default=S)
    p.add_argument("--a1", type=float, default=S)
    p.add_argument("--a2", type=float, default=S)
    p.add_argument("--realizations", type=int, default=S)
    p.add_argument("--base-seed", type=int, default=S)
    p.add_argument("--workers", type=int, default=S)
    p.add_argument("--hist-lo", type=float, default=S)
    p.add_argument("--hist-hi", type=float, default=S)
    p.add_argument("--hist-bins", type=int, default=S)
    p.add_argument("--dataset", choices=["mnist", "synthetic"], default=S)
    p.add_argument("--data-dir", default=S)
    p.add_argument("--synthetic-train", type=int, default=S)
    p.add_argument("--synthetic-test", type=int, default=S)
    p.add_argument("--data-seed", type=int, default=S)
    p.add_argument("--no-wall-time", dest="record_wall_time", action="store_false", default=S,
                   help="write wall_ms as 0 so runs.csv is byte-reproducible")
    p.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neaf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fetch", help="download and verify the MNIST files")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--base-url", default=data.DEFAULT_BASE_URL)

    p = sub.add_parser("run", help="train a single realization")
    _add_run_flags(p)
    p.add_argument("--index", type=int, default=0, help="realization index used to derive the seed")

    p = sub.add_parser("sweep", help="train many realizations and write CSVs")
    _add_run_flags(p)

    p = sub.add_parser("report", help="rebuild hist.csv and summary from runs.csv")
    p.add_argument("--in", dest="runs", required=True, help="runs.csv from a sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--hist-lo", type=float, default=argparse.SUPPRESS)
    p.add_argument("--hist-hi", type=float, default=argparse.SUPPRESS)
    p.add_argument("--hist-bins", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=None, help="output directory (default: next to runs.csv)")

    p = sub.add_parser("gradcheck", help="finite-difference check of every activation kind")
    p.add_argument("--probes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


_RUN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def parse_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional JSON file and explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - _RUN_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update(loaded)
    for name, value in vars(args).items():
        if name in _RUN_FIELDS:
            values[name] = value
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _write_resolved(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_summary(summary: experiment.Summary, path: Path) -> None:
    path.write_text(json.dumps(dataclasses.asdict(summary), indent=2) + "\n", encoding="utf-8")


def _print_summary(s: experiment.Summary) -> None:
    print(f"non-converged {s.non_converged}  mid-band {s.mid_band}  accepted {s.accepted}"
          f"  (numeric failures {s.numeric_failures})")
    if s.accepted_mean is not None:
        print(f"accepted accuracy mean {s.accepted_mean:.6f} std {s.accepted_std:.6f}"
              f" min {s.accepted_min:.6f} max {s.accepted_max:.6f}")
    if s.mean_epochs_run is not None:
        print(f"mean epochs run {s.mean_epochs_run:.2f}")


def _fmt(r: float) -> str:
    return "nan" if math.isnan(r) else f"{r:.6f}"


def cmd_fetch(args) -> int:
    directory = args.data_dir or os.environ.get("NEAF_DATA_DIR") or "data"
    for path in data.fetch_mnist(args.base_url, directory):
        print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = parse_config(args)
    out = Path(args.out)
    _write_resolved(cfg, out)
    train, test = experiment.load_datasets(cfg)
    seed = experiment.derive_seed(cfg.base_seed, args.index)
    rec = experiment.run_realization(cfg, seed, train, test, args.index)
    experiment.write_trace_csv(out / "trace.csv", [rec])
    print(f"index {rec.index} seed {rec.seed} outcome {rec.outcome.value} final_accuracy {_fmt(rec.final_accuracy)}"
          f" epochs_run {rec.epochs_run} wall_ms {rec.wall_ms}" + (" numeric_failure" if rec.numeric_failure else ""))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = parse_config(args)
    out = Path(args.out)
    _write_resolved(cfg, out)
    train, test = experiment.load_datasets(cfg)

    def progress(rec):
        log.info("realization %d: %s %s after %d epochs", rec.index, rec.outcome.value, _fmt(rec.final_accuracy), rec.epochs_run)

    result = experiment.run_sweep(cfg, train, test, on_record=progress)
    runs = out / "runs.csv"
    experiment.write_runs_csv(runs, result.records, cfg)
    experiment.write_trace_csv(out / "trace.csv", result.records)
    # histogram from the serialized accuracies so `report` reproduces it exactly
    hist = experiment.histogram_from_runs(runs, cfg.hist_lo, cfg.hist_hi, cfg.hist_bins)
    (out / "hist.csv").write_text(experiment.histogram_csv(hist), encoding="utf-8")
    summary = experiment.summarize(experiment.read_runs_csv(runs))
    _write_summary(summary, out / "summary.json")
    _print_summary(summary)
    return EXIT_OK


def cmd_report(args) -> int:
    runs = Path(args.runs)
    out = Path(args.out) if args.out else runs.parent
    settings = {"hist_lo": 0.982, "hist_hi": 0.986, "hist_bins": 20}
    resolved = Path(args.config) if args.config else runs.parent / "config.resolved.json"
    if resolved.exists():
        loaded = json.loads(resolved.read_text(encoding="utf-8"))
        settings.update({k: loaded[k] for k in settings if k in loaded})
    settings.update({k: v for k, v in vars(args).items() if k in settings})
    lo, hi, bins = settings["hist_lo"], settings["hist_hi"], settings["hist_bins"]
    if not lo < hi or bins < 1:
        raise ConfigError("need hist_lo < hist_hi and hist_bins >= 1")

    out.mkdir(parents=True, exist_ok=True)
    hist = experiment.histogram_from_runs(runs, lo, hi, bins)
    (out / "hist.csv").write_text(experiment.histogram_csv(hist), encoding="utf-8")
    summary = experiment.summarize(experiment.read_runs_csv(runs))
    _write_summary(summary, out / "summary.json")
    _print_summary(summary)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(args.probes, args.seed)
    ok = True
    print(f"{'kind':22s} {'activation':>12s} {'network':>12s}")
    for name, (probe, net) in results.items():
        good = probe < GRADCHECK_PROBE_TOL and net < GRADCHECK_NET_TOL
        ok &= good
        print(f"{name:22s} {probe:12.3e} {net:12.3e}  {'ok' if good else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"fetch": cmd_fetch, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"neaf: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"neaf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (data.DataError, OSError, ValueError) as exc:
        print(f"neaf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

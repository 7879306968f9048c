"""Multi-realization training protocol with an early convergence gate.

Each realization trains a freshly seeded network, evaluates test accuracy
every ``eval_every`` epochs (plus once at ``gate_epoch`` and at the last
epoch), and is abandoned as non-converged if the gate accuracy is below
``a1``. Surviving runs are classified against ``a2``.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import logging
import math
import multiprocessing
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from neaf.activations import ActivationKind, Basis
from neaf.data import Dataset, epoch_batches, load_mnist, make_synthetic
from neaf.network import NetworkSpec, NumericFailure, evaluate, init_network, loss_and_grads
from neaf.optim import Nadam

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15

RUNS_HEADER = ["index", "seed", "activation", "basis", "gamma", "outcome", "final_accuracy", "epochs_run", "wall_ms"]
TRACE_HEADER = ["index", "epoch", "test_accuracy"]
HIST_HEADER = ["bin_lo", "bin_hi", "count"]


class Outcome(str, enum.Enum):
    NON_CONVERGED = "NON_CONVERGED"
    MID_BAND = "MID_BAND"
    ACCEPTED = "ACCEPTED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    activation: str = "neaf"
    basis: str = "absx3"
    gamma: float = 5.0
    with_bias: bool = False
    swish_beta: float = 1.0
    trainable_beta: bool = False
    hidden: tuple = (512, 50)
    learning_rate: float = 0.001
    epochs: int = 150
    batch_size: int = 128
    eval_every: int = 2
    gate_epoch: int = 15
    a1: float = 0.5
    a2: float = 0.982
    realizations: int = 60
    base_seed: int = 0
    workers: int = 1
    hist_lo: float = 0.982
    hist_hi: float = 0.986
    hist_bins: int = 20
    dataset: str = "mnist"
    data_dir: str | None = None
    synthetic_train: int = 2000
    synthetic_test: int = 500
    data_seed: int = 0
    record_wall_time: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.activation not in ("relu", "swish", "neaf"):
            problems.append(f"activation must be relu, swish or neaf, not {self.activation!r}")
        if self.basis not in {b.value for b in Basis}:
            problems.append(f"basis must be one of xabsx, absx3, x3, not {self.basis!r}")
        if not self.gamma > 0:
            problems.append("gamma must be > 0")
        if not math.isfinite(self.swish_beta):
            problems.append("swish_beta must be finite")
        if not self.hidden or min(self.hidden) < 1:
            problems.append("hidden sizes must be >= 1")
        if not self.learning_rate >= 0:
            problems.append("learning_rate must be >= 0")
        for name in ("epochs", "batch_size", "eval_every", "gate_epoch", "realizations", "workers", "hist_bins"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if not 0 < self.a1 < self.a2 < 1:
            problems.append("need 0 < a1 < a2 < 1")
        if not self.hist_lo < self.hist_hi:
            problems.append("need hist_lo < hist_hi")
        if not 0 <= self.base_seed <= MASK64:
            problems.append("base_seed must fit in 64 bits")
        if self.dataset not in ("mnist", "synthetic"):
            problems.append(f"dataset must be mnist or synthetic, not {self.dataset!r}")
        if self.synthetic_train < 10 or self.synthetic_test < 10:
            problems.append("synthetic sets need at least 10 samples")
        if problems:
            raise ConfigError("; ".join(problems))

    def activation_kind(self) -> ActivationKind:
        return ActivationKind(
            name=self.activation,
            gamma=self.gamma,
            basis=Basis(self.basis),
            with_bias=self.with_bias,
            beta=self.swish_beta,
            trainable_beta=self.trainable_beta,
        )

    def network_spec(self, input_size: int = 784, classes: int = 10) -> NetworkSpec:
        return NetworkSpec(input_size, self.hidden, classes, self.activation_kind())

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class RealizationRecord:
    index: int
    seed: int
    outcome: Outcome
    final_accuracy: float
    epochs_run: int
    wall_ms: int
    trace: list = field(default_factory=list)
    numeric_failure: bool = False


@dataclass
class Histogram:
    lo: float
    hi: float
    counts: list
    underflow: int = 0
    overflow: int = 0

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / len(self.counts)

    def edges(self, k: int) -> tuple[float, float]:
        return self.lo + k * self.width, self.lo + (k + 1) * self.width


@dataclass
class Summary:
    non_converged: int
    mid_band: int
    accepted: int
    numeric_failures: int
    accepted_mean: float | None
    accepted_std: float | None
    accepted_min: float | None
    accepted_max: float | None
    mean_epochs_run: float | None


@dataclass
class SweepResult:
    records: list
    summary: Summary


def derive_seed(base_seed: int, index: int) -> int:
    """Seed for realization ``index``: the splitmix64 output for that position.

    ``z = base + (index + 1) * 0x9E3779B97F4A7C15 (mod 2^64)``, followed by the
    splitmix64 finalizer. Depends only on ``(base_seed, index)``.
    """
    z = (base_seed + (index + 1) * GOLDEN64) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def classify_outcome(r: float, a1: float, a2: float) -> Outcome:
    if r is None or math.isnan(r) or r < a1:
        return Outcome.NON_CONVERGED
    if r < a2:
        return Outcome.MID_BAND
    return Outcome.ACCEPTED


def load_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "synthetic":
        # train and test share the class prototypes, so draw them as one set
        n = cfg.synthetic_train + cfg.synthetic_test
        full = make_synthetic(n, 10, np.random.default_rng(cfg.data_seed))
        cut = cfg.synthetic_train
        return (
            Dataset(full.images[:cut], full.labels[:cut]),
            Dataset(full.images[cut:], full.labels[cut:]),
        )
    directory = cfg.data_dir or os.environ.get("NEAF_DATA_DIR") or "data"
    return load_mnist(directory)


def run_realization(cfg: RunConfig, seed: int, train: Dataset, test: Dataset, index: int = 0) -> RealizationRecord:
    """Train one network from ``seed``; deterministic given ``(cfg, seed)``."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    spec = cfg.network_spec(train.images.shape[1], 10)
    net = init_network(spec, rng)
    opt = Nadam(net.parameters(), lr=cfg.learning_rate)

    trace = []
    accuracy = float("nan")
    failed = False
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        try:
            for idx in epoch_batches(train, cfg.batch_size, rng):
                _, grads = loss_and_grads(net, train.images[idx], train.labels[idx])
                opt.step(grads)
        except NumericFailure:
            failed = True
            accuracy = float("nan")
            break

        at_gate = epoch == cfg.gate_epoch
        if epoch % cfg.eval_every == 0 or at_gate or epoch == cfg.epochs:
            accuracy = evaluate(net, test.images, test.labels)
            trace.append((epoch, accuracy))
        if at_gate and accuracy < cfg.a1:
            break

    outcome = classify_outcome(accuracy, cfg.a1, cfg.a2)
    wall_ms = int(round((time.perf_counter() - start) * 1000)) if cfg.record_wall_time else 0
    return RealizationRecord(index, seed, outcome, accuracy, epoch, wall_ms, trace, failed)


# Set in the parent before the pool forks so workers share one read-only copy.
_SHARED: tuple | None = None


def _pool_task(index: int) -> RealizationRecord:
    cfg, train, test = _SHARED
    return run_realization(cfg, derive_seed(cfg.base_seed, index), train, test, index)


def run_sweep(cfg: RunConfig, train: Dataset | None = None, test: Dataset | None = None, on_record=None) -> SweepResult:
    """Run ``cfg.realizations`` realizations on up to ``cfg.workers`` processes.

    Records come back in index order whatever the completion order;
    ``on_record`` is called as each one finishes.
    """
    global _SHARED
    if train is None or test is None:
        train, test = load_datasets(cfg)
    indices = range(cfg.realizations)
    records = []

    if cfg.workers <= 1 or cfg.realizations == 1:
        for i in indices:
            rec = run_realization(cfg, derive_seed(cfg.base_seed, i), train, test, i)
            records.append(rec)
            if on_record:
                on_record(rec)
    else:
        _SHARED = (cfg, train, test)
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=ctx) as pool:
                for rec in pool.map(_pool_task, indices):
                    records.append(rec)
                    if on_record:
                        on_record(rec)
        finally:
            _SHARED = None

    records.sort(key=lambda r: r.index)
    return SweepResult(records, summarize(records))


def _bin_index(r: float, lo: float, width: float, bins: int) -> int:
    k = min(int((r - lo) / width), bins - 1)
    # the float division can land one bin off at an edge
    while k > 0 and r < lo + k * width:
        k -= 1
    while k < bins - 1 and r >= lo + (k + 1) * width:
        k += 1
    return k


def build_histogram(records, lo: float, hi: float, bins: int) -> Histogram:
    """Bin ACCEPTED final accuracies into ``bins`` half-open bins on [lo, hi)."""
    if not lo < hi or bins < 1:
        raise ValueError("need lo < hi and bins >= 1")
    hist = Histogram(lo, hi, [0] * bins)
    for rec in records:
        if rec.outcome is not Outcome.ACCEPTED:
            continue
        r = rec.final_accuracy
        if r < lo:
            hist.underflow += 1
        elif r >= hi:
            hist.overflow += 1
        else:
            hist.counts[_bin_index(r, lo, hist.width, bins)] += 1
    return hist


def summarize(records) -> Summary:
    by = {o: [r for r in records if r.outcome is o] for o in Outcome}
    acc = [r.final_accuracy for r in by[Outcome.ACCEPTED]]
    return Summary(
        non_converged=len(by[Outcome.NON_CONVERGED]),
        mid_band=len(by[Outcome.MID_BAND]),
        accepted=len(acc),
        numeric_failures=sum(r.numeric_failure for r in records),
        accepted_mean=statistics.fmean(acc) if acc else None,
        accepted_std=(statistics.stdev(acc) if len(acc) > 1 else 0.0) if acc else None,
        accepted_min=min(acc) if acc else None,
        accepted_max=max(acc) if acc else None,
        mean_epochs_run=statistics.fmean(r.epochs_run for r in records) if records else None,
    )


# --- CSV ------------------------------------------------------------------


def _fmt_acc(r: float) -> str:
    return "nan" if math.isnan(r) else f"{r:.6f}"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_runs_csv(path, records, cfg: RunConfig) -> None:
    neaf = cfg.activation == "neaf"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(RUNS_HEADER)
        for r in records:
            w.writerow([
                r.index,
                r.seed,
                cfg.activation,
                cfg.basis if neaf else "",
                repr(float(cfg.gamma)) if neaf else "",
                r.outcome.value,
                _fmt_acc(r.final_accuracy),
                r.epochs_run,
                r.wall_ms,
            ])


def read_runs_csv(path) -> list[RealizationRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUNS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        records = []
        for row in reader:
            acc = float(row["final_accuracy"])
            records.append(RealizationRecord(
                index=int(row["index"]),
                seed=int(row["seed"]),
                outcome=Outcome(row["outcome"]),
                final_accuracy=acc,
                epochs_run=int(row["epochs_run"]),
                wall_ms=int(row["wall_ms"]),
                numeric_failure=math.isnan(acc),
            ))
    return records


def write_trace_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(TRACE_HEADER)
        for r in records:
            for epoch, acc in r.trace:
                w.writerow([r.index, epoch, _fmt_acc(acc)])


def histogram_csv(hist: Histogram) -> str:
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(HIST_HEADER)
    for k, count in enumerate(hist.counts):
        lo, hi = hist.edges(k)
        w.writerow([f"{lo:.6f}", f"{hi:.6f}", count])
    w.writerow(["underflow", "", hist.underflow])
    w.writerow(["overflow", "", hist.overflow])
    return buf.getvalue()


def histogram_from_runs(runs_csv, lo: float, hi: float, bins: int) -> Histogram:
    """Histogram of the accuracies exactly as serialized in ``runs.csv``."""
    return build_histogram(read_runs_csv(runs_csv), lo, hi, bins)

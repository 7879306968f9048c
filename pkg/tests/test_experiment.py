import math

import pytest
from hypothesis import given, settings, strategies as st

from neaf.experiment import (
    ConfigError, Histogram, Outcome, RealizationRecord, RunConfig, build_histogram, classify_outcome,
    derive_seed, histogram_csv, load_datasets, read_runs_csv, run_realization, run_sweep, summarize,
    write_runs_csv, write_trace_csv,
)


def quick(**kw):
    base = dict(dataset="synthetic", synthetic_train=400, synthetic_test=100, hidden=(32, 16),
                epochs=4, gate_epoch=2, eval_every=2, realizations=3, record_wall_time=False)
    base.update(kw)
    return RunConfig(**base)


def rec(outcome, r, index=0, epochs=10):
    return RealizationRecord(index, 0, Outcome(outcome), r, epochs, 0)


@pytest.mark.parametrize("r,expected", [
    (0.30, "NON_CONVERGED"), (0.975, "MID_BAND"), (0.9843, "ACCEPTED"),
    (0.5, "MID_BAND"), (0.982, "ACCEPTED"), (float("nan"), "NON_CONVERGED"),
])
def test_classify(r, expected):
    assert classify_outcome(r, 0.5, 0.982) is Outcome(expected)


def test_defaults():
    cfg = RunConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.eval_every, cfg.gate_epoch) == (150, 128, 2, 15)
    assert (cfg.a1, cfg.a2, cfg.hist_lo, cfg.hist_hi, cfg.hist_bins) == (0.5, 0.982, 0.982, 0.986, 20)
    assert (cfg.activation, cfg.basis, cfg.gamma) == ("neaf", "absx3", 5.0)


@pytest.mark.parametrize("kw", [
    dict(epochs=0), dict(a1=0.99), dict(a2=1.0), dict(hist_lo=0.99), dict(hist_bins=0),
    dict(gamma=0.0), dict(activation="tanh"), dict(basis="x5"), dict(batch_size=0), dict(base_seed=-1),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_seed_derivation():
    seeds = [derive_seed(42, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert all(0 <= s < 2**64 for s in seeds)
    assert derive_seed(42, 7) == seeds[7]
    assert derive_seed(43, 0) != seeds[0]
    # splitmix64 reference: first output for state 0 is 0xE220A8397B1DCDAF
    assert derive_seed(0, 0) == 0xE220A8397B1DCDAF


def test_synthetic_relu_run_is_accepted():
    cfg = RunConfig(activation="relu", dataset="synthetic", epochs=5, a2=0.9, record_wall_time=False)
    train, test = load_datasets(cfg)
    r = run_realization(cfg, derive_seed(0, 0), train, test)
    assert r.outcome is Outcome.ACCEPTED and r.final_accuracy >= 0.95
    assert r.epochs_run == 5
    assert [e for e, _ in r.trace] == [2, 4, 5]


def test_realization_is_deterministic():
    cfg = quick(activation="neaf", basis="xabsx")
    train, test = load_datasets(cfg)
    a = run_realization(cfg, 123, train, test)
    b = run_realization(cfg, 123, train, test)
    assert a == b


def test_zero_learning_rate_hits_gate():
    cfg = RunConfig(activation="relu", dataset="synthetic", synthetic_train=300, synthetic_test=200,
                    learning_rate=0.0, epochs=30, record_wall_time=False)
    train, test = load_datasets(cfg)
    r = run_realization(cfg, derive_seed(0, 0), train, test)
    assert r.outcome is Outcome.NON_CONVERGED
    assert r.epochs_run == 15
    assert r.trace[-1][0] == 15 and r.trace[-1][1] < 0.5
    assert [e for e, _ in r.trace] == [2, 4, 6, 8, 10, 12, 14, 15]


def test_numeric_failure_is_an_outcome():
    cfg = quick(activation="neaf", basis="x3", gamma=1e300)
    train, test = load_datasets(cfg)
    r = run_realization(cfg, 5, train, test)
    assert r.numeric_failure and r.outcome is Outcome.NON_CONVERGED
    assert math.isnan(r.final_accuracy) and r.epochs_run == 1


def test_gate_skipped_when_beyond_last_epoch():
    cfg = quick(activation="relu", learning_rate=0.0, gate_epoch=10, epochs=3)
    train, test = load_datasets(cfg)
    r = run_realization(cfg, 1, train, test)
    assert r.epochs_run == 3


def test_sweep_worker_count_does_not_matter():
    cfg = quick(activation="relu", realizations=4)
    train, test = load_datasets(cfg)
    serial = run_sweep(cfg, train, test)
    cfg.workers = 3
    parallel = run_sweep(cfg, train, test)
    assert serial.records == parallel.records
    assert [r.index for r in parallel.records] == [0, 1, 2, 3]
    s = serial.summary
    assert s.non_converged + s.mid_band + s.accepted == 4


def test_record_independent_of_sweep_size():
    small = quick(activation="relu", realizations=2)
    train, test = load_datasets(small)
    a = run_sweep(small, train, test).records
    big = quick(activation="relu", realizations=4)
    b = run_sweep(big, train, test).records
    assert a == b[:2]


def test_gate_soundness_on_sweep():
    cfg = quick(activation="neaf", realizations=3, epochs=6, gate_epoch=4)
    train, test = load_datasets(cfg)
    for r in run_sweep(cfg, train, test).records:
        gate = dict(r.trace).get(4)
        if gate is not None and gate < cfg.a1:
            assert r.outcome is Outcome.NON_CONVERGED
            assert r.epochs_run == 4 and max(e for e, _ in r.trace) == 4


def test_histogram_hand_binning():
    recs = [rec("ACCEPTED", r) for r in (0.9821, 0.9829, 0.990)]
    h = build_histogram(recs, 0.982, 0.986, 4)
    assert h.counts == [2, 0, 0, 0] and h.overflow == 1 and h.underflow == 0


def test_histogram_edges():
    h = build_histogram([rec("ACCEPTED", 0.982), rec("ACCEPTED", 0.986)], 0.982, 0.986, 4)
    assert h.counts == [1, 0, 0, 0] and h.overflow == 1
    h = build_histogram([rec("ACCEPTED", 0.983)], 0.982, 0.986, 4)
    assert h.counts == [0, 1, 0, 0]


def test_histogram_empty_and_filtered():
    h = build_histogram([rec("MID_BAND", 0.9), rec("NON_CONVERGED", 0.1)], 0.982, 0.986, 20)
    assert h.counts == [0] * 20 and h.underflow == h.overflow == 0


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.sampled_from(list(Outcome)), st.floats(0, 1)), max_size=60),
    st.floats(0.0, 0.99), st.floats(0.001, 0.5), st.integers(1, 40),
)
def test_histogram_conservation(pairs, lo, span, bins):
    recs = [RealizationRecord(i, 0, o, r, 1, 0) for i, (o, r) in enumerate(pairs)]
    h = build_histogram(recs, lo, lo + span, bins)
    accepted = sum(o is Outcome.ACCEPTED for o, _ in pairs)
    assert sum(h.counts) + h.underflow + h.overflow == accepted
    for r in recs:
        if r.outcome is Outcome.ACCEPTED and lo <= r.final_accuracy < lo + span:
            k = [i for i in range(bins) if h.edges(i)[0] <= r.final_accuracy < h.edges(i)[1]]
            assert k  # lands in a bin whose stated edges contain it


def test_summarize():
    recs = [rec("NON_CONVERGED", 0.1), rec("NON_CONVERGED", 0.2), rec("MID_BAND", 0.97),
            rec("ACCEPTED", 0.983), rec("ACCEPTED", 0.985)]
    s = summarize(recs)
    assert (s.non_converged, s.mid_band, s.accepted) == (2, 1, 2)
    assert s.accepted_mean == pytest.approx(0.984, abs=1e-15)
    assert s.accepted_std == pytest.approx(math.sqrt(2e-6), rel=1e-9)
    assert s.accepted_min == 0.983 and s.accepted_max == 0.985
    assert s.mean_epochs_run == 10


def test_summarize_degenerate():
    s = summarize([rec("MID_BAND", 0.9)])
    assert s.accepted_mean is None and s.accepted_std is None
    assert summarize([rec("ACCEPTED", 0.984)]).accepted_std == 0.0
    assert summarize([]).mean_epochs_run is None


def test_csv_roundtrip(tmp_path):
    cfg = quick(activation="neaf")
    recs = [RealizationRecord(0, 17, Outcome.ACCEPTED, 0.98431234, 150, 1234, [(2, 0.5), (4, 0.98431234)]),
            RealizationRecord(1, 18, Outcome.NON_CONVERGED, float("nan"), 3, 10, [], True)]
    runs = tmp_path / "runs.csv"
    write_runs_csv(runs, recs, cfg)
    text = runs.read_bytes().decode("utf-8")
    assert "\r" not in text
    lines = text.splitlines()
    assert lines[0] == "index,seed,activation,basis,gamma,outcome,final_accuracy,epochs_run,wall_ms"
    assert lines[1] == "0,17,neaf,absx3,5.0,ACCEPTED,0.984312,150,1234"
    assert lines[2] == "1,18,neaf,absx3,5.0,NON_CONVERGED,nan,3,10"
    back = read_runs_csv(runs)
    assert back[0].final_accuracy == 0.984312 and back[1].numeric_failure

    trace = tmp_path / "trace.csv"
    write_trace_csv(trace, recs)
    assert trace.read_text().splitlines() == ["index,epoch,test_accuracy", "0,2,0.500000", "0,4,0.984312"]


def test_relu_rows_leave_basis_blank(tmp_path):
    cfg = quick(activation="relu")
    write_runs_csv(tmp_path / "r.csv", [rec("ACCEPTED", 0.99)], cfg)
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "0,0,relu,,,ACCEPTED,0.990000,10,0"


def test_histogram_csv_layout():
    text = histogram_csv(Histogram(0.982, 0.986, [1, 2], 3, 4))
    assert text.splitlines() == [
        "bin_lo,bin_hi,count", "0.982000,0.984000,1", "0.984000,0.986000,2", "underflow,,3", "overflow,,4",
    ]

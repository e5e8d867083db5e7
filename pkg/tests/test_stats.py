import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from slipsim.model import ModelConfig, run_simulation
from slipsim.stats import (
    BinnedMean,
    Binning,
    CoMoment,
    Histogram,
    InsufficientData,
    Moments,
    RunStats,
    bootstrap_skewness_ci,
    imbalance,
    observe_executions,
    observe_trade_log,
    sample_skewness,
    summarize,
    tau_edges,
)

values = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=0, max_size=40)


def two_pass(x):
    """Textbook two-pass moments, written independently of the streaming code."""
    x = [float(v) for v in x]
    n = len(x)
    m = sum(x) / n
    m2 = sum((v - m) ** 2 for v in x) / n
    m3 = sum((v - m) ** 3 for v in x) / n
    g1 = m3 / m2 ** 1.5
    return m, m2 * n / (n - 1), math.sqrt(n * (n - 1)) / (n - 2) * g1


def test_moments_match_two_pass_oracle():
    x = np.random.default_rng(0).gamma(2.0, 1.5, 100_000) - 3.0
    m = Moments()
    for chunk in np.array_split(x, 37):
        m.add_array(chunk)
    mean, var, skew = two_pass(x)
    assert m.count == x.size
    assert m.mean == pytest.approx(mean, rel=1e-9)
    assert m.variance == pytest.approx(var, rel=1e-9)
    assert m.skewness == pytest.approx(skew, rel=1e-9)
    assert m.skewness == pytest.approx(sps.skew(x, bias=False), rel=1e-9)
    assert sample_skewness(x) == pytest.approx(skew, rel=1e-9)


def test_moments_single_adds_equal_batch():
    x = [0.3, -1.2, 4.0, 2.5, 2.5, -0.1]
    a = Moments()
    for v in x:
        a.add(v)
    b = Moments.of(x)
    assert a.count == b.count
    for attr in ("mean", "variance", "skewness"):
        assert getattr(a, attr) == pytest.approx(getattr(b, attr), rel=1e-12)


def test_symmetric_sample_has_zero_skewness():
    m = Moments.of([-2.0, -1.0, 0.0, 1.0, 2.0])
    assert m.mean == 0.0
    assert m.skewness == 0.0


def test_moments_undefined_on_short_input_are_nan():
    assert math.isnan(Moments.of([1.0, 2.0]).skewness)
    assert math.isnan(Moments.of([1.0]).variance)
    assert math.isnan(Moments.of([3.0, 3.0, 3.0]).skewness)


@settings(max_examples=60)
@given(values, values, values)
def test_moments_merge_is_associative_and_commutative(a, b, c):
    ma, mb, mc = Moments.of(a), Moments.of(b), Moments.of(c)
    left = ma.merge(mb).merge(mc)
    right = ma.merge(mb.merge(mc))
    swapped = mc.merge(ma).merge(mb)
    whole = Moments.of(a + b + c)
    for m in (left, right, swapped):
        assert m.count == whole.count
        scale = 1.0 + max((abs(v) for v in a + b + c), default=0.0)
        assert abs(m.mean - whole.mean) <= 1e-9 * scale
        assert abs(m.m2 - whole.m2) <= 1e-7 * scale ** 2
        assert abs(m.m3 - whole.m3) <= 1e-6 * scale ** 3


@settings(max_examples=60)
@given(values, values)
def test_histogram_merge_keeps_every_value(a, b):
    h1 = Histogram.uniform(-500, 500, 10)
    h2 = Histogram.uniform(-500, 500, 10)
    h1.add_array(a)
    h2.add_array(b)
    h = h1.merge(h2)
    assert h.total == len(a) + len(b)
    direct = Histogram.uniform(-500, 500, 10)
    direct.add_array(a + b)
    assert np.array_equal(h.counts, direct.counts)
    assert (h.underflow, h.overflow) == (direct.underflow, direct.overflow)


def test_histogram_edges():
    h = Histogram.uniform(0.0, 1.0, 4)
    h.add_array([0.0, 0.25, 0.999, 1.0, 1.5, -0.1])
    assert h.counts.tolist() == [1, 1, 0, 2]
    assert (h.underflow, h.overflow, h.total) == (1, 1, 6)
    with pytest.raises(ValueError):
        h.merge(Histogram.uniform(0.0, 1.0, 5))
    with pytest.raises(ValueError):
        Histogram([1.0, 1.0])


def test_binned_mean_table():
    b = BinnedMean([0.0, 1.0, 2.0, 3.0])
    b.add_array([0.5, 0.5, 2.5, 7.0], [1.0, 3.0, -4.0, 9.0])
    rows = b.table()
    assert [(r["lo"], r["count"], r["mean"]) for r in rows] == [(0.0, 2, 2.0), (2.0, 1, -4.0)]
    assert rows[0]["sem"] == pytest.approx(1.0)
    assert b.outside == 1
    assert b.table(min_count=2) == rows[:1]


def test_comoment_against_numpy():
    rng = np.random.default_rng(3)
    x = rng.normal(size=5000)
    y = 0.3 * x + rng.normal(size=5000)
    c = CoMoment()
    for i in range(0, 5000, 700):
        c = c.merge(CoMoment.of(x[i:i + 700], y[i:i + 700]))
    assert c.count == 5000
    assert c.correlation == pytest.approx(np.corrcoef(x, y)[0, 1], rel=1e-10)
    assert c.covariance == pytest.approx(np.cov(x, y)[0, 1], rel=1e-10)
    r = c.correlation
    assert c.correlation_se == pytest.approx(math.sqrt((1 - r * r) / 4998))


@pytest.mark.parametrize("vb, vs, lam", [(5, 5, 0.0), (3, 1, 0.5), (1, 9, -0.8), (4, 0, 1.0)])
def test_imbalance_examples(vb, vs, lam):
    assert imbalance(vb, vs) == pytest.approx(lam, abs=1e-15)


def test_imbalance_rejects_empty_market():
    with pytest.raises(ValueError):
        imbalance(0, 0)
    with pytest.raises(ValueError):
        imbalance(-1, 3)


@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_imbalance_is_bounded_and_antisymmetric(vb, vs):
    if vb + vs == 0:
        return
    lam = imbalance(vb, vs)
    assert -1.0 <= lam <= 1.0
    assert imbalance(vs, vb) == -lam


def test_tau_edges_shape():
    e = tau_edges(unit_max=5, factor=2.0, top=100)
    assert e.tolist() == [1, 2, 3, 4, 5, 6, 12, 24, 48, 96, 192]


def test_record_trade_observation():
    s = RunStats.empty()
    s.record_trade_observation(0.5, 0.02, sum_dw=-0.04, volume_gap=2)
    s.record_trade_observation(-0.5, -0.02, sum_dw=0.04, volume_gap=-2)
    rows = s.lambda_dp.table()
    assert [r["mean"] for r in rows] == [-0.02, 0.02]
    assert s.ledger.n_trades == 2
    assert s.ledger.sum_gap_dp == pytest.approx(0.08)
    assert s.ledger.sum_dw == pytest.approx(0.0)


def test_record_execution_mirrored_values():
    s = RunStats.empty(Binning(slippage_range=(-1.0, 1.0)))
    for v in (-0.3, 0.3, -0.1, 0.1, 0.0):
        s.record_execution(v, 2)
    out = summarize(s)
    assert out["executions"]["mean_slippage"] == pytest.approx(0.0, abs=1e-15)
    assert out["executions"]["skewness"] == pytest.approx(0.0, abs=1e-12)
    assert out["slippage_vs_tau"] == [
        {"lo": 2.0, "hi": 3.0, "count": 5, "mean": pytest.approx(0.0, abs=1e-15), "sem": pytest.approx(0.1)}
    ]


def test_summarize_needs_executions():
    with pytest.raises(InsufficientData):
        summarize(RunStats.empty())


def test_summarize_omits_empty_tau_bins():
    s = RunStats.empty(Binning(slippage_range=(-1.0, 1.0)))
    s.record_executions([0.1, 0.2, 0.4], [1, 1, 5])
    taus = [r["lo"] for r in summarize(s)["slippage_vs_tau"]]
    assert taus == [1.0, 5.0]


def test_split_run_merges_to_full_run():
    run = run_simulation(ModelConfig(seed=2, n_agents=10, mu=-0.2, sigma=0.2, n_trades=400, warmup_trades=40))
    log = run.trade_log()
    table = run.execution_table()
    edges = Binning().slippage_edges(table["slippage"])

    full = RunStats.empty(slippage_edges=edges)
    observe_trade_log(full, log, run.config.warmup)
    observe_executions(full, table)

    halves = []
    for part in (slice(0, 200), slice(200, None)):
        h = RunStats.empty(slippage_edges=edges)
        observe_trade_log(h, {k: v[part] for k, v in log.items()}, run.config.warmup)
        observe_executions(h, {k: v[part] for k, v in table.items()})
        halves.append(h)
    merged = summarize(halves[0].merge(halves[1]))
    whole = summarize(full)
    assert merged["slippage_histogram"] == whole["slippage_histogram"]
    assert merged["executions"]["count"] == whole["executions"]["count"] == 800
    for key in ("mean_slippage", "skewness", "mean_tau"):
        assert merged["executions"][key] == pytest.approx(whole["executions"][key], rel=1e-9, abs=1e-15)
    assert merged["trades"]["lambda_dp_correlation"] == pytest.approx(
        whole["trades"]["lambda_dp_correlation"], rel=1e-9)
    assert whole["trades"]["count"] == 400
    # per-trade sum of dW equals the volume-gap term up to the residual
    assert abs(whole["trades"]["sum_dw"] + whole["trades"]["sum_gap_dp"]) < 1e-9 * 400


def test_bootstrap_interval_brackets_skewed_sample():
    x = np.random.default_rng(5).exponential(size=2000)
    lo, hi = bootstrap_skewness_ci(x, n_resamples=300, level=0.99)
    assert 0 < lo < sample_skewness(x) < hi
    assert bootstrap_skewness_ci(x, n_resamples=50, seed=1) == bootstrap_skewness_ci(x, n_resamples=50, seed=1)
    with pytest.raises(InsufficientData):
        bootstrap_skewness_ci([1.0, 2.0])

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from conftest import isolated_scenario, single_link_scenario
from schedaware import (MacParams, baseline_predictors, normalized_throughput, pearson, run_validation_batch,
                        simulate, spearman)
from schedaware.analysis import (PREDICTORS, ROW_FIELDS, TARGETS, BatchParams, CompareParams, CompareResult,
                                 average_ranks, build_validation_scenario, correlate, finite_pairs)


def test_correlation_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert spearman(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    assert spearman(x, -x) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_constant_series_is_undefined():
    assert np.isnan(pearson([1, 1, 1], [1, 2, 3]))
    assert np.isnan(spearman([1, 2, 3], [4, 4, 4]))


def test_correlation_input_checks():
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2])
    with pytest.raises(ValueError):
        spearman([1, 2, 3], [1, 2])


def test_average_ranks_share_ties():
    assert list(average_ranks([10, 20, 20, 5])) == [2.0, 3.5, 3.5, 1.0]


def test_against_scipy_on_random_series():
    rng = np.random.default_rng(0)
    for k in range(100):
        n = int(rng.integers(3, 60))
        x = rng.normal(size=n)
        y = 0.3 * x + rng.normal(size=n)
        if k % 3 == 0:  # force ties
            x = np.round(x)
            y = np.round(y)
        assert pearson(x, y) == pytest.approx(scipy.stats.pearsonr(x, y)[0], abs=1e-9)
        assert spearman(x, y) == pytest.approx(scipy.stats.spearmanr(x, y)[0], abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=30, unique=True), st.integers(0, 2**31))
def test_spearman_invariant_under_monotone_maps(xs, seed):
    rng = np.random.default_rng(seed)
    x = np.array(xs, dtype=float)
    y = rng.normal(size=len(x))
    assert spearman(np.exp(x / 100.0), y) == pytest.approx(spearman(x, y), abs=1e-12)
    assert spearman(x ** 3, -y) == pytest.approx(-spearman(x, y), abs=1e-12)
    r = pearson(x, y)
    assert np.isnan(r) or -1.0 <= r <= 1.0


def test_finite_pairs_drops_undefined():
    a, b = finite_pairs([1, np.nan, 3, 4], [1, 2, np.inf, 5])
    assert list(a) == [1, 4] and list(b) == [1, 5]


def test_baseline_predictors_isolated():
    sc, links = isolated_scenario(3)
    sim = simulate(sc, links=links, duration=0.2, seed=1).stats
    interference, busy, sinr = baseline_predictors(sc, links, sim)
    th = sc.field.theta
    want = np.array([th[2, 1] + th[4, 1], th[0, 3] + th[4, 3], th[0, 5] + th[2, 5]])
    assert np.allclose(interference, want)
    assert np.allclose(sinr, 5.0 / (want + sc.radio.noise_floor))
    assert np.array_equal(busy, sim.busy_time_dst)
    with pytest.raises(ValueError):
        baseline_predictors(sc, links[:2], sim)


def test_normalized_throughput_of_lone_link_is_near_one():
    sc, links = single_link_scenario()
    sim = simulate(sc, links=links, duration=3.0, seed=1).stats
    assert normalized_throughput(sim)[0] == pytest.approx(1.0, abs=0.1)


def test_normalized_throughput_accounts_for_busy_source():
    sc, links = isolated_scenario(3)
    sim = simulate(sc, links=links, duration=3.0, seed=1).stats
    norm = normalized_throughput(sim)
    # the three links share the channel fairly, so scaled by the free share they approach 1
    assert (sim.throughput < 0.5 * MacParams().saturation_throughput()).all()
    assert np.all((norm > 0.6) & (norm < 1.4))
    sim.busy_time_src[:] = 1.0
    assert np.isnan(normalized_throughput(sim)).all()


SMALL = BatchParams(n_nodes=40, area=700.0, n_links=6, duration=0.5)


def test_small_batch_joins_every_link():
    report, result = run_validation_batch(3, SMALL)
    per_seed = {s: len(build_validation_scenario(s, SMALL)[1]) for s in result.seeds}
    assert len(result.rows) == sum(per_seed.values())
    assert all(set(r) == set(ROW_FIELDS) for r in result.rows)
    assert set(report.pearson) == {(p, t) for p in PREDICTORS for t in TARGETS}
    assert sum(result.histogram.values()) >= sum(result.intra.values()) + sum(result.inter.values())
    assert result.rows_csv().splitlines()[0] == ",".join(ROW_FIELDS)
    assert len(result.histogram_csv().splitlines()) == 8
    assert 0 <= result.cts_lost <= result.rts_timeouts
    again = run_validation_batch(3, SMALL)[1]
    assert again.rows_csv() == result.rows_csv()


def test_batch_seed_checks():
    with pytest.raises(ValueError):
        run_validation_batch(0, SMALL)
    with pytest.raises(ValueError):
        run_validation_batch(2, SMALL, seeds=[1])


def test_undefined_targets_give_undefined_correlations():
    from schedaware.analysis import ExperimentResult
    rows = []
    for i in range(5):
        r = {k: 0.0 for k in ROW_FIELDS}
        r.update(rts_rating=0.1 * i, rts_timeout_frac=0.0, ack_timeout_frac=float("nan"))
        rows.append(r)
    empty = {}
    report = correlate(ExperimentResult(rows, empty, empty, empty, empty, empty, 0))
    assert np.isnan(report.spearman[("model", "rts_timeout_frac")])  # constant target
    assert report.samples["ack_timeout_frac"] == 0
    assert np.isnan(report.pearson[("model", "ack_timeout_frac")])
    assert not report.beats_baselines("rts_timeout_frac")


def test_compare_table_layout():
    rows = []
    for router, tp, c in (("SAR", 30.0, 0.1), ("SP", 20.0, 0.2), ("IAR", 15.0, 0.3)):
        rows.append({"seed": 1, "router": router, "rate": None, "cim": c, "throughput": tp,
                     "delivered": 1, "queue_drops": 0, "paths": "0-1"})
    res = CompareResult(rows)
    lines = res.table().splitlines()
    assert lines[0] == "rate,SAR,SP,IAR,SAR/SP,SAR/IAR"
    assert lines[1] == "saturated,30.0,20.0,15.0,1.5,2.0"
    assert lines[2].startswith("mean_cim,0.1,0.2,0.3")
    assert CompareParams().connections == 4

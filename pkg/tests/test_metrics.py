import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arbsim.metrics import (EvalRecord, EvalReport, MetricsError, accuracy,
                            delta_accuracy, epsilon_accuracy, relative_error,
                            write_report)


def _record(distances, chosen, rid="r"):
    return EvalRecord(scenario_id=rid, distances=tuple(distances),
                      chosen_index=chosen,
                      closest_index=int(np.argmin(distances)))


def test_accuracy_basic():
    records = [_record([1.0, 2.0], 0), _record([1.0, 2.0], 1),
               _record([3.0, 2.0], 1), _record([3.0, 2.0], 1)]
    assert accuracy(records) == 0.75
    assert accuracy(records[:1]) == 1.0
    with pytest.raises(MetricsError):
        accuracy([])


def test_accuracy_counts_exact_distance_ties():
    tie = EvalRecord("t", (2.0, 2.0), chosen_index=1, closest_index=0)
    assert accuracy([tie]) == 1.0


def test_record_properties():
    r = _record([3.1, 1.4, 2.0], 2)
    assert r.d_chosen == 2.0
    assert r.d1 == 1.4
    assert r.d2 == 2.0
    assert r.d_chosen >= r.d1


def test_delta_accuracy_binning():
    records = [_record([1.0, 2.4], 0)]  # gap 1.4 -> bin [1, 2)
    curve = delta_accuracy(records)
    assert curve == [(0.0, None, 0), (1.0, 1.0, 1)]
    half = [_record([1.0, 1.5], 0), _record([1.0, 1.5], 1)]
    curve = delta_accuracy(half)
    assert curve == [(0.0, 0.5, 2)]
    with pytest.raises(MetricsError):
        delta_accuracy(records, bin_width=0.0)


def test_delta_accuracy_pooled_identity():
    rng = np.random.default_rng(0)
    records = []
    for i in range(300):
        dists = sorted(rng.uniform(1.0, 8.0, rng.integers(2, 6)))
        records.append(_record(dists, int(rng.integers(len(dists))), f"r{i}"))
    curve = delta_accuracy(records)
    pooled = sum(acc * count for _, acc, count in curve if acc is not None)
    assert pooled / len(records) == pytest.approx(accuracy(records))
    assert sum(count for _, _, count in curve) == len(records)


def test_epsilon_accuracy_threshold_example():
    r = _record([2.0, 2.2, 6.0], 1)
    curve = dict(epsilon_accuracy([r], [0.0, 0.2, 0.25, 1.0]))
    assert curve[0.0] == 0.0
    assert curve[0.2] == 0.0
    assert curve[0.25] == 1.0
    assert curve[1.0] == 1.0


def test_epsilon_zero_equals_accuracy():
    rng = np.random.default_rng(1)
    records = []
    for i in range(200):
        dists = rng.uniform(1.0, 8.0, rng.integers(2, 6))
        records.append(_record(list(dists), int(rng.integers(len(dists)))))
    (_, eps0), = epsilon_accuracy(records, [0.0])
    assert eps0 == accuracy(records)


def test_epsilon_accuracy_monotone_and_saturates():
    rng = np.random.default_rng(2)
    records = []
    for i in range(100):
        dists = rng.uniform(1.0, 8.0, rng.integers(2, 6))
        records.append(_record(list(dists), int(rng.integers(len(dists)))))
    curve = epsilon_accuracy(records, [0.0, 0.5, 1.0, 2.0, math.inf])
    values = [acc for _, acc in curve]
    assert values == sorted(values)
    assert values[-1] == 1.0
    with pytest.raises(MetricsError):
        epsilon_accuracy(records, [-0.1])


def test_relative_error():
    assert relative_error(0.5, 0.75) == 0.5
    assert relative_error(0.8, 0.8) == 1.0
    assert relative_error(0.6, 1.0) == 0.0
    with pytest.raises(MetricsError):
        relative_error(1.0, 0.9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(
    st.lists(st.floats(1.0, 30.0), min_size=2, max_size=5),
    st.integers(0, 4)), min_size=1, max_size=30))
def test_report_invariants(raw):
    records = [_record(d, min(c, len(d) - 1), f"r{i}")
               for i, (d, c) in enumerate(raw)]
    report = EvalReport.from_records(records, epsilons=[0.0, 0.5, 1.0, 2.0])
    assert 0.0 <= report.accuracy <= 1.0
    for _, acc, count in report.delta_curve:
        assert (acc is None) == (count == 0)
        if acc is not None:
            assert 0.0 <= acc <= 1.0
    eps_values = [acc for _, acc in report.epsilon_curve]
    assert eps_values == sorted(eps_values)
    assert report.epsilon_curve[0][1] == report.accuracy


def test_write_report(tmp_path):
    records = [_record([1.0, 3.5], 0, "a"), _record([2.0, 2.5], 1, "b")]
    report = EvalReport.from_records(records, epsilons=[0.0, 1.0])
    write_report(report, tmp_path, "baseline", config_hash="ff00")
    obj = json.loads((tmp_path / "baseline_report.json").read_text())
    assert obj["system"] == "baseline"
    assert obj["config_hash"] == "ff00"
    assert obj["accuracy"] == report.accuracy
    assert len(obj["records"]) == 2
    delta_csv = (tmp_path / "baseline_delta_curve.csv").read_text().splitlines()
    assert delta_csv[0] == "bin_lower_m,accuracy,count"
    assert len(delta_csv) == 1 + len(report.delta_curve)
    eps_csv = (tmp_path / "baseline_epsilon_curve.csv").read_text().splitlines()
    assert eps_csv[0] == "epsilon_m,epsilon_accuracy"

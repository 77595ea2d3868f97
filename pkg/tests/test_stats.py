import json
import math
from types import SimpleNamespace

import numpy as np
import pytest

from gvbridge.data import Dataset, Domain, SyntheticSpec, Task, generate
from gvbridge.errors import DataError
from gvbridge.gvb import Variant, init_model, predict
from gvbridge.nn import make_rng
from gvbridge.stats import (
    RunResult,
    aggregate_seeds,
    bridge_stats,
    export_features,
    feature_header,
    read_features,
)


def rec(g, correct, s=0.0):
    return SimpleNamespace(gamma_range=g, sigma_range=s, correct=correct)


def test_constructed_fixture():
    records = [rec(0.0, True) for _ in range(90)] + [rec(1.0, False) for _ in range(10)]
    r = bridge_stats(records)
    assert r.mean_misclassified == 1.0 and r.mean_correct == 0.0
    assert r.buckets[-1].error_rate == 1.0
    assert sum(b.count for b in r.buckets) == 100 and len(r.buckets) == 10
    assert r.rank_correlation > 0.99


def test_all_correct_has_absent_mean():
    r = bridge_stats([rec(i / 20, True) for i in range(20)])
    assert r.mean_misclassified is None
    assert "absent" in r.to_text()
    assert r.rank_correlation == 0.0


def test_identical_ranges_give_zero_correlation():
    r = bridge_stats([rec(0.5, i % 3 == 0) for i in range(30)])
    assert r.rank_correlation == 0.0


def test_few_samples_single_bucket():
    r = bridge_stats([rec(0.1, True), rec(0.2, False)])
    assert r.few_samples and len(r.buckets) == 1 and r.buckets[0].count == 2


def test_ties_sorted_by_index():
    r = bridge_stats([rec(0.2, True), rec(0.1, True), rec(0.2, False), rec(0.1, False)])
    assert r.order == [1, 3, 0, 2]


def test_sigma_key_and_errors():
    r = bridge_stats([rec(0.0, i < 5, s=float(i)) for i in range(20)], key="sigma")
    assert r.key == "sigma" and r.values == sorted(r.values)
    with pytest.raises(ValueError):
        bridge_stats([rec(0.0, True)], key="beta")
    with pytest.raises(DataError):
        bridge_stats([])
    with pytest.raises(DataError):
        bridge_stats([rec(0.0, None)])


def test_report_json_is_serializable():
    r = bridge_stats([rec(i / 10, i % 4 == 0) for i in range(25)])
    d = json.loads(json.dumps(r.to_dict()))
    assert all(0.0 <= b["error_rate"] <= 1.0 for b in d["buckets"])


def test_aggregate_examples():
    one = aggregate_seeds([RunResult("gvb-gd", 1, 0.8)]).row("gvb-gd")
    assert one.std == 0.0 and one.mean == 0.8
    two = aggregate_seeds([RunResult("baseline", 1, 0.8), RunResult("baseline", 2, 0.9)]).row("baseline")
    assert abs(two.mean - 0.85) <= 1e-12 and abs(two.std - 0.05) <= 1e-12
    four = aggregate_seeds([RunResult("bg", s, a) for s, a in zip(range(4), (0.7, 0.8, 0.8, 0.9))]).row("bg")
    assert abs(four.mean - 0.8) <= 1e-10
    assert abs(four.std - math.sqrt(0.005)) <= 1e-10
    assert round(four.std, 4) == 0.0707


def test_aggregate_is_order_invariant_and_orders_rows():
    runs = [RunResult(v, s, 0.5 + 0.01 * s + 0.1 * i) for i, v in enumerate(("gvb-gd", "baseline", "bg")) for s in range(4)]
    a = aggregate_seeds(runs)
    b = aggregate_seeds(list(reversed(runs)))
    assert a.to_json() == b.to_json()
    assert [r.variant for r in a.rows] == ["baseline", "bg", "gvb-gd"]


def test_failures_are_listed_not_averaged():
    rep = aggregate_seeds([RunResult("bg", 1, 0.9), RunResult("bg", 2, None, "boom")])
    assert rep.row("bg").n == 1 and len(rep.failures) == 1
    assert "FAILED bg seed 2" in rep.to_text()
    assert "population" in rep.to_text()


def test_export_features(tmp_path):
    s, t = generate(SyntheticSpec(Task.Clusters, 3, 30, rotation=0.4, seed=2))
    t = t.unlabeled()
    model = init_model(2, 3, make_rng(1), bridge_scale=1.0)
    v = Variant.from_name("gvb-gd")
    path = tmp_path / "f.csv"
    n = export_features(model, [s, t], v, path)
    assert n == 60
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(feature_header(3)) and len(lines) == 61
    back = read_features(path)
    assert np.all(back["label"][30:] == -1)
    assert list(back["domain"][:30]) == ["source"] * 30
    out = predict(model, s.features, v)
    assert np.array_equal(back["r"][:30], out.c.value - out.gamma.value)
    assert np.array_equal(back["gamma_range"][:30], np.abs(out.gamma.value).sum(1) / 3)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from bumphunt.boxes import AxisBox
from bumphunt.datagen import Dataset
from bumphunt.exceptions import DegenerateDataError, ValidationError
from bumphunt.fastprim import beta_total
from bumphunt.prim import (PRIM, PrimConfig, box_stats, cover, max_peels, paste,
                           paste_step, peel_candidates, peel_step, peel_to_support)

from conftest import gaussian_data
from oracles import brute_force_peel


def test_box_stats_whole_and_empty():
    d = Dataset(np.arange(4.0)[:, None], np.array([1.0, 2, 3, 4]))
    s = box_stats(d, None, AxisBox.whole(1))
    assert s.support == 1 and s.output_mean == 2.5
    e = box_stats(d, None, AxisBox([10], [11]))
    assert e.count == 0 and e.empty and math.isnan(e.output_mean)


def test_box_stats_hand_count():
    d = Dataset(np.arange(4.0)[:, None], np.array([1.0, 2, 3, 4]))
    s = box_stats(d, None, AxisBox([2], [3]))
    assert s.support == 0.5 and s.output_mean == 3.5
    assert s.output_sum_fraction == pytest.approx(7 / 4)
    assert s.output_mean == pytest.approx(s.output_sum_fraction / s.support)


def test_box_stats_closed_interval_and_active_subset():
    d = Dataset(np.arange(4.0)[:, None], np.array([1.0, 2, 3, 4]))
    s = box_stats(d, [1, 2], AxisBox([1], [1]))
    assert s.count == 1 and s.n_active == 2


def test_two_dimensions_give_four_candidates(data2):
    assert len(peel_candidates(data2, None, AxisBox.whole(2), 0.05)) == 4


def test_low_candidate_on_one_to_twenty(line_data):
    low = peel_candidates(line_data, None, AxisBox.whole(1), 0.05)[0]
    assert low.side == "low" and low.removed_count == 1
    assert low.threshold == 2.0 and low.box.lower[0] == 2.0


def test_constant_marginal_is_void():
    X = np.column_stack([np.full(20, 3.0), np.arange(20.0)])
    cands = peel_candidates(Dataset(X, np.ones(20)), None, AxisBox.whole(2), 0.05)
    assert cands[0].void and cands[1].void
    assert not cands[2].void


def test_constant_response_removes_fewest_points():
    X = np.column_stack([np.r_[np.zeros(5), np.arange(15.0)], np.arange(20.0)])
    # dimension 0 has 5 tied minima, so its low cut removes nothing extra and is void
    res = peel_step(Dataset(X, np.ones(20)), None, AxisBox.whole(2), 0.05)
    cand, _ = res
    assert (cand.dimension, cand.side) == (0, "high")


def test_low_side_chosen_when_z_increases():
    x = np.arange(1.0, 11.0)
    cand, box = peel_step(Dataset(x[:, None], x), None, AxisBox.whole(1), 0.1)
    assert cand.side == "low" and box.lower[0] == 2.0


def test_exact_tie_prefers_first_dimension_low_side():
    v = np.arange(-9.5, 10.0)
    pts = np.column_stack([v, v[::-1]])
    cand, _ = peel_step(Dataset(pts, np.ones(20)), None, AxisBox.whole(2), 0.05)
    assert (cand.dimension, cand.side) == (0, "low")


def test_all_void_returns_none():
    assert peel_step(Dataset(np.ones((20, 2)), np.ones(20)), None, AxisBox.whole(2), 0.05) is None


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_peel_step_matches_brute_force(data):
    n = data.draw(st.integers(2, 30))
    d = data.draw(st.integers(1, 2))
    grid = data.draw(st.sampled_from([3, 5, 100]))  # small grids force ties
    pts = data.draw(st.lists(st.lists(st.integers(0, grid), min_size=d, max_size=d),
                             min_size=n, max_size=n))
    zs = data.draw(st.lists(st.integers(-2, 2), min_size=n, max_size=n))
    alpha = data.draw(st.sampled_from([0.05, 0.1, 0.25]))
    ds = Dataset(np.array(pts, dtype=float), np.array(zs, dtype=float))
    res = peel_step(ds, None, AxisBox.whole(d), alpha)
    ref = brute_force_peel(pts, zs, alpha)
    if ref is None:
        assert res is None
    else:
        cand, _ = res
        assert (cand.dimension, cand.side, cand.threshold) == ref


def test_max_peels_bound():
    assert max_peels(0.05, 0.05) == 59


def test_peel_to_support_bounds(data2):
    res = peel_to_support(data2, None, PrimConfig())
    assert len(res.steps) <= 59
    assert 0.05 - 1 / data2.n <= res.stats.support <= 0.10
    supports = [s["stats"]["support"] for s in res.steps]
    assert all(a >= b for a, b in zip(supports, supports[1:]))


def test_peel_nesting_and_support_recursion(data2):
    res = peel_to_support(data2, None, PrimConfig())
    box, count = AxisBox.whole(2), data2.n
    for step in res.steps:
        new = box.replace(step["dimension"],
                          lower=step["value"] if step["side"] == "low" else None,
                          upper=step["value"] if step["side"] == "high" else None)
        assert box.includes(new)
        assert step["stats"]["count"] == count - step["removed"]
        box, count = new, step["stats"]["count"]
    assert box == res.box


def test_identical_points_give_no_peels():
    res = peel_to_support(Dataset(np.ones((20, 2)), np.ones(20)), None, PrimConfig())
    assert res.steps == [] and res.box == AxisBox.whole(2)


def test_uniform_response_final_support():
    rng = np.random.default_rng(7)
    d = Dataset(rng.standard_normal((1000, 3)), rng.random(1000))
    res = peel_to_support(d, None, PrimConfig())
    assert 0.05 - 0.001 <= res.stats.support <= 0.10


def test_peel_needs_enough_points():
    with pytest.raises(DegenerateDataError):
        peel_to_support(Dataset(np.ones((10, 1)), np.ones(10)), None, PrimConfig())


PASTE_X = np.arange(1.0, 11.0)[:, None]
PASTE_Z = np.array([0, 0, 0, 0, 0, 9, 9, 9, 9, 0.0])


def test_paste_whole_box_no_change():
    assert paste_step(Dataset(PASTE_X, PASTE_Z), None, AxisBox.whole(1), 0.05) is None


def test_paste_rejects_when_mean_drops():
    assert paste_step(Dataset(PASTE_X, PASTE_Z), None, AxisBox([6], [9]), 0.05) is None


def test_paste_equal_mean_is_not_an_improvement():
    # adding x=9 keeps the mean at 9, which is not a strict increase
    assert paste_step(Dataset(PASTE_X, PASTE_Z), None, AxisBox([6], [8]), 0.05) is None


def test_paste_accepts_strict_increase_and_iterates():
    d = Dataset(PASTE_X, PASTE_Z)
    step, box = paste_step(d, None, AxisBox([5], [8]), 0.05)
    assert step["side"] == "high" and box == AxisBox([5], [9])
    final, steps = paste(d, None, AxisBox([5], [8]), 0.05)
    assert final == AxisBox([5], [9]) and len(steps) == 1


def test_config_validation():
    for kwargs in ({"alpha": 0}, {"beta": 1}, {"coverage": 0}, {"peel_criterion": "x"}):
        with pytest.raises(ValidationError):
            PrimConfig(**kwargs)


def test_cover_single_round_equals_peel(data2):
    trace = cover(data2, PrimConfig(coverage=1))
    peeled = peel_to_support(data2, None, PrimConfig())
    assert trace.rounds[0].box == peeled.box
    assert trace.rounds[0].accepted == (peeled.stats.output_mean >= np.mean(data2.Z))


def test_cover_cumulative_support(data2):
    trace = cover(data2, PrimConfig(coverage=20))
    assert len(trace.rounds) == 20
    assert abs(trace.cumulative_support() - beta_total(0.05, 20)) <= 0.03
    supports = [trace.cumulative_support(k) for k in range(1, 21)]
    assert all(a <= b for a, b in zip(supports, supports[1:]))


def test_cover_rounds_are_disjoint(data2):
    trace = cover(data2, PrimConfig(coverage=10))
    rows = np.concatenate([r.rows for r in trace.rounds])
    assert rows.size == np.unique(rows).size


def test_constant_response_accepts_everything():
    rng = np.random.default_rng(0)
    trace = cover(Dataset(rng.standard_normal((400, 2)), np.ones(400)), PrimConfig(coverage=5))
    assert all(r.accepted for r in trace.rounds)


def test_cover_stops_early_on_small_active_set():
    rng = np.random.default_rng(0)
    d = Dataset(rng.standard_normal((250, 2)), rng.random(250))
    trace = cover(d, PrimConfig(coverage=20))
    assert len(trace.rounds) < 20 and "active points" in trace.stop_reason


def test_cover_needs_enough_data():
    with pytest.raises(DegenerateDataError):
        cover(Dataset(np.ones((100, 1)), np.ones(100)), PrimConfig(beta=0.05))


def test_cover_deterministic_and_serializable(data2, tmp_path):
    a = cover(data2, PrimConfig(coverage=3, paste=True))
    b = cover(data2, PrimConfig(coverage=3, paste=True))
    strip = lambda t: [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in t.rounds]
    assert strip(a) == strip(b) and a.steps == b.steps
    payload = json.loads(a.to_json())
    assert {s["action"] for s in payload["steps"]} >= {"peel", "accept-box"} or \
        {s["action"] for s in payload["steps"]} >= {"peel", "reject-box"}
    a.rounds[0].box.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().startswith("dimension,lower,upper")


def test_max_mean_criterion_runs(data2):
    trace = cover(data2, PrimConfig(coverage=2, peel_criterion="max_mean"))
    assert len(trace.rounds) == 2


def test_estimator_api(data2):
    est = PRIM(coverage=5)
    assert clone(est).get_params()["coverage"] == 5
    est.fit(data2.X, data2.Z)
    pred = est.predict(data2.X)
    assert pred.shape == (data2.n,) and set(np.unique(pred)) <= {0, 1}
    assert np.array_equal(pred.astype(bool), est.trace_.region_contains(data2.X))


def test_estimator_pc_space_rules_match_boxes(data2):
    est = PRIM(coverage=5, space="pc").fit(data2.X, data2.Z)
    assert len(est.rules_) == sum(est.accepted_)
    union = np.zeros(data2.n, dtype=bool)
    for rule in est.rules_:
        union |= rule.contains(data2.X)
    assert np.array_equal(union, est.predict(data2.X).astype(bool))

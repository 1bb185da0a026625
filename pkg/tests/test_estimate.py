import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.stats.proportion import proportion_confint

from evograph.errors import EstimateUnavailable, InvalidParameter
from evograph.estimate import (
    CSV_COLUMNS,
    estimate_fixation,
    estimates_to_csv,
    parse_policy,
    pick_engine,
    policy_name,
    trial_rng,
    two_proportion_z,
    wilson_ci,
)
from evograph.graphs import make_complete, make_star, make_superstar

JSON_KEYS = ["graph", "r", "policy", "trials", "fix", "ext", "cens", "point", "ci", "level", "seed", "mean_steps"]


class TestWilson:
    def test_zero_successes(self):
        lo, hi = wilson_ci(0, 100)
        assert lo == 0.0
        assert hi == pytest.approx(0.037, abs=5e-4)

    def test_half_is_symmetric(self):
        lo, hi = wilson_ci(50, 100)
        assert 0.5 - lo == pytest.approx(hi - 0.5, abs=1e-12)

    def test_all_successes(self):
        assert wilson_ci(100, 100)[1] == 1.0

    @pytest.mark.parametrize("args", [(0, 0), (5, 4), (-1, 3)])
    def test_invalid_counts(self, args):
        with pytest.raises(InvalidParameter):
            wilson_ci(*args)

    @pytest.mark.parametrize("level", [0.0, 1.0, 1.5])
    def test_invalid_level(self, level):
        with pytest.raises(InvalidParameter):
            wilson_ci(1, 2, level)

    @settings(max_examples=200)
    @given(st.integers(1, 5000), st.data(), st.sampled_from([0.8, 0.9, 0.95, 0.99]))
    def test_matches_statsmodels(self, trials, data, level):
        successes = data.draw(st.integers(0, trials))
        ours = wilson_ci(successes, trials, level)
        ref = proportion_confint(successes, trials, alpha=1 - level, method="wilson")
        assert ours == pytest.approx(ref, abs=1e-12)
        assert ours[0] <= successes / trials <= ours[1]

    def test_wider_at_higher_level(self):
        a = wilson_ci(30, 100, 0.9)
        b = wilson_ci(30, 100, 0.99)
        assert b[0] < a[0] and b[1] > a[1]


class TestPolicies:
    @pytest.mark.parametrize("policy, name", [("uniform", "uniform-singleton"), (3, "vertex:3"),
                                              ({2, 0}, "set:0,2"), ((), "set:")])
    def test_round_trip(self, policy, name):
        assert policy_name(policy) == name
        back = parse_policy(name)
        assert policy_name(back) == name

    def test_unknown(self):
        with pytest.raises(InvalidParameter):
            parse_policy("random-pair")


class TestEstimate:
    def test_k3_contains_exact(self):
        est = estimate_fixation(make_complete(3), 2.0, "uniform", 100_000, 31)
        assert est.ci[0] <= 4 / 7 <= est.ci[1]
        assert est.fixations + est.extinctions + est.censored == est.trials
        assert est.ci[0] <= est.point <= est.ci[1]

    def test_full_start_degenerate(self):
        est = estimate_fixation(make_complete(4), 2.0, set(range(4)), 1, 0)
        assert est.point == 1.0 and est.ci == (1.0, 1.0)
        est = estimate_fixation(make_complete(4), 2.0, set(), 5, 0)
        assert est.point == 0.0 and est.ci == (0.0, 0.0)

    def test_all_censored(self):
        with pytest.raises(EstimateUnavailable) as info:
            estimate_fixation(make_complete(40), 1.0, set(range(20)), 10, 0, max_steps=3)
        assert info.value.diagnostics["censored"] == 10

    def test_partial_censoring_warns(self):
        with pytest.warns(RuntimeWarning, match="censored"):
            est = estimate_fixation(make_complete(3), 2.0, "uniform", 2000, 4, max_steps=2)
        assert est.censored > 0
        assert est.point == est.fixations / est.resolved

    @pytest.mark.parametrize("kwargs", [{"trials": 0}, {"r": -1.0}, {"max_steps": 0}, {"master_seed": -3},
                                        {"workers": 0}, {"initial_policy": 9}, {"engine": "gpu"}])
    def test_validation(self, kwargs):
        args = {"g": make_complete(3), "r": 2.0, "trials": 10}
        args.update(kwargs)
        with pytest.raises(InvalidParameter):
            estimate_fixation(**args)

    def test_lumped_needs_star(self):
        with pytest.raises(InvalidParameter):
            pick_engine(make_complete(4), "lumped")
        assert pick_engine(make_star(4), "auto") == "lumped"
        assert pick_engine(make_star(4), "graph") == "graph"
        assert pick_engine(make_complete(4), "auto") == "graph"

    def test_coverage_on_k3(self):
        g = make_complete(3)
        covered = 0
        for rep in range(200):
            est = estimate_fixation(g, 2.0, "uniform", 1000, 50_000 + rep)
            covered += est.ci[0] <= 4 / 7 <= est.ci[1]
        assert covered >= 180

    def test_star_engines_agree(self):
        g = make_star(12)
        a = estimate_fixation(g, 2.0, "uniform", 20_000, 5, engine="lumped")
        b = estimate_fixation(g, 2.0, "uniform", 20_000, 6, engine="graph")
        assert two_proportion_z(a.fixations, a.trials, b.fixations, b.trials)[1] > 0.01


class TestDeterminism:
    def test_worker_counts(self):
        g = make_superstar(2, 2, 2)
        runs = [estimate_fixation(g, 2.0, "uniform", 600, 99, workers=w, keep_outcomes=True) for w in (1, 2, 4)]
        for est in runs[1:]:
            assert np.array_equal(est.outcomes, runs[0].outcomes)
            assert est.to_dict() == runs[0].to_dict()

    def test_seed_matters(self):
        g = make_complete(5)
        a = estimate_fixation(g, 1.2, "uniform", 500, 1, keep_outcomes=True)
        b = estimate_fixation(g, 1.2, "uniform", 500, 2, keep_outcomes=True)
        assert not np.array_equal(a.outcomes, b.outcomes)

    def test_trial_streams_independent_of_order(self):
        first = trial_rng(7, 3).random(4)
        _ = trial_rng(7, 2).random(100)
        assert np.array_equal(first, trial_rng(7, 3).random(4))
        assert not np.array_equal(first, trial_rng(7, 4).random(4))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 2**31))
    def test_prefix_consistency(self, trials, seed):
        g = make_complete(3)
        full = estimate_fixation(g, 2.0, "uniform", trials + 5, seed, keep_outcomes=True)
        part = estimate_fixation(g, 2.0, "uniform", trials, seed, keep_outcomes=True)
        assert np.array_equal(full.outcomes[:trials], part.outcomes)


class TestSerialization:
    def test_json_schema(self):
        est = estimate_fixation(make_star(5), 2.0, 0, 300, 12)
        data = json.loads(est.to_json())
        assert list(data) == JSON_KEYS
        assert data["graph"]["family"] == "star" and data["graph"]["n"] == 6
        assert data["policy"] == "vertex:0"
        assert isinstance(data["ci"], list) and len(data["ci"]) == 2

    def test_csv_mirror(self):
        ests = [estimate_fixation(make_complete(3), r, "uniform", 200, 1) for r in (1.0, 2.0)]
        text = estimates_to_csv(ests)
        rows = list(csv.DictReader(io.StringIO(text)))
        assert tuple(rows[0]) == CSV_COLUMNS == tuple(JSON_KEYS)
        assert len(rows) == 2
        assert json.loads(rows[1]["ci"]) == list(ests[1].ci)
        assert json.loads(rows[0]["graph"]) == ests[0].graph
        assert int(rows[1]["fix"]) == ests[1].fixations

    def test_csv_to_handle(self):
        buf = io.StringIO()
        assert estimates_to_csv([estimate_fixation(make_complete(2), 2.0, "uniform", 10, 0)], buf) is None
        assert buf.getvalue().startswith("graph,r,policy")


def test_two_proportion_z():
    z, p = two_proportion_z(50, 100, 50, 100)
    assert z == 0 and p == 1
    z, p = two_proportion_z(60, 100, 40, 100)
    assert z == pytest.approx(2.8284, abs=1e-4)
    assert p == pytest.approx(0.004678, abs=1e-5)
    assert two_proportion_z(0, 10, 0, 10) == (0.0, 1.0)

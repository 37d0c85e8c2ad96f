"""Campaign loop, seed streams, trials-to-reduction and suite aggregation."""
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpilc import harness as hs
from gpilc import plants as pl
from gpilc.errors import ConfigError, DegenerateModelError, DivergenceError, NumericalError
from gpilc.persist import load_campaign


def small(**kw):
    base = dict(plant="LINEAR", trials=4, seed=3, n_starts=2)
    base.update(kw)
    return hs.CampaignConfig(**base)


# -- seeds and config -------------------------------------------------------

def test_derive_seed_streams_independent():
    a = [hs.derive_seed(7, hs.STREAM_PLANT, j) for j in range(5)]
    assert a == [hs.derive_seed(7, hs.STREAM_PLANT, j) for j in range(5)]
    assert len(set(a)) == 5
    assert hs.derive_seed(7, hs.STREAM_PLANT, 0) != hs.derive_seed(7, hs.STREAM_GP, 0)
    assert hs.derive_seed(7, hs.STREAM_PLANT, 0) != hs.derive_seed(8, hs.STREAM_PLANT, 0)


def test_config_defaults_and_round_trip():
    cfg = hs.CampaignConfig()
    assert (cfg.trials, cfg.history, cfg.early_stop) == (15, 3, False)
    assert hs.CampaignConfig.from_dict(cfg.to_dict()) == cfg
    assert hs.CampaignConfig(plant="cube", variant="IS").plant == "CUBE"


@pytest.mark.parametrize("bad", [
    {"variant": "xx"}, {"plant": "ROBOT"}, {"trials": 0}, {"history": 0},
    {"input_variance": -1.0}, {"reference": "task0"}, {"repeat_runs": 0},
    {"stop_at_reduction": 1.0}, {"colour": "red"}, {"trials": "many"},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        hs.CampaignConfig.from_dict(bad)


def test_config_must_be_mapping():
    with pytest.raises(ConfigError):
        hs.CampaignConfig.from_dict([1, 2])


def test_reference_resolution_errors():
    plant = pl.get_plant("CUBE")
    with pytest.raises(ConfigError):
        hs.resolve_reference(small(plant="CUBE", reference={"task": 9}), plant)
    with pytest.raises(ConfigError):
        hs.resolve_reference(small(plant="CUBE", reference={"seed": 1}), plant)
    ref = hs.resolve_reference(small(plant="CUBE", reference={"seed": 1, "cutoff": 1.0,
                                                               "variance": 0.1}), plant)
    assert ref.n == plant.horizon


# -- trials to reduction ----------------------------------------------------

def test_trials_to_reduction_examples():
    eps = [1.0, 0.6, 0.45, 0.3, 0.15]
    assert hs.trials_to_reduction(eps, 0.5) == 2
    assert hs.trials_to_reduction(eps, 0.8) == 4
    assert hs.trials_to_reduction([1.0, 0.9, 0.8], 0.5) is None
    assert hs.trials_to_reduction([], 0.5) is None
    assert hs.trials_to_reduction([0.0, 0.0], 0.8) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=20), st.floats(0.05, 0.95),
       st.floats(0.05, 0.95))
def test_trials_to_reduction_monotone_in_fraction(eps, a, b):
    lo, hi = sorted((a, b))
    t_lo, t_hi = hs.trials_to_reduction(eps, lo), hs.trials_to_reduction(eps, hi)
    if t_hi is not None:
        assert t_lo is not None and t_lo <= t_hi


def test_aggregate_penalizes_unreached():
    agg = hs.aggregate([1, None, 3], 15)
    assert agg == {"mean": pytest.approx(19 / 3), "median": 3.0, "not_reached": 1}


def test_summarize_suite_medians_then_means():
    rows = []
    for task, t80s in enumerate([[2, 3, 9], [4, 4, None]]):
        for seed, v in enumerate(t80s):
            rows.append({"plant": "CUBE", "task": task, "variant": "io", "seed": seed,
                         "t50": 1, "t80": v})
    s = hs.summarize_suite(rows, trials=15)
    assert s["tasks"]["CUBE/0/io"]["t80"]["median"] == 3.0
    assert s["tasks"]["CUBE/1/io"]["t80"]["median"] == 4.0
    assert s["variants"]["io"]["t80"] == {"mean": 3.5, "median": 3.5}


# -- campaigns --------------------------------------------------------------

def test_campaign_on_linear_plant_learns():
    clog = hs.run_learning(small(trials=6))
    assert clog.status == "complete" and len(clog.entries) == 6
    assert clog.eps[-1] < 0.5 * clog.eps[0]
    assert [t.j for t in clog.entries] == list(range(1, 7))
    assert np.allclose(hs.recompute_eps(clog), clog.eps, rtol=0, atol=1e-12)


@pytest.mark.parametrize("variant", ["io", "is"])
def test_campaign_is_deterministic(variant):
    a = hs.run_learning(small(variant=variant, trials=3))
    b = hs.run_learning(small(variant=variant, trials=3))
    assert a.eps == b.eps and np.array_equal(a.final_input, b.final_input)
    c = hs.run_learning(small(variant=variant, trials=3, seed=4))
    assert a.eps != c.eps


def test_early_stop_needs_two_zero_trials():
    clog = hs.run_learning(small(trials=15, early_stop=True, noise=False, e_R=0.5))
    eps = clog.eps
    assert clog.status == "early-stop"
    assert eps[-1] == 0.0 and eps[-2] == 0.0
    assert all(not (a == 0 and b == 0) for a, b in zip(eps[:-2], eps[1:-1]))


def test_stop_at_reduction_keeps_prefix():
    full = hs.run_learning(small(trials=8))
    cut = hs.run_learning(small(trials=8, stop_at_reduction=0.8))
    n = len(cut.eps)
    assert cut.eps == full.eps[:n]
    if cut.status == "target-reached":
        assert hs.reduction_summary(cut.eps) == hs.reduction_summary(full.eps)


def test_degenerate_model_falls_back_to_fresh_input(monkeypatch):
    def dead(P, variant):
        raise DegenerateModelError("vanishing Jacobian")

    monkeypatch.setattr(hs, "compute_weights", dead)
    clog = hs.run_learning(small(trials=3))
    assert clog.status == "complete"
    assert all(t.fallback for t in clog.entries)
    assert not np.array_equal(clog.inputs[0], clog.inputs[1])


def test_aborted_campaign_leaves_partial_log(monkeypatch, tmp_path):
    real = hs._fit_and_linearize

    def flaky(cfg, window, plant, u, warm):
        if window[-1].index == 3:
            raise NumericalError("forced failure")
        return real(cfg, window, plant, u, warm)

    monkeypatch.setattr(hs, "_fit_and_linearize", flaky)
    with pytest.raises(NumericalError):
        hs.run_learning(small(trials=5), out_dir=tmp_path)
    clog = load_campaign(tmp_path)
    assert clog.status == "aborted" and "forced failure" in clog.message
    assert [t.j for t in clog.entries] == [1, 2]


def test_divergence_reports_trial(tmp_path):
    ref = hs.resolve_reference(small(), pl.get_plant("LINEAR"))
    cfg = small(plant_overrides={"divergence_bound": 1e-4}, e_R=0.0, input_variance=1.0)
    with pytest.raises(DivergenceError) as info:
        hs.run_learning(cfg, out_dir=tmp_path, reference=ref)
    assert info.value.trial == 1
    assert load_campaign(tmp_path).status == "aborted"


def test_repeatability_floor_deterministic():
    plant = pl.get_plant("CUBE")
    ref = hs.resolve_reference(small(plant="CUBE"), plant)
    a = hs.run_repeatability(plant, ref, 5, seed=1)
    assert a == hs.run_repeatability(plant, ref, 5, seed=1)
    assert hs.run_repeatability(plant, ref, 5, seed=1, noise_on=False) == pytest.approx(0, abs=1e-10)


def test_compare_variants_identical_runs():
    cfg = small(trials=3, e_R=0.01)
    a = hs.compare_variants(cfg, dataclasses.replace(cfg, variant="is"))
    b = hs.compare_variants(cfg, dataclasses.replace(cfg, variant="is"))
    assert a == b
    assert set(a["variants"]) == {"io", "is"}
    with pytest.raises(ConfigError):
        hs.compare_variants(cfg, dataclasses.replace(cfg, variant="is", seed=9))


def test_suite_tasks_cover_testbeds():
    tasks = hs.suite_tasks()
    assert len(tasks) == 9 and {p for p, _ in tasks} == set(pl.TESTBEDS)

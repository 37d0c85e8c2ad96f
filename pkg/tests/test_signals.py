"""Spectral helpers, error metrics and reference generation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpilc import plants as pl
from gpilc import signals as sg
from gpilc.errors import GenerationFailedError, InvalidArgumentError

FS = 50.0


def sine(f, N=200, amp=1.0, fs=FS):
    return amp * np.sin(2 * np.pi * f * np.arange(N) / fs)


def test_error_trajectory():
    r = np.array([1.0, 2.0])
    assert np.array_equal(sg.error_trajectory(r, r), np.zeros(2))
    assert sg.error_trajectory(r, np.zeros(2)).tolist() == [1.0, 2.0]
    y = np.array([0.5, -3.0])
    assert np.array_equal(sg.error_trajectory(r, y), -sg.error_trajectory(y, r))
    with pytest.raises(InvalidArgumentError):
        sg.error_trajectory(r, np.zeros(3))


# -- significant frequency --------------------------------------------------

def test_significant_frequency_single_line():
    N = 200
    f0 = sg.significant_frequency(sine(2.0, N), FS)
    assert abs(f0 - 2.0) <= FS / N


def test_significant_frequency_two_lines():
    # power shares 1 : 0.05^2 -> the 1 Hz line alone holds 99.75% >= 99%
    r = sine(1.0) + sine(5.0, amp=0.05)
    assert sg.significant_frequency(r, FS, 0.99) == pytest.approx(1.0, abs=FS / 200)
    # above the 1 Hz share the 5 Hz line is needed
    assert sg.significant_frequency(r, FS, 0.999) == pytest.approx(5.0, abs=FS / 200)


def test_significant_frequency_white_noise():
    vals = [sg.significant_frequency(np.random.default_rng(s).normal(size=500), FS) for s in range(10)]
    assert np.mean(vals) >= 0.9 * (FS / 2) * 0.99


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(0.05, 0.95), b=st.floats(0.05, 0.95))
def test_significant_frequency_monotone_in_threshold(seed, a, b):
    r = np.random.default_rng(seed).normal(size=64)
    lo, hi = sorted((a, b))
    assert sg.significant_frequency(r, FS, lo) <= sg.significant_frequency(r, FS, hi)


def test_significant_frequency_errors():
    with pytest.raises(InvalidArgumentError):
        sg.significant_frequency(np.ones(10), FS)
    with pytest.raises(InvalidArgumentError):
        sg.significant_frequency(sine(1.0), FS, 1.0)


# -- filtering --------------------------------------------------------------

def test_lowpass_pass_and_stop_bands():
    N = 200  # whole periods for every test tone, so each is a single bin
    x = sine(2.0, N)
    np.testing.assert_allclose(sg.zero_phase_lowpass(x, 5.0, FS), x, atol=1e-10)
    assert np.max(np.abs(sg.zero_phase_lowpass(sine(10.0, N), 5.0, FS))) <= 1e-10


def test_lowpass_idempotent_and_mean_preserving():
    x = np.random.default_rng(0).normal(size=301) + 0.7
    once = sg.zero_phase_lowpass(x, 3.0, FS)
    np.testing.assert_allclose(sg.zero_phase_lowpass(once, 3.0, FS), once, atol=1e-12)
    assert once.mean() == pytest.approx(x.mean(), abs=1e-12)


def test_lowpass_cutoff_range():
    for bad in (0.0, 25.0, 30.0):
        with pytest.raises(InvalidArgumentError):
            sg.zero_phase_lowpass(np.ones(8), bad, FS)


# -- metrics ----------------------------------------------------------------

def scaled_error(r, rel):
    """An error vector whose norm is ``rel * ||r||``."""
    e = np.ones_like(r)
    return e * rel * np.linalg.norm(r) / np.linalg.norm(e)


def test_relative_error_examples():
    r = sine(1.0)
    m = sg.relative_error(scaled_error(r, 0.15), r, 0.05)
    assert m.relative_raw == pytest.approx(0.15) and m.relative == pytest.approx(0.10)
    assert sg.relative_error(scaled_error(r, 0.08), r, 0.12).relative == 0.0
    assert sg.relative_error(np.zeros_like(r), r, 0.0).relative == 0.0
    with pytest.raises(InvalidArgumentError):
        sg.relative_error(r, np.zeros_like(r))


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 10), b=st.floats(0, 10), e_R=st.floats(0, 1))
def test_relative_error_clamped_and_monotone(a, b, e_R):
    r = sine(1.0, 50)
    lo, hi = sorted((a, b))
    m_lo = sg.relative_error(scaled_error(r, lo), r, e_R)
    m_hi = sg.relative_error(scaled_error(r, hi), r, e_R)
    assert m_lo.relative >= 0.0
    assert m_lo.relative <= m_hi.relative + 1e-15


def test_max_repetitive_error_examples():
    r = sine(1.0)
    assert sg.max_repetitive_error([r.copy() for _ in range(10)], r) == 0.0
    y = r - scaled_error(r, 0.07)
    assert sg.max_repetitive_error([y], r) == pytest.approx(0.07)
    assert sg.max_repetitive_error([r, y, r], r) == pytest.approx(0.07)
    with pytest.raises(InvalidArgumentError):
        sg.max_repetitive_error([r], np.zeros_like(r))


def test_repetitive_floor_matches_noise_norm():
    """Monte Carlo floor on the noisy linear plant vs sigma*sqrt(N)/||r||."""
    plant = pl.get_plant(pl.LINEAR, output_noise_std=0.01)
    task = plant.tasks[0]
    ref = sg.generate_reference(plant, task["seed"], task["cutoff"], task["variance"])
    predicted = 0.01 * np.sqrt(ref.n) / np.linalg.norm(ref.r)
    for seed in range(5):
        ys = [pl.run_trial(plant, ref.realizing_input, seed=100 * seed + i).record.y for i in range(10)]
        e_R = sg.max_repetitive_error(ys, ref.r)
        assert 0.5 * predicted <= e_R <= 2.0 * predicted


# -- references -------------------------------------------------------------

def test_generated_reference_is_realizable():
    plant = pl.get_plant(pl.LINEAR)
    ref = sg.generate_reference(plant, 4, 2.0, 1.0)
    assert ref.provenance == {"kind": "generated", "seed": 4, "cutoff": 2.0, "variance": 1.0,
                              "plant": "LINEAR"}
    replay = pl.run_trial(plant, ref.realizing_input, noise_on=False).record.y
    np.testing.assert_allclose(replay, ref.r, atol=1e-10)
    again = sg.generate_reference(plant, 4, 2.0, 1.0)
    assert np.array_equal(again.r, ref.r) and np.array_equal(again.realizing_input, ref.realizing_input)


@pytest.mark.parametrize("plant_id", pl.TESTBEDS)
def test_testbed_references_realizable(plant_id):
    plant = pl.get_plant(plant_id)
    task = plant.tasks[0]
    ref = sg.generate_reference(plant, task["seed"], task["cutoff"], task["variance"])
    replay = pl.run_trial(plant, ref.realizing_input, noise_on=False).record.y
    np.testing.assert_allclose(replay, ref.r, atol=1e-10)


def test_zero_variance_reference_is_rest():
    ref = sg.generate_reference(pl.get_plant(pl.LINEAR), 0, 1.0, 0.0)
    assert np.all(ref.r == 0.0)


def test_generation_failure_is_reported():
    plant = pl.get_plant(pl.LINEAR, divergence_bound=1e-3)
    with pytest.raises(GenerationFailedError, match="smaller variance"):
        sg.generate_reference(plant, 0, 2.0, 100.0)


def test_reference_invariants():
    with pytest.raises(InvalidArgumentError):
        sg.Reference(np.ones(1), FS)
    with pytest.raises(InvalidArgumentError):
        sg.Reference(np.ones(4), FS, {"kind": "generated"})
    with pytest.raises(InvalidArgumentError):
        sg.Reference(np.ones(4), FS, {}, np.ones(3))

"""Noise schedules, time masks, resample plans."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xdc import (
    build_resample_schedule,
    build_time_mask,
    forward_noise,
    make_schedule,
    predict_x0,
)
from xdc.errors import ConfigError, ScheduleError, StepError

# Frozen from an independent cumulative-product script over the pinned
# linear ramp 1e-4*(1000/T) .. 0.02*(1000/T).
ALPHA_BAR_250 = 3.264409135491e-05


def test_schedule_invariants():
    for steps in (1, 2, 7, 50, 250):
        s = make_schedule(steps)
        assert len(s.sigma) == len(s.alpha) == len(s.alpha_bar) == steps + 1
        assert s.alpha_bar[0] == 1.0
        assert np.all(s.alpha[1:] > 0) and np.all(s.alpha[1:] < 1)
        assert np.all(np.diff(s.alpha_bar) < 0)


def test_schedule_single_step():
    s = make_schedule(1)
    assert s.alpha_bar[1] == s.alpha[1]


def test_schedule_endpoint_ordering():
    s = make_schedule(50)
    assert s.alpha_bar[50] < s.alpha_bar[1] < s.alpha_bar[0] == 1.0


def test_schedule_frozen_endpoint():
    s = make_schedule(250)
    np.testing.assert_allclose(s.alpha_bar[250], ALPHA_BAR_250, rtol=1e-9)


def test_schedule_rejects_bad_steps():
    with pytest.raises(ScheduleError):
        make_schedule(0)
    with pytest.raises(ScheduleError):
        make_schedule(10, kind="cosine")


def test_schedule_serialization_digest():
    s = make_schedule(50)
    text = s.to_config_text()
    assert "schedule_steps = 50" in text
    assert s.digest() == make_schedule(50).digest()
    assert s.digest() != make_schedule(51).digest()


def test_forward_noise_endpoints():
    rng = np.random.default_rng(0)
    s = make_schedule(50)
    x0 = rng.normal(size=(4, 4, 1))
    np.testing.assert_array_equal(forward_noise(x0, 0, np.zeros_like(x0), s), x0)
    t = 25
    np.testing.assert_allclose(
        forward_noise(x0, t, np.zeros_like(x0), s), np.sqrt(s.alpha_bar[t]) * x0
    )
    with pytest.raises(StepError):
        forward_noise(x0, 51, np.zeros_like(x0), s)


def test_forward_noise_monte_carlo_variance():
    # Sample variance of noised zeros should track 1 - alpha_bar within 5%.
    s = make_schedule(50)
    rng = np.random.default_rng(1)
    for t in (10, 25, 50):
        draws = np.array([
            forward_noise(np.zeros((1, 1, 1)), t, rng.normal(size=(1, 1, 1)), s)[0, 0, 0]
            for _ in range(10_000)
        ])
        np.testing.assert_allclose(draws.var(), 1.0 - s.alpha_bar[t], rtol=0.05)


def test_predict_x0_round_trip():
    s = make_schedule(50)
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(6, 5, 2))
    for t in range(1, 51):
        eps = rng.normal(size=x0.shape)
        x_t = forward_noise(x0, t, eps, s)
        np.testing.assert_allclose(predict_x0(x_t, eps, t, s), x0, atol=1e-6)


def test_predict_x0_zero_estimate_and_errors():
    s = make_schedule(50)
    rng = np.random.default_rng(3)
    x_t = rng.normal(size=(3, 3, 1))
    t = 25
    np.testing.assert_allclose(
        predict_x0(x_t, np.zeros_like(x_t), t, s), x_t / np.sqrt(s.alpha_bar[t])
    )
    with pytest.raises(StepError):
        predict_x0(x_t, x_t, 0, s)


def test_predict_x0_independent_formula():
    # Second, separately coded evaluation of the inversion formula.
    s = make_schedule(50)
    rng = np.random.default_rng(4)
    x_t = rng.normal(size=(4, 4, 1))
    eps = rng.normal(size=(4, 4, 1))
    t = 25
    ab = s.alpha_bar[t]
    expected = x_t / np.sqrt(ab) - np.sqrt(1.0 - ab) * eps / np.sqrt(ab)
    np.testing.assert_allclose(predict_x0(x_t, eps, t, s), expected, rtol=1e-12)


# ---------------------------------------------------------------------------
# time mask


def guided_steps(tm, row, col):
    """Transitions t (descending) whose written level t-1 passes the gate."""
    return [
        t for t in range(tm.steps, 0, -1) if tm.gate(t - 1)[row, col] == 1.0
    ]


def test_time_mask_twenty_percent_inside_all_outside():
    mask = np.zeros((2, 2))
    mask[0, 0] = 1.0
    tm = build_time_mask(mask, 0.2, 1.0, 50)
    assert tm.thresholds[0, 0] == 40.0
    assert tm.thresholds[1, 1] == 0.0
    assert guided_steps(tm, 0, 0) == list(range(50, 40, -1))  # exactly 10 steps
    assert len(guided_steps(tm, 1, 1)) == 50  # guided at every step


def test_time_mask_saturated_strength():
    mask = np.ones((2, 2))
    tm = build_time_mask(mask, 1.0, 1.0, 50)
    assert len(guided_steps(tm, 0, 0)) == 50


def test_time_mask_zero_strength():
    # Strength 0 means a zero fraction of guided steps: the region is left
    # entirely to the model (plain inpainting/pure sampling reduction).
    mask = np.ones((2, 2))
    tm = build_time_mask(mask, 0.0, 0.0, 50)
    assert guided_steps(tm, 0, 0) == []


def test_time_mask_fractional_blend():
    mask = np.full((1, 1), 0.5)
    tm = build_time_mask(mask, 0.2, 1.0, 50)
    assert tm.thresholds[0, 0] == 20.0  # convex combination of 40 and 0


def test_time_mask_rejects_bad_params():
    mask = np.zeros((2, 2))
    with pytest.raises(ConfigError):
        build_time_mask(mask, 1.5, 0.0, 50)
    with pytest.raises(ConfigError):
        build_time_mask(mask, 0.5, -0.1, 50)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 80))
def test_gate_monotone_in_level(t_in, t_out, steps):
    rng = np.random.default_rng(steps)
    mask = (rng.uniform(size=(4, 4)) > 0.5).astype(float)
    tm = build_time_mask(mask, t_in, t_out, steps)
    prev = np.zeros((4, 4))
    for level in range(steps):
        gate = tm.gate(level)
        assert np.all(gate >= prev)
        prev = gate


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 60))
def test_raising_strength_never_shrinks_guided_set(t_lo, t_hi, steps):
    if t_lo > t_hi:
        t_lo, t_hi = t_hi, t_lo
    mask = np.ones((2, 2))
    lo = build_time_mask(mask, t_lo, 1.0, steps)
    hi = build_time_mask(mask, t_hi, 1.0, steps)
    lo_steps = set(guided_steps(lo, 0, 0))
    hi_steps = set(guided_steps(hi, 0, 0))
    assert lo_steps <= hi_steps


# ---------------------------------------------------------------------------
# resample schedule


def test_resample_plain():
    plan = build_resample_schedule(50, 0.0, 4)
    assert plan.denoise_evaluations == 50
    assert plan.actions == tuple(("denoise", t) for t in range(50, 0, -1))


def test_resample_counts_golden():
    plan = build_resample_schedule(50, 0.2, 2)
    assert plan.denoise_evaluations == 60  # 50 + 1 * ceil(0.2 * 50)


def test_resample_single_repeat_degenerate():
    assert (
        build_resample_schedule(50, 1.0, 1).actions
        == build_resample_schedule(50, 0.0, 1).actions
    )


def test_resample_count_formula_sweep():
    for steps in (25, 50, 250):
        for frac in (0.0, 0.2, 0.5, 1.0):
            for repeats in (1, 2, 4):
                plan = build_resample_schedule(steps, frac, repeats)
                expected = steps + (repeats - 1) * int(np.ceil(frac * steps))
                assert plan.denoise_evaluations == expected


def test_resample_renoise_pairing():
    plan = build_resample_schedule(40, 0.3, 3)
    actions = plan.actions
    for i, (kind, t) in enumerate(actions):
        if kind == "renoise":
            assert actions[i + 1] == ("denoise", t)


def test_resample_rejects_bad_params():
    with pytest.raises(ConfigError):
        build_resample_schedule(50, 1.5, 2)
    with pytest.raises(ConfigError):
        build_resample_schedule(50, 0.5, 0)

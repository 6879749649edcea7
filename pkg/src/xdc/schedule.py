"""Diffusion noise schedules, time masks, and resampling schedules.

Step indexing: t runs T..1 in the backward process; index 0 is clean
data. Schedule arrays have length T+1 with position 0 holding the clean
endpoint (sigma 0, alpha_bar 1).
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ScheduleError, ShapeError, StepError
from .grids import as_mask

# Variance clip keeps alpha in (0, 1) even for very short schedules.
SIGMA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise variances and their running products."""

    steps: int
    sigma: np.ndarray  # (T+1,), sigma[0] = 0
    alpha: np.ndarray  # (T+1,), alpha[t] = 1 - sigma[t]
    alpha_bar: np.ndarray  # (T+1,), cumulative product, alpha_bar[0] = 1

    def check_step(self, t, allow_zero=False):
        lo = 0 if allow_zero else 1
        if not (lo <= t <= self.steps):
            raise StepError(f"step {t} outside [{lo}, {self.steps}]")

    def to_config_text(self):
        """Human-readable key-value block for reproducibility logs."""
        lines = [
            "schedule_kind = linear-sigma",
            f"schedule_steps = {self.steps}",
            f"schedule_sigma_first = {float(self.sigma[1])!r}",
            f"schedule_sigma_last = {float(self.sigma[self.steps])!r}",
            f"schedule_alpha_bar_last = {float(self.alpha_bar[self.steps])!r}",
            f"schedule_digest = {self.digest()}",
        ]
        return "\n".join(lines)

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.sigma).tobytes()).hexdigest()


def make_schedule(steps, kind="linear-sigma"):
    """Linear per-step variance ramp rescaled to the step count.

    The ramp runs 1e-4 * (1000/T) .. 0.02 * (1000/T), clipped so every
    per-step variance stays below 1.
    """
    if steps < 1:
        raise ScheduleError(f"schedule needs at least one step, got {steps}")
    if kind != "linear-sigma":
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    scale = 1000.0 / steps
    ramp = np.linspace(1e-4 * scale, 0.02 * scale, steps)
    ramp = np.minimum(ramp, SIGMA_MAX)
    sigma = np.concatenate([[0.0], ramp])
    alpha = 1.0 - sigma
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(steps=steps, sigma=sigma, alpha=alpha, alpha_bar=alpha_bar)


def forward_noise(x0, t, eps, sched):
    """Noise clean data to level t: sqrt(a_bar)*x0 + sqrt(1-a_bar)*eps."""
    sched.check_step(t, allow_zero=True)
    if x0.shape != eps.shape:
        raise ShapeError(f"noise shape {eps.shape} does not match data {x0.shape}")
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_x0(x_t, eps_hat, t, sched):
    """Invert the forward noising given a noise estimate."""
    if t == 0:
        raise StepError("nothing to invert at step 0")
    sched.check_step(t)
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"estimate shape {eps_hat.shape} does not match {x_t.shape}")
    ab = sched.alpha_bar[t]
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


# ---------------------------------------------------------------------------
# per-pixel guidance time mask


@dataclass(frozen=True)
class TimeMask:
    """Per-pixel step thresholds below which guidance switches off.

    ``gate(level)`` is 1 where level >= threshold. The sampler queries the
    gate at the level of the state it writes (t-1 for the transition
    t -> t-1), so a region with strength f is guided for exactly the first
    f*T transitions of the backward process: strength 1 guides every step,
    strength 0 none.
    """

    thresholds: np.ndarray  # (H, W) real-valued
    steps: int

    def gate(self, level):
        return (level >= self.thresholds).astype(np.float64)

    def guided_levels(self, row, col):
        """Output levels t-1 at which the pixel is guided, descending."""
        return [
            t - 1 for t in range(self.steps, 0, -1)
            if t - 1 >= self.thresholds[row, col]
        ]


def build_time_mask(mask, strength_in, strength_out, steps):
    """Threshold grid: (1-s_in)*T inside the mask, (1-s_out)*T outside.

    Fractional mask values (smoothed masks) blend the two thresholds,
    staggering per-pixel stop times.
    """
    mask = as_mask(mask)
    for name, v in (("strength_in", strength_in), ("strength_out", strength_out)):
        if not (0.0 <= v <= 1.0):
            raise ConfigError(f"{name} must lie in [0, 1], got {v}")
    thresholds = (1.0 - strength_in) * steps * mask + (1.0 - strength_out) * steps * (
        1.0 - mask
    )
    return TimeMask(thresholds=thresholds, steps=steps)


# ---------------------------------------------------------------------------
# resampling schedule


@dataclass(frozen=True)
class ResampleSchedule:
    """Ordered (action, step) list for the backward process.

    Actions are "denoise" (consume x_t, produce x_{t-1}) and "renoise"
    (push x_{t-1} back to x_t through the one-step forward kernel). Every
    renoise is immediately followed by a denoise at the same step.
    """

    start_fraction: float
    repeats: int
    steps: int
    actions: tuple

    @property
    def denoise_evaluations(self):
        return sum(1 for kind, _ in self.actions if kind == "denoise")


def build_resample_schedule(steps, start_fraction, repeats):
    """Plain descending schedule with repeated steps near the end.

    For t <= ceil(start_fraction * T) each denoise is followed by
    (repeats - 1) renoise+denoise pairs with jump length 1. Total denoiser
    evaluations: T + (repeats - 1) * ceil(start_fraction * T).
    """
    if steps < 1:
        raise ScheduleError(f"schedule needs at least one step, got {steps}")
    if not (0.0 <= start_fraction <= 1.0):
        raise ConfigError(f"resample start must lie in [0, 1], got {start_fraction}")
    if repeats < 1:
        raise ConfigError(f"resample repeats must be >= 1, got {repeats}")
    boundary = int(np.ceil(start_fraction * steps))
    actions = []
    for t in range(steps, 0, -1):
        actions.append(("denoise", t))
        if t <= boundary:
            for _ in range(repeats - 1):
                actions.append(("renoise", t))
                actions.append(("denoise", t))
    return ResampleSchedule(
        start_fraction=start_fraction,
        repeats=repeats,
        steps=steps,
        actions=tuple(actions),
    )

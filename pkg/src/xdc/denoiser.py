"""Denoiser backends and classifier-free guidance combination.

A backend predicts the noise content of a state x_t. Two implementations
ship: an analytic oracle whose data distribution is a known Gaussian
mixture (its posterior mean is exact, so the sampler can be verified
without any neural network), and a client for a remote model bridge (see
bridge_client).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .grids import as_grid
from .kernels import gmm_posterior
from .schedule import NoiseSchedule, make_schedule


def cfg_combine(eps_uncond, eps_cond, scale):
    """Classifier-free guidance: extrapolate from the unconditional estimate.

    The limits scale=0 and scale=1 return the respective input exactly.
    """
    if eps_uncond.shape != eps_cond.shape:
        raise ShapeError(
            f"estimate shapes differ: {eps_uncond.shape} vs {eps_cond.shape}"
        )
    if scale == 0.0:
        return eps_uncond.copy()
    if scale == 1.0:
        return eps_cond.copy()
    return eps_uncond + scale * (eps_cond - eps_uncond)


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic mixture over grids: weights (K,), means (K, H, W, C), stds (K,)."""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stds, dtype=np.float64)
        if means.ndim != 4:
            raise ConfigError(f"means must be (K, H, W, C), got shape {means.shape}")
        k = means.shape[0]
        if weights.shape != (k,) or stds.shape != (k,):
            raise ConfigError("weights/stds must have one entry per component")
        if np.any(weights <= 0):
            raise ConfigError("component weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ConfigError("component weights must sum to 1")
        if np.any(stds < 0) or not np.all(np.isfinite(stds)):
            raise ConfigError("component stds must be finite and >= 0")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def grid_shape(self):
        return self.means.shape[1:]


def oracle_posterior_x0(x_t, t, mixture, sched):
    """Exact posterior mean of the clean grid and component responsibilities."""
    sched.check_step(t)
    x_t = as_grid(x_t)
    if x_t.shape != mixture.grid_shape:
        raise ShapeError(
            f"state shape {x_t.shape} does not match mixture {mixture.grid_shape}"
        )
    k = mixture.means.shape[0]
    flat_means = np.ascontiguousarray(mixture.means.reshape(k, -1))
    x0_flat, resp = gmm_posterior(
        np.ascontiguousarray(x_t.reshape(-1)),
        flat_means,
        mixture.stds,
        np.log(mixture.weights),
        sched.alpha_bar[t],
    )
    return x0_flat.reshape(x_t.shape), resp


def oracle_eps(x_t, t, mixture, sched):
    """Noise estimate implied by the exact posterior mean."""
    x0_hat, _ = oracle_posterior_x0(x_t, t, mixture, sched)
    ab = sched.alpha_bar[t]
    return (x_t - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)


@dataclass
class OracleDenoiser:
    """Analytic backend: exact noise prediction for a known mixture.

    Ignores conditions (the mixture is unconditional); counts denoiser
    evaluations in ``calls`` for cost accounting.
    """

    mixture: GaussianMixture
    schedule: NoiseSchedule
    calls: int = field(default=0)

    @property
    def grid_shape(self):
        return self.mixture.grid_shape

    @property
    def steps(self):
        return self.schedule.steps

    def predict_eps(self, x_t, t, condition=None, guidance_scale=1.0):
        self.calls += 1
        return oracle_eps(x_t, t, self.mixture, self.schedule)


def reference_oracle(reference, std=0.2, schedule=None, steps=50):
    """Single-component oracle centered on a reference grid.

    The composite CLI uses this as its default backend: the implied model
    pulls every sample toward the (pasted) reference while the guidance
    machinery does the per-region work.
    """
    reference = as_grid(reference)
    if schedule is None:
        schedule = make_schedule(steps)
    mixture = GaussianMixture(
        weights=np.array([1.0]),
        means=reference[None, ...],
        stds=np.array([float(std)]),
    )
    return OracleDenoiser(mixture=mixture, schedule=schedule)


def demo_mixture(height=16, width=16, channels=1, amplitude=0.5, std=0.1):
    """Two balanced components with opposite half-plane patterns.

    The left half of the first mean sits at +amplitude and the right half
    at -amplitude; the second mean is the negation. Used by the toy
    sampling demo and the sampler's statistical checks.
    """
    pattern = np.full((height, width, channels), -amplitude)
    pattern[:, : width // 2, :] = amplitude
    return GaussianMixture(
        weights=np.array([0.5, 0.5]),
        means=np.stack([pattern, -pattern]),
        stds=np.array([std, std]),
    )

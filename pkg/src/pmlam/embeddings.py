"""Trainable Gaussian embedding tables.

Each entity (user or item) owns a mean vector ``mu`` and a diagonal-covariance
vector ``sigma``. Tables are kept inside the unit sphere by :func:`project`
after every optimizer step, and sampled via the location-scale transform
``value = mu + sqrt(sigma) * eps`` so samples stay differentiable in both
parameters.
"""

from dataclasses import dataclass

import numpy as np

from .distance import SIGMA_MIN

SIGMA_MAX = 1.0


@dataclass
class GaussianEmbeddingTable:
    """Per-entity Gaussian parameters: ``mu`` and ``sigma`` are (n, h) arrays."""

    mu: np.ndarray
    sigma: np.ndarray

    @property
    def n(self):
        return self.mu.shape[0]

    @property
    def h(self):
        return self.mu.shape[1]

    def copy(self):
        return GaussianEmbeddingTable(self.mu.copy(), self.sigma.copy())

    def check(self, norm_slack=1e-9):
        """Assert the table invariants; raises AssertionError on violation."""
        assert np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma))
        assert np.all(np.linalg.norm(self.mu, axis=1) <= 1.0 + norm_slack)
        # flooring after renormalization can exceed the norm bound by O(h * SIGMA_MIN^2)
        assert np.all(np.linalg.norm(self.sigma, axis=1) <= 1.0 + norm_slack)
        assert np.all(self.sigma >= SIGMA_MIN) and np.all(self.sigma <= SIGMA_MAX)


@dataclass
class SampledEmbedding:
    """One reparameterized draw: ``value = mu + sqrt(sigma) * noise``."""

    value: np.ndarray
    noise: np.ndarray


def init_table(n_entities, h, seed, mu_std=0.01, sigma0=0.1, sigma_jitter=0.1):
    """Create a table with mu ~ N(0, mu_std^2) i.i.d. and sigma near sigma0.

    Variances draw from U[sigma0 (1 - jitter), sigma0 (1 + jitter)]: an exactly
    uniform sigma table is a stationary saddle of the distance gradient (all
    sqrt-variance differences cancel), so a little spread is needed for the
    covariance channel to train at all. The result is projected, so all
    invariants hold from the start. Deterministic for a fixed seed.
    """
    if h < 1:
        raise ValueError("latent dimension must be >= 1")
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0, mu_std, size=(n_entities, h))
    sigma = sigma0 * rng.uniform(1.0 - sigma_jitter, 1.0 + sigma_jitter,
                                 size=(n_entities, h))
    table = GaussianEmbeddingTable(mu, sigma)
    project(table)
    return table


def sample(table, index, rng):
    """Draw one reparameterized sample for row ``index``, retaining the noise."""
    noise = rng.standard_normal(table.h)
    value = table.mu[index] + np.sqrt(table.sigma[index]) * noise
    return SampledEmbedding(value, noise)


def sample_rows(table, indices, rng):
    """Vectorized :func:`sample` over an index array; returns (values, noise)."""
    indices = np.asarray(indices)
    noise = rng.standard_normal((indices.shape[0], table.h))
    values = table.mu[indices] + np.sqrt(table.sigma[indices]) * noise
    return values, noise


# Rows renormalize only when the norm exceeds 1 by more than this; the dead
# band absorbs ulp-level and clamp-floor drift so project is exactly
# idempotent, at the cost of a <=1e-9 slack on the norm bound.
_NORM_TRIGGER = 1.0 + 1e-10


def project(table):
    """Pull every row back inside the unit sphere, in place.

    mu rows are radially projected onto the unit ball; sigma rows are clamped
    to [SIGMA_MIN, SIGMA_MAX], renormalized, and re-floored so the elementwise
    bounds stay exact. Idempotent.
    """
    mu_norm = np.linalg.norm(table.mu, axis=1, keepdims=True)
    np.divide(table.mu, np.where(mu_norm > _NORM_TRIGGER, mu_norm, 1.0),
              out=table.mu)

    np.clip(table.sigma, SIGMA_MIN, SIGMA_MAX, out=table.sigma)
    sig_norm = np.linalg.norm(table.sigma, axis=1, keepdims=True)
    np.divide(table.sigma, np.where(sig_norm > _NORM_TRIGGER, sig_norm, 1.0),
              out=table.sigma)
    np.maximum(table.sigma, SIGMA_MIN, out=table.sigma)

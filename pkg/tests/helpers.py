"""Shared test utilities: finite-difference oracles and small builders."""

import numpy as np

from pmlam.embeddings import GaussianEmbeddingTable


def numeric_grad(f, x, step=1e-6):
    """Central-difference gradient of scalar f at x, coordinate by coordinate."""
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        fp = f(x)
        flat[i] = keep - step
        fm = f(x)
        flat[i] = keep
        gf[i] = (fp - fm) / (2 * step)
    return g


def directional_grad(f, x, direction, step=1e-6):
    """Central-difference derivative of f along a direction."""
    x = np.asarray(x, float)
    d = np.asarray(direction, float)
    return (f(x + step * d) - f(x - step * d)) / (2 * step)


def assert_grad_close(analytic, numeric, rtol=1e-5, atol=1e-8):
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def random_table(n, h, rng, sigma_low=0.05, sigma_high=0.9, mu_scale=0.5):
    """A valid embedding table with variances away from the clamp floor."""
    mu = rng.uniform(-mu_scale, mu_scale, size=(n, h))
    mu /= np.maximum(np.linalg.norm(mu, axis=1, keepdims=True), 1.0)
    sigma = rng.uniform(sigma_low, sigma_high, size=(n, h))
    sigma /= np.maximum(np.linalg.norm(sigma, axis=1, keepdims=True), 1.0)
    return GaussianEmbeddingTable(mu, sigma)


class ZeroNoise:
    """Stand-in rng whose normal draws are all zero (test hook)."""

    def standard_normal(self, shape=None):
        return np.zeros(shape if shape is not None else ())

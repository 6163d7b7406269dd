"""Distance kernels between embeddings.

Two kernels are provided: the squared Wasserstein-2 distance between
diagonal-covariance Gaussians, which for variance vectors ``sigma`` reduces to

    ||mu_a - mu_b||^2 + ||sqrt(sigma_a) - sqrt(sigma_b)||^2,

and the plain squared Euclidean distance used for deterministic-embedding
ablations. All functions accept single ``(h,)`` vectors or ``(B, h)`` batches
and reduce over the last axis. Gradients are hand-derived closed forms.
"""

from enum import Enum

import numpy as np

# Variance floor: the sigma-gradient has a 1/sqrt(sigma) factor, singular at 0.
SIGMA_MIN = 1e-6


class DistanceKind(Enum):
    W2_SQUARED = "w2"
    EUCLIDEAN_SQUARED = "euclidean"


def _check_same_shape(a, b, name_a, name_b):
    if np.shape(a) != np.shape(b):
        raise ValueError(
            f"dimension mismatch: {name_a} has shape {np.shape(a)}, "
            f"{name_b} has shape {np.shape(b)}"
        )


def w2_squared(mu_a, sigma_a, mu_b, sigma_b):
    """Squared W2 distance between diagonal Gaussians (mu_a, sigma_a), (mu_b, sigma_b).

    ``sigma_*`` are elementwise variances and must be nonnegative. Returns a
    scalar for ``(h,)`` inputs, a ``(B,)`` array for ``(B, h)`` inputs.
    """
    mu_a, sigma_a = np.asarray(mu_a, float), np.asarray(sigma_a, float)
    mu_b, sigma_b = np.asarray(mu_b, float), np.asarray(sigma_b, float)
    _check_same_shape(mu_a, mu_b, "mu_a", "mu_b")
    _check_same_shape(sigma_a, sigma_b, "sigma_a", "sigma_b")
    _check_same_shape(mu_a, sigma_a, "mu_a", "sigma_a")
    if np.any(sigma_a < 0) or np.any(sigma_b < 0):
        raise ValueError("negative variance entries")
    dmu = mu_a - mu_b
    dsq = np.sqrt(sigma_a) - np.sqrt(sigma_b)
    return np.sum(dmu * dmu, axis=-1) + np.sum(dsq * dsq, axis=-1)


def w2_squared_grad(mu_a, sigma_a, mu_b, sigma_b):
    """Gradients of :func:`w2_squared` w.r.t. all four inputs.

    Requires variances >= SIGMA_MIN so the 1/sqrt(sigma) factor stays finite.
    Returns ``(d_mu_a, d_sigma_a, d_mu_b, d_sigma_b)`` with input shapes.
    """
    mu_a, sigma_a = np.asarray(mu_a, float), np.asarray(sigma_a, float)
    mu_b, sigma_b = np.asarray(mu_b, float), np.asarray(sigma_b, float)
    _check_same_shape(mu_a, mu_b, "mu_a", "mu_b")
    _check_same_shape(sigma_a, sigma_b, "sigma_a", "sigma_b")
    if np.any(sigma_a < SIGMA_MIN) or np.any(sigma_b < SIGMA_MIN):
        raise ValueError(f"variance entries below SIGMA_MIN={SIGMA_MIN}")
    d_mu_a = 2.0 * (mu_a - mu_b)
    root_a, root_b = np.sqrt(sigma_a), np.sqrt(sigma_b)
    d_sigma_a = 1.0 - root_b / root_a
    d_sigma_b = 1.0 - root_a / root_b
    return d_mu_a, d_sigma_a, -d_mu_a, d_sigma_b


def euclidean_squared(a, b):
    """Squared Euclidean distance, reduced over the last axis."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    _check_same_shape(a, b, "a", "b")
    d = a - b
    return np.sum(d * d, axis=-1)


def euclidean_squared_grad(a, b):
    """Gradients of :func:`euclidean_squared` w.r.t. ``a`` and ``b``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    _check_same_shape(a, b, "a", "b")
    g = 2.0 * (a - b)
    return g, -g

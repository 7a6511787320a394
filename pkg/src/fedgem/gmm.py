"""Isotropic (identity covariance) Gaussian mixture computations.

Mixture weights are fixed for the whole run and never re-estimated; only the
component means move.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .core import Dataset, EmptyComponent, LocalModel

LOG_2PI = float(np.log(2.0 * np.pi))

# Relative responsibility-mass floor below which a component counts as empty.
EMPTY_FLOOR = 1e-10


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def log_joint(data: Dataset, model: LocalModel) -> np.ndarray:
    """log(pi_k * phi(x_n | theta_k, I)) as an (N, K) array."""
    d = data.dim
    return (
        np.log(model.weights)[None, :]
        - 0.5 * d * LOG_2PI
        - 0.5 * _sq_dists(data.samples, model.centroids)
    )


def e_step(data: Dataset, model: LocalModel) -> np.ndarray:
    """Posterior responsibilities, shape (N, K); rows sum to one."""
    if data.n == 0:
        raise ValueError("empty dataset")
    if data.dim != model.dim:
        raise ValueError("model and data dimensions differ")
    lj = log_joint(data, model)
    lj -= lj.max(axis=1, keepdims=True)
    g = np.exp(lj)
    g /= g.sum(axis=1, keepdims=True)
    return g


def m_step(data: Dataset, resp: np.ndarray, k: int) -> np.ndarray:
    """Responsibility-weighted mean of the samples for component ``k``."""
    col = resp[:, k]
    mass = float(col.sum())
    if mass < EMPTY_FLOOR * data.n or mass <= 0.0:
        raise EmptyComponent(k, mass)
    return (col @ data.samples) / mass


def m_step_all(data: Dataset, resp: np.ndarray) -> np.ndarray:
    return np.stack([m_step(data, resp, k) for k in range(resp.shape[1])])


def component_objective(theta, data: Dataset, resp: np.ndarray, k: int, weight: float) -> float:
    """k-th summand of the finite-sample expected complete-data log-likelihood.

    Includes log(weight) and the Gaussian normalising constant, so values are
    directly comparable across parameter settings.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    col = resp[:, k]
    diff = data.samples - theta[None, :]
    sq = np.einsum("nd,nd->n", diff, diff)
    per_sample = np.log(weight) - 0.5 * data.dim * LOG_2PI - 0.5 * sq
    return float(col @ per_sample)


def log_likelihood(data: Dataset, model: LocalModel) -> float:
    return float(logsumexp(log_joint(data, model), axis=1).sum())


def kmeanspp_init(data: Dataset, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first centre uniform, then D^2-weighted draws."""
    x = data.samples
    n = x.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} samples, got {n}")
    if np.unique(x, axis=0).shape[0] < k:
        raise ValueError(f"fewer than {k} distinct points")
    idx = [int(rng.integers(n))]
    d2 = np.sum((x - x[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        nxt = int(rng.choice(n, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[idx].copy()


def farthest_sample(data: Dataset, centroids: np.ndarray, exclude: int) -> np.ndarray:
    """Sample farthest from every centroid other than ``exclude``."""
    others = np.delete(centroids, exclude, axis=0)
    if others.shape[0] == 0:
        return data.samples[0].copy()
    d2 = _sq_dists(data.samples, others).min(axis=1)
    return data.samples[int(np.argmax(d2))].copy()


def reseed_component(data: Dataset, model: LocalModel, k: int) -> LocalModel:
    c = model.centroids.copy()
    c[k] = farthest_sample(data, c, k)
    return model.with_centroids(c)


def em_iteration(data: Dataset, model: LocalModel) -> LocalModel:
    resp = e_step(data, model)
    return model.with_centroids(m_step_all(data, resp))


def centralized_em(
    data: Dataset,
    k: int,
    iters: int,
    rng: np.random.Generator,
    weights=None,
    reseed_empty: bool = False,
) -> LocalModel:
    """Plain EM on pooled data from a k-means++ start, weights held fixed."""
    init = kmeanspp_init(data, k, rng)
    if weights is None:
        model = LocalModel.equal_weights(init)
    else:
        model = LocalModel(init, weights)
    for _ in range(iters):
        try:
            model = em_iteration(data, model)
        except EmptyComponent as exc:
            if not reseed_empty:
                raise
            model = reseed_component(data, model, exc.component)
    return model

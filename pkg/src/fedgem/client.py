"""Per-client work for one communication round."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ComponentMessage, Dataset, DegenerateCentroids, LocalModel
from .gmm import e_step, m_step_all
from .radius import build_instance, solve_radius


@dataclass
class ClientState:
    client_id: int
    data: Dataset
    model: LocalModel
    rng: np.random.Generator
    # Snapshot of the last EM step, kept for monotonicity checks:
    # responsibilities and the iterate they were computed at.
    last_resp: Optional[np.ndarray] = field(default=None, repr=False)
    last_theta_prev: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.model.dim != self.data.dim:
            raise ValueError("model dimension does not match data")
        if self.model.k < 2:
            raise ValueError("a client needs at least two components")

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def k(self) -> int:
        return self.model.k


def local_round(
    state: ClientState,
    incoming: Optional[np.ndarray],
    steps: int,
    solver: str = "closed_form",
    bisection_iters: int = 10,
) -> list[ComponentMessage]:
    """Run ``steps`` EM iterations, then size one uncertainty ball per component.

    The radius is solved for the last EM step only: the ball is centred at the
    final maximizer and certifies improvement over the iterate that step
    started from.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    model = state.model if incoming is None else state.model.with_centroids(incoming)
    theta = model.centroids
    for _ in range(steps):
        resp = e_step(state.data, model.with_centroids(theta))
        theta_prev, theta = theta, m_step_all(state.data, resp)

    state.model = model.with_centroids(theta)
    state.last_resp = resp
    state.last_theta_prev = theta_prev

    messages = []
    for k in range(model.k):
        inst = build_instance(state.data, resp, k, theta_prev[k], theta[k])
        eps = solve_radius(inst, solver, bisection_iters)
        messages.append(ComponentMessage(state.client_id, k, theta[k], eps, state.n))
    return messages


def min_centroid_distance(centroids: np.ndarray) -> float:
    diff = centroids[:, None, :] - centroids[None, :, :]
    dist = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
    iu = np.triu_indices(centroids.shape[0], k=1)
    return float(dist[iu].min())


def final_radius(state: ClientState, radius_scale: float) -> np.ndarray:
    """Per-component final aggregation radii (squared-distance units).

    eps_k = radius_scale * R_min_hat / (pi_k * sqrt(N)), with R_min_hat the
    smallest distance between two of the client's current centroids.
    """
    if not radius_scale > 0:
        raise ValueError("radius_scale must be > 0")
    r_min = min_centroid_distance(state.model.centroids)
    if r_min <= 0.0:
        raise DegenerateCentroids(f"client {state.client_id} has coincident centroids")
    return radius_scale * r_min / (state.model.weights * math.sqrt(state.n))


def final_round(state: ClientState, radius_scale: float) -> list[ComponentMessage]:
    eps = final_radius(state, radius_scale)
    return [
        ComponentMessage(state.client_id, k, state.model.centroids[k], eps[k], state.n)
        for k in range(state.k)
    ]

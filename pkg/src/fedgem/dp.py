"""Gaussian-mechanism perturbation of the maximizers a client shares.

Only maximizers are privatised; radii go out unperturbed.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .core import ComponentMessage, DpParams


def gaussian_sigma(params: DpParams, n_components: int) -> float:
    """Noise scale making the stacked maximizer map (rho, mu)-DP.

    The l2-sensitivity of one component's maximizer is bounded by
    3*B_x/B_gamma + 2*B_x/B_gamma**2; stacking K_g components multiplies it
    by sqrt(K_g).
    """
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    bx, bg = params.B_x, params.B_gamma
    sensitivity = math.sqrt(n_components) * (3.0 * bx / bg + 2.0 * bx / bg**2)
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / params.mu)) / params.rho


def perturb_messages(
    messages: list[ComponentMessage], params: DpParams, rng: np.random.Generator
) -> list[ComponentMessage]:
    """Add N(0, sigma^2 I) to every maximizer of one client's message batch."""
    if not messages:
        return []
    sigma = gaussian_sigma(params, len(messages))
    out = []
    for m in messages:
        noise = rng.normal(0.0, sigma, size=m.maximizer.shape)
        out.append(replace(m, maximizer=m.maximizer + noise))
    return out

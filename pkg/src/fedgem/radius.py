"""Uncertainty-set radius for one isotropic mixture component.

The client wants the largest eps such that every point m in the ball of
radius sqrt(eps) around the M-step maximizer keeps the component objective at
or above its value at the previous iterate theta'. For identity covariance the
objective is, up to constants,

    -1/2 * sum_n g_n ||x_n - m||^2 = -1/2 * (A + W ||m - M||^2)

so the whole problem reduces to four scalars (W, A, B, ||M - theta'||^2).
Three routes are provided:

* ``radius_closed_form`` - the exact answer, eps* = (B - A) / W = step_sq.
* ``radius_bisection`` - bisection on eps with an analytic feasibility test of
  the two-variable dual quadratic.
* ``primal_violation_oracle`` - Monte-Carlo check of the original semi-infinite
  constraint, for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .gmm import component_objective

# step_sq below this is treated as a converged component (eps = 0).
CONVERGED_TOL = 1e-12
# Relative slack on B - A when testing feasibility; absorbs summation rounding.
FEAS_RTOL = 1e-11


@dataclass(frozen=True)
class RadiusInstance:
    W: float
    A: float
    B: float
    step_sq: float

    def __post_init__(self):
        if not self.W > 0:
            raise ValueError("responsibility mass W must be positive")
        if self.A < 0 or self.step_sq < 0:
            raise ValueError("A and step_sq must be non-negative")
        scale = max(abs(self.B), abs(self.A), 1.0)
        if self.B < self.A - 1e-8 * scale:
            raise ValueError("B < A: maximizer does not minimise the weighted dispersion")
        gap = self.B - self.A - self.W * self.step_sq
        if abs(gap) > 1e-8 * scale:
            raise ValueError(f"isotropic identity B - A = W * step_sq violated by {gap:.3e}")

    @property
    def gap(self) -> float:
        """B - A, the objective improvement of the full M-step (times two)."""
        return self.B - self.A


def build_instance(data: Dataset, resp: np.ndarray, k: int, theta_prev, maximizer) -> RadiusInstance:
    theta_prev = np.asarray(theta_prev, dtype=np.float64).reshape(-1)
    maximizer = np.asarray(maximizer, dtype=np.float64).reshape(-1)
    g = resp[:, k]
    W = float(g.sum())
    if not W > 0:
        raise ValueError(f"component {k} has zero responsibility mass")
    x = data.samples
    A = float(g @ np.sum((x - maximizer) ** 2, axis=1))
    B = float(g @ np.sum((x - theta_prev) ** 2, axis=1))
    step = maximizer - theta_prev
    return RadiusInstance(W=W, A=A, B=B, step_sq=float(step @ step))


def radius_closed_form(inst: RadiusInstance) -> float:
    # (B - A) / W equals step_sq exactly in exact arithmetic; step_sq is the
    # cancellation-free form of the same quantity.
    if inst.step_sq < CONVERGED_TOL:
        return 0.0
    return inst.step_sq


def dual_quadratic(alpha: float, eps: float, inst: RadiusInstance, printed_constant: bool = False) -> float:
    """q(alpha) = eps*alpha^2 + (A - B - eps*W)*alpha + c.

    ``c`` is W*(B - A); ``printed_constant=True`` uses W*B instead, which is
    kept only to document that it is infeasible at the true optimum.
    """
    c = inst.W * inst.B if printed_constant else inst.W * (inst.B - inst.A)
    return eps * alpha * alpha + (inst.A - inst.B - eps * inst.W) * alpha + c


def dual_minimizer(eps: float, inst: RadiusInstance, printed_constant: bool = False) -> float:
    """argmin of q over the half-line alpha >= W."""
    if eps <= 0:
        # q is linear with slope A - B <= 0; the infimum sits at alpha -> inf.
        return math.inf
    vertex = (inst.B - inst.A + eps * inst.W) / (2.0 * eps)
    return max(inst.W, vertex)


def feasibility_check(eps: float, inst: RadiusInstance) -> bool:
    """Is eps feasible for the dual reformulation of the radius problem?

    q factors as (alpha - W) * (eps*alpha - (B - A)). The factor (alpha - W)
    vanishes on the boundary alpha = W for every eps, where the S-lemma
    multiplier degenerates and certifies nothing. A certificate therefore has
    to come from the interior: q must be non-positive at its minimiser over
    [W, inf), and that minimiser must not sit on the degenerate boundary.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    slack = FEAS_RTOL * (inst.A + inst.B)
    gap = inst.gap + slack
    if eps == 0.0:
        return gap >= 0.0
    # Interior minimiser exists iff the second root (B - A)/eps lies beyond W.
    if eps * inst.W > gap:
        return False
    alpha = max(inst.W, (gap + eps * inst.W) / (2.0 * eps))
    return (alpha - inst.W) * (eps * alpha - gap) <= 0.0


def radius_bisection(inst: RadiusInstance, iters: int) -> float:
    """Bisection on [0, step_sq], keeping the lower end feasible.

    After ``iters`` halvings the final midpoint is returned if it is feasible,
    otherwise the lower end. Either way the result is a feasible radius within
    step_sq * 2**-(iters + 1) of the optimum.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    lb, ub = 0.0, inst.step_sq
    if ub < CONVERGED_TOL:
        return 0.0
    for _ in range(iters):
        mid = 0.5 * (lb + ub)
        if feasibility_check(mid, inst):
            lb = mid
        else:
            ub = mid
    mid = 0.5 * (lb + ub)
    return mid if feasibility_check(mid, inst) else lb


def solve_radius(inst: RadiusInstance, solver: str = "closed_form", iters: int = 10) -> float:
    if solver == "closed_form":
        return radius_closed_form(inst)
    if solver == "bisection":
        return radius_bisection(inst, iters)
    raise ValueError(f"unknown radius solver {solver!r}")


def sample_ball(center: np.ndarray, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the closed Euclidean ball."""
    d = center.shape[0]
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return center[None, :] + r[:, None] * dirs


def primal_violation_oracle(
    eps: float,
    data: Dataset,
    resp: np.ndarray,
    k: int,
    theta_prev,
    maximizer,
    n_samples: int,
    rng: np.random.Generator,
    tol: float = 1e-9,
) -> bool:
    """True iff no probed point of the ball violates Q(m) >= Q(theta') - tol.

    Probes are uniform interior samples plus the two boundary points along
    the line through the maximizer and theta', where the deficit is largest.
    """
    theta_prev = np.asarray(theta_prev, dtype=np.float64).reshape(-1)
    maximizer = np.asarray(maximizer, dtype=np.float64).reshape(-1)
    r = math.sqrt(eps)
    step = maximizer - theta_prev
    norm = float(np.linalg.norm(step))
    if norm > 0:
        u = step / norm
    else:
        u = np.zeros_like(maximizer)
        u[0] = 1.0
    probes = [maximizer + r * u, maximizer - r * u]
    if n_samples > 0 and r > 0:
        probes.extend(sample_ball(maximizer, r, n_samples, rng))
    # weight 1: log(pi_k) is a common offset on both sides
    base = component_objective(theta_prev, data, resp, k, 1.0)
    return all(component_objective(m, data, resp, k, 1.0) >= base - tol for m in probes)

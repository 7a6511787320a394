"""Shared value types, error classes and small vector helpers."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class FedGEMError(Exception):
    """Base class for all package errors."""


class ConfigError(FedGEMError):
    pass


class NumericalError(FedGEMError):
    """Raised for numerical failures the harness cannot recover from."""


class EmptyComponent(NumericalError):
    def __init__(self, component: int, mass: float):
        super().__init__(f"component {component} has responsibility mass {mass:.3e}")
        self.component = component
        self.mass = mass


class DegenerateCentroids(NumericalError):
    pass


class PlacementFailure(NumericalError):
    pass


class UndefinedMetric(FedGEMError):
    pass


def as_vector(x, d: Optional[int] = None) -> np.ndarray:
    v = np.array(x, dtype=np.float64).reshape(-1)
    if d is not None and v.shape[0] != d:
        raise ValueError(f"expected dimension {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if np.asarray(self.samples).ndim == 1:
            x = x.reshape(-1, 1)
        if not np.all(np.isfinite(x)):
            raise ValueError("dataset contains non-finite samples")
        object.__setattr__(self, "samples", _frozen(x))
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if y.shape[0] != x.shape[0]:
                raise ValueError("labels do not match sample count")
            if np.any(y < 0):
                raise ValueError("labels must be non-negative")
            y = y.copy()
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class LocalModel:
    centroids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != c.shape[0]:
            raise ValueError("one weight per centroid required")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids contain non-finite entries")
        object.__setattr__(self, "centroids", _frozen(c))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def equal_weights(cls, centroids) -> "LocalModel":
        c = np.asarray(centroids, dtype=np.float64)
        k = c.shape[0]
        return cls(c, np.full(k, 1.0 / k))

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def with_centroids(self, centroids) -> "LocalModel":
        return LocalModel(centroids, self.weights)


@dataclass(frozen=True)
class ComponentMessage:
    """The only payload a client sends to the server for one component."""

    client_id: int
    component_idx: int
    maximizer: np.ndarray
    eps: float
    sample_count: int

    def __post_init__(self):
        object.__setattr__(self, "maximizer", _frozen(as_vector(self.maximizer)))
        eps = float(self.eps)
        if not np.isfinite(eps) or eps < 0:
            raise ValueError(f"eps must be finite and non-negative, got {eps}")
        object.__setattr__(self, "eps", eps)

    @property
    def key(self) -> tuple[int, int]:
        return (self.client_id, self.component_idx)

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.eps))


@dataclass(frozen=True)
class DpParams:
    rho: float
    mu: float
    B_x: float = 1.0
    B_gamma: float = 1.0

    def __post_init__(self):
        if not (self.rho > 0 and 0 < self.mu < 1 and self.B_x > 0 and self.B_gamma > 0):
            raise ConfigError(f"invalid DP parameters: {self}")


SETTINGS = ("nominal", "client_imbalance", "cluster_imbalance")
SERVER_MODES = ("pairwise", "kdtree")
RADIUS_SOLVERS = ("closed_form", "bisection")


@dataclass
class RunConfig:
    # Algorithm knobs
    num_clients: int = 5
    rounds: int = 10
    local_steps: int = 1
    bisection_iters: int = 10
    radius_scale: float = 1.0
    radius_grid: Optional[list[float]] = None
    radius_solver: str = "closed_form"
    server_mode: str = "pairwise"
    dp: Optional[DpParams] = None
    # Data generation
    n_clusters: int = 6
    dim: int = 2
    n_train: int = 2500
    n_test: int = 5000
    r_min: float = 6.0
    setting: str = "nominal"
    client_fractions: Optional[list[float]] = None
    # Protocol
    master_seed: int = 0
    restarts: int = 1
    select_by: str = "ari"
    tune_by: str = "silhouette"
    workers: int = 1
    record_runtime: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.num_clients < 2:
            raise ConfigError("num_clients must be >= 2")
        if self.rounds < 1 or self.local_steps < 1 or self.bisection_iters < 1:
            raise ConfigError("rounds, local_steps and bisection_iters must be >= 1")
        if not self.radius_scale > 0:
            raise ConfigError("radius_scale must be > 0")
        if self.radius_grid is not None and (
            not self.radius_grid or any(not v > 0 for v in self.radius_grid)
        ):
            raise ConfigError("radius_grid entries must be > 0")
        if self.server_mode not in SERVER_MODES:
            raise ConfigError(f"server_mode must be one of {SERVER_MODES}")
        if self.radius_solver not in RADIUS_SOLVERS:
            raise ConfigError(f"radius_solver must be one of {RADIUS_SOLVERS}")
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {SETTINGS}")
        if self.select_by not in ("ari", "silhouette"):
            raise ConfigError("select_by must be 'ari' or 'silhouette'")
        if self.tune_by not in ("ari", "silhouette"):
            raise ConfigError("tune_by must be 'ari' or 'silhouette'")
        if self.n_clusters < 3:
            raise ConfigError("n_clusters must be >= 3 so that 2 <= K_g < K is possible")
        if self.dim < 1 or self.n_train < 1 or self.n_test < 1 or self.restarts < 1:
            raise ConfigError("dim, n_train, n_test and restarts must be positive")
        if not self.r_min > 0:
            raise ConfigError("r_min must be > 0")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.dp is not None and not isinstance(self.dp, DpParams):
            self.dp = DpParams(**self.dp)


def squared_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    diff = a - b
    return float(diff @ diff)


def weighted_mean(points: Sequence, weights: Sequence[float]) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != pts.shape[0]:
        raise ValueError("one weight per point required")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if not total > 0:
        raise ValueError("total weight must be positive")
    return (w @ pts) / total


def rng_for(master_seed: int, tag: str, *ids: int) -> np.random.Generator:
    """Independent generator keyed by (master_seed, tag, ids).

    Streams never depend on how many draws other streams made, so clients can
    be scheduled in any order.
    """
    entropy = [int(master_seed), zlib.crc32(tag.encode()), *map(int, ids)]
    return np.random.default_rng(np.random.SeedSequence(entropy))

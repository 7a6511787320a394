"""Synthetic isotropic blobs and their federated split across clients."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ConfigError, Dataset, PlacementFailure

DEFAULT_CLIENT_FRACTIONS = (0.40, 0.24, 0.16, 0.16, 0.04)
MODES = ("nominal", "client_imbalance", "cluster_imbalance")


@dataclass(frozen=True)
class BlobSpec:
    K: int
    d: int
    n_total: int
    r_min: float
    box_half_width: Optional[float] = None

    def __post_init__(self):
        if self.K < 2 or self.d < 1 or self.n_total < self.K:
            raise ConfigError(f"invalid blob spec {self}")
        if not self.r_min > 0:
            raise ConfigError("r_min must be > 0")

    @property
    def half_width(self) -> float:
        if self.box_half_width is not None:
            return float(self.box_half_width)
        return max(10.0, 2.0 * self.r_min * self.K ** (1.0 / self.d))


@dataclass(frozen=True)
class PartitionSpec:
    G: int
    mode: str = "nominal"
    client_fractions: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.G < 2:
            raise ConfigError("need at least two clients")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.client_fractions is not None:
            f = np.asarray(self.client_fractions, dtype=float)
            if f.shape[0] != self.G or np.any(f <= 0) or abs(f.sum() - 1.0) > 1e-9:
                raise ConfigError("client_fractions must be G positive values summing to 1")

    def fractions(self) -> np.ndarray:
        if self.client_fractions is not None:
            return np.asarray(self.client_fractions, dtype=float)
        if self.mode == "client_imbalance":
            if self.G != len(DEFAULT_CLIENT_FRACTIONS):
                raise ConfigError("client_imbalance needs client_fractions unless G = 5")
            return np.asarray(DEFAULT_CLIENT_FRACTIONS)
        return np.full(self.G, 1.0 / self.G)


@dataclass(frozen=True)
class ClientLayout:
    """Which global clusters each client holds and in what proportions.

    Shared by the train and test draws so both follow the same local mixture.
    """

    clusters: tuple[tuple[int, ...], ...]
    proportions: tuple[tuple[float, ...], ...]
    client_fractions: tuple[float, ...]

    @property
    def G(self) -> int:
        return len(self.clusters)


def _min_gap(c: np.ndarray, others: np.ndarray) -> float:
    if others.shape[0] == 0:
        return np.inf
    return float(np.min(np.linalg.norm(others - c[None, :], axis=1)))


def place_centers(spec: BlobSpec, rng: np.random.Generator, max_attempts: int = 2000) -> np.ndarray:
    """K centres with all gaps >= r_min and one pair exactly r_min apart.

    K-1 centres are rejection-sampled in a box; the last one goes at distance
    r_min from a random earlier centre in a random direction.
    """
    hw = spec.half_width
    for _ in range(50):
        centers = np.empty((0, spec.d))
        ok = True
        while centers.shape[0] < spec.K - 1:
            for _ in range(max_attempts):
                c = rng.uniform(-hw, hw, size=spec.d)
                if _min_gap(c, centers) >= spec.r_min:
                    centers = np.vstack([centers, c])
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        for _ in range(max_attempts):
            a = int(rng.integers(centers.shape[0]))
            u = rng.standard_normal(spec.d)
            u /= np.linalg.norm(u)
            c = centers[a] + spec.r_min * u
            if _min_gap(c, np.delete(centers, a, axis=0)) >= spec.r_min:
                return np.vstack([centers, c])
    raise PlacementFailure(f"could not place {spec.K} centres {spec.r_min} apart")


def _split_even(n: int, parts: int) -> np.ndarray:
    out = np.full(parts, n // parts, dtype=int)
    out[: n % parts] += 1
    return out


def _split_by(n: int, fractions: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of n * fractions."""
    raw = n * np.asarray(fractions, dtype=float)
    out = np.floor(raw).astype(int)
    rem = n - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:rem]] += 1
    return out


def make_blobs(spec: BlobSpec, rng: np.random.Generator):
    """Unit-variance samples around separated centres.

    Returns ``(Dataset with labels, centers)``; sample counts per cluster
    differ by at most one.
    """
    centers = place_centers(spec, rng)
    counts = _split_even(spec.n_total, spec.K)
    labels = np.repeat(np.arange(spec.K), counts)
    x = centers[labels] + rng.standard_normal((spec.n_total, spec.d))
    return Dataset(x, labels), centers


def assign_clusters(K: int, G: int, rng: np.random.Generator, max_attempts: int = 10000):
    """Random local cluster sets with 2 <= K_g < K that jointly cover all K."""
    if K < 3:
        raise ConfigError("need K >= 3 so that 2 <= K_g < K")
    for _ in range(max_attempts):
        sets = []
        for _ in range(G):
            kg = int(rng.integers(2, K))
            sets.append(tuple(sorted(int(c) for c in rng.choice(K, size=kg, replace=False))))
        if set().union(*sets) == set(range(K)):
            return tuple(sets)
    raise ConfigError(f"could not cover {K} clusters with {G} clients")


def make_layout(K: int, pspec: PartitionSpec, rng: np.random.Generator) -> ClientLayout:
    clusters = assign_clusters(K, pspec.G, rng)
    props = []
    for cs in clusters:
        if pspec.mode == "cluster_imbalance":
            p = rng.dirichlet(np.ones(len(cs)))
        else:
            p = np.full(len(cs), 1.0 / len(cs))
        props.append(tuple(float(v) for v in p))
    return ClientLayout(clusters, tuple(props), tuple(float(f) for f in pspec.fractions()))


def sample_clients(
    centers: np.ndarray, layout: ClientLayout, n_total: int, rng: np.random.Generator
) -> list[Dataset]:
    """Fresh draws for every (client, cluster) cell of the layout.

    Every local cluster receives at least one sample.
    """
    d = centers.shape[1]
    totals = _split_by(n_total, np.asarray(layout.client_fractions))
    out = []
    for g, (cs, p) in enumerate(zip(layout.clusters, layout.proportions)):
        if totals[g] < len(cs):
            raise ConfigError(f"client {g} gets {totals[g]} samples for {len(cs)} clusters")
        counts = np.ones(len(cs), dtype=int) + _split_by(totals[g] - len(cs), np.asarray(p))
        labels = np.repeat(np.asarray(cs), counts)
        x = centers[labels] + rng.standard_normal((labels.shape[0], d))
        perm = rng.permutation(labels.shape[0])
        out.append(Dataset(x[perm], labels[perm]))
    return out


def partition_clients(
    centers: np.ndarray, n_total: int, pspec: PartitionSpec, rng: np.random.Generator
) -> list[tuple[Dataset, tuple[int, ...]]]:
    """Federated draw: one ``(client dataset, local cluster ids)`` per client."""
    layout = make_layout(centers.shape[0], pspec, rng)
    data = sample_clients(centers, layout, n_total, rng)
    return list(zip(data, layout.clusters))


def export_csv(path, clients: Sequence[Dataset]) -> None:
    """One row per sample: features..., label, client_id."""
    if not clients:
        raise ValueError("nothing to export")
    d = clients[0].dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(d)] + ["label", "client_id"])
        for g, ds in enumerate(clients):
            labels = ds.labels if ds.labels is not None else [-1] * ds.n
            for x, y in zip(ds.samples, labels):
                w.writerow([repr(float(v)) for v in x] + [int(y), g])

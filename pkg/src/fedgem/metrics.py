"""Clustering evaluation: hard labels, ARI, silhouette and N-weighted reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import adjusted_rand_score, silhouette_score

from .core import Dataset, LocalModel, UndefinedMetric
from .gmm import log_joint


def assign_labels(data: Dataset, model: LocalModel) -> np.ndarray:
    """argmax responsibility; np.argmax breaks ties toward the lower index."""
    return np.argmax(log_joint(data, model), axis=1)


def ari(true_labels, pred_labels) -> float:
    t = np.asarray(true_labels).reshape(-1)
    p = np.asarray(pred_labels).reshape(-1)
    if t.shape != p.shape:
        raise ValueError("label arrays differ in length")
    if t.shape[0] < 2:
        raise ValueError("ARI needs at least two samples")
    return float(adjusted_rand_score(t, p))


def silhouette(data: Dataset, labels) -> float:
    """Mean silhouette with Euclidean distance; singleton clusters score 0."""
    y = np.asarray(labels).reshape(-1)
    if y.shape[0] != data.n:
        raise ValueError("labels do not match sample count")
    n_labels = np.unique(y).shape[0]
    if n_labels < 2:
        raise UndefinedMetric("silhouette needs at least two clusters")
    if n_labels == data.n:
        return 0.0
    return float(silhouette_score(data.samples, y, metric="euclidean"))


@dataclass(frozen=True)
class ClientMetrics:
    client_id: int
    ari: float
    silhouette: float
    n: int
    degenerate: bool = False


@dataclass
class MetricsReport:
    ari: float
    silhouette: float
    k_hat: int
    per_client: list[ClientMetrics] = field(default_factory=list)
    runtime_seconds: float = 0.0
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "ari": self.ari,
            "silhouette": self.silhouette,
            "k_hat": self.k_hat,
            "runtime_seconds": self.runtime_seconds,
            "degenerate": self.degenerate,
            "per_client": [vars(c) for c in self.per_client],
        }


def evaluate_client(client_id: int, test: Dataset, model: LocalModel, n_train: int) -> ClientMetrics:
    pred = assign_labels(test, model)
    a = ari(test.labels, pred)
    try:
        s, bad = silhouette(test, pred), False
    except UndefinedMetric:
        # one populated cluster: keep the row, flag it
        s, bad = 0.0, True
    return ClientMetrics(client_id, a, s, n_train, bad)


def weighted_report(per_client: list[ClientMetrics], k_hat: int = 0, runtime_seconds: float = 0.0) -> MetricsReport:
    if not per_client:
        raise ValueError("no client metrics")
    n = np.array([c.n for c in per_client], dtype=np.float64)
    w = n / n.sum()
    return MetricsReport(
        ari=float(w @ np.array([c.ari for c in per_client])),
        silhouette=float(w @ np.array([c.silhouette for c in per_client])),
        k_hat=int(k_hat),
        per_client=list(per_client),
        runtime_seconds=float(runtime_seconds),
        degenerate=any(c.degenerate for c in per_client),
    )

"""End-to-end orchestration: data, collaborative rounds, final merge, reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .client import ClientState, final_round, local_round
from .core import (
    ComponentMessage,
    ConfigError,
    Dataset,
    DpParams,
    EmptyComponent,
    LocalModel,
    NumericalError,
    RunConfig,
    rng_for,
)
from .datagen import BlobSpec, ClientLayout, PartitionSpec, make_layout, place_centers, sample_clients
from .dp import perturb_messages
from .gmm import centralized_em, kmeanspp_init, log_likelihood, reseed_component
from .metrics import MetricsReport, evaluate_client, weighted_report
from .server import aggregate, final_aggregate

log = logging.getLogger(__name__)

CSV_HEADER = ("setting", "r_min", "seed", "model", "ari", "silhouette", "k_hat", "k_true", "runtime_s")
DEFAULT_RADIUS_GRID = (0.5, 1.0, 5.0, 10.0, 50.0)
# Silhouette differences below this are treated as ties when tuning the radius scale.
TUNE_TIE = 1e-3
BASELINE_ITERS = 20


@dataclass
class Scenario:
    centers: np.ndarray
    layout: ClientLayout
    train: list[Dataset]
    test: list[Dataset]

    @property
    def k_true(self) -> int:
        return self.centers.shape[0]


@dataclass
class RoundTrace:
    t: int
    k_hat: int
    mean_step: list[float]
    log_likelihood: list[float]


@dataclass
class RunResult:
    report: MetricsReport
    traces: list[RoundTrace]
    radius_scale: float
    centroids: list[np.ndarray] = field(repr=False, default_factory=list)
    restart: int = 0

    def summary(self) -> dict:
        return {
            "report": self.report.as_dict(),
            "radius_scale": self.radius_scale,
            "restart": self.restart,
            "traces": [dataclasses.asdict(t) for t in self.traces],
            "centroids": [c.tolist() for c in self.centroids],
        }


def build_scenario(config: RunConfig) -> Scenario:
    rng = rng_for(config.master_seed, "data")
    spec = BlobSpec(config.n_clusters, config.dim, config.n_train, config.r_min)
    centers = place_centers(spec, rng)
    pspec = PartitionSpec(config.num_clients, config.setting, config.client_fractions)
    layout = make_layout(config.n_clusters, pspec, rng)
    train = sample_clients(centers, layout, config.n_train, rng)
    test = sample_clients(centers, layout, config.n_test, rng)
    return Scenario(centers, layout, train, test)


def init_clients(scenario: Scenario, config: RunConfig, restart: int = 0) -> list[ClientState]:
    states = []
    for g, data in enumerate(scenario.train):
        rng = rng_for(config.master_seed, "client", g, restart)
        k = len(scenario.layout.clusters[g])
        model = LocalModel.equal_weights(kmeanspp_init(data, k, rng))
        states.append(ClientState(g, data, model, rng))
    return states


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _client_round(state: ClientState, incoming, config: RunConfig, t: int) -> list[ComponentMessage]:
    if incoming is not None:
        state.model = state.model.with_centroids(incoming)
    for _ in range(state.k + 1):
        try:
            return local_round(state, None, config.local_steps, config.radius_solver, config.bisection_iters)
        except EmptyComponent as exc:
            log.warning("client %d round %d: %s; reseeding", state.client_id, t, exc)
            state.model = reseed_component(state.data, state.model, exc.component)
    raise NumericalError(f"client {state.client_id} round {t}: could not recover from empty components")


def _privatize(batches, dp_rngs, dp: Optional[DpParams]):
    if dp is None:
        return batches
    return [perturb_messages(b, dp, dp_rngs[i]) for i, b in enumerate(batches)]


Observer = Callable[[int, list[ClientState], list[list[ComponentMessage]], list[np.ndarray]], None]


def collaborate(
    states: list[ClientState],
    config: RunConfig,
    restart: int = 0,
    observer: Optional[Observer] = None,
) -> list[RoundTrace]:
    """Rounds 1..T-1 of local EM + server update, then the local part of round T.

    On return each client holds the maximizers of its last local round, ready
    for ``finalize``.
    """
    dp_rngs = [rng_for(config.master_seed, "dp", s.client_id, restart) for s in states]
    traces = []
    incoming: list[Optional[np.ndarray]] = [None] * len(states)
    prev = [s.model.centroids.copy() for s in states]
    prev_ll = [log_likelihood(s.data, s.model) for s in states]
    for t in range(1, config.rounds + 1):
        batches = _map(
            lambda gi: _client_round(states[gi], incoming[gi], config, t),
            range(len(states)),
            config.workers,
        )
        if t == config.rounds:
            break
        sent = _privatize(batches, dp_rngs, config.dp)
        updates, part = aggregate([m for b in sent for m in b], config.server_mode)
        new = [np.stack([updates[(s.client_id, k)] for k in range(s.k)]) for s in states]
        if observer is not None:
            observer(t, states, sent, new)
        lls = []
        for g, s in enumerate(states):
            ll = log_likelihood(s.data, s.model.with_centroids(new[g]))
            if ll < prev_ll[g] - 1e-6:
                log.warning("client %d round %d: log-likelihood fell by %.3e", g, t, prev_ll[g] - ll)
            lls.append(ll)
        steps = [float(np.linalg.norm(new[g] - prev[g], axis=1).mean()) for g in range(len(states))]
        traces.append(RoundTrace(t, part.count, steps, lls))
        incoming, prev, prev_ll = new, new, lls
    return traces


def finalize(states: list[ClientState], config: RunConfig, radius_scale: float, restart: int = 0):
    """Final aggregation at one radius scale; client states are not modified."""
    batches = [final_round(s, radius_scale) for s in states]
    dp_rngs = [rng_for(config.master_seed, "dp-final", s.client_id, restart) for s in states]
    sent = _privatize(batches, dp_rngs, config.dp)
    finals, part = final_aggregate([m for b in sent for m in b], config.server_mode)
    models = [
        s.model.with_centroids(np.stack([finals[(s.client_id, k)] for k in range(s.k)])) for s in states
    ]
    return models, part


def evaluate(models: Sequence[LocalModel], scenario: Scenario, k_hat: int) -> MetricsReport:
    per_client = [
        evaluate_client(g, scenario.test[g], m, scenario.train[g].n) for g, m in enumerate(models)
    ]
    return weighted_report(per_client, k_hat)


def k_hat_sanity_bound(states: Sequence[ClientState]) -> float:
    """Rule of thumb: a good K_hat should not far exceed sqrt(sum K_g)."""
    return math.sqrt(sum(s.k for s in states))


def _final_trace(t, states, models, k_hat) -> RoundTrace:
    return RoundTrace(
        t,
        k_hat,
        [float(np.linalg.norm(m.centroids - s.model.centroids, axis=1).mean()) for s, m in zip(states, models)],
        [log_likelihood(s.data, m) for s, m in zip(states, models)],
    )


def _tune(states, scenario, config, restart):
    """Pick the radius scale by ``config.tune_by`` (silhouette is label-free).

    Near-ties go to the smaller K_hat, then to the smaller scale.
    """
    grid = config.radius_grid or [config.radius_scale]
    cands = []
    for v in grid:
        models, part = finalize(states, config, v, restart)
        rep = evaluate(models, scenario, part.count)
        cands.append((v, models, part, rep))
    best = max(_score(c[3], config.tune_by) for c in cands)
    close = [c for c in cands if _score(c[3], config.tune_by) >= best - TUNE_TIE]
    return min(close, key=lambda c: (c[2].count, c[0]))


def _score(rep: MetricsReport, select_by: str) -> float:
    return rep.ari if select_by == "ari" else rep.silhouette


def run_fedgem(
    config: RunConfig,
    scenario: Optional[Scenario] = None,
    observer: Optional[Observer] = None,
) -> RunResult:
    """Full protocol; with ``restarts > 1`` the best restart by ``select_by`` wins."""
    start = time.perf_counter()
    scenario = scenario or build_scenario(config)
    best: Optional[RunResult] = None
    for r in range(config.restarts):
        states = init_clients(scenario, config, r)
        traces = collaborate(states, config, r, observer)
        v, models, part, rep = _tune(states, scenario, config, r)
        traces.append(_final_trace(config.rounds, states, models, part.count))
        bound = k_hat_sanity_bound(states)
        if part.count > 2 * bound:
            log.info("K_hat=%d well above sqrt(sum K_g)=%.2f", part.count, bound)
        res = RunResult(rep, traces, v, [m.centroids.copy() for m in models], r)
        if best is None or _score(rep, config.select_by) > _score(best.report, config.select_by):
            best = res
    if config.record_runtime:
        best.report.runtime_seconds = time.perf_counter() - start
    return best


def pooled(datasets: Iterable[Dataset]) -> Dataset:
    ds = list(datasets)
    return Dataset(np.vstack([d.samples for d in ds]), np.concatenate([d.labels for d in ds]))


def run_centralized_baseline(config: RunConfig, scenario: Optional[Scenario] = None) -> MetricsReport:
    """EM with the true K on pooled training data, scored on pooled test data."""
    start = time.perf_counter()
    scenario = scenario or build_scenario(config)
    train, test = pooled(scenario.train), pooled(scenario.test)
    best = None
    for r in range(config.restarts):
        rng = rng_for(config.master_seed, "central", r)
        model = centralized_em(train, scenario.k_true, BASELINE_ITERS, rng, reseed_empty=True)
        m = evaluate_client(0, test, model, train.n)
        rep = weighted_report([m], scenario.k_true)
        if best is None or _score(rep, config.select_by) > _score(best, config.select_by):
            best = rep
    if config.record_runtime:
        best.runtime_seconds = time.perf_counter() - start
    return best


def csv_row(config: RunConfig, model: str, rep: MetricsReport, k_true: int) -> dict:
    return {
        "setting": config.setting,
        "r_min": repr(float(config.r_min)),
        "seed": str(config.master_seed),
        "model": model,
        "ari": repr(rep.ari),
        "silhouette": repr(rep.silhouette),
        "k_hat": str(rep.k_hat),
        "k_true": str(k_true),
        "runtime_s": repr(rep.runtime_seconds),
    }


def run_sensitivity_sweep(
    grid: Iterable[tuple[float, str, int]], base: Optional[RunConfig] = None
) -> list[dict]:
    """One FedGEM row and one centralized-EM row per (r_min, setting, seed) cell.

    Rows come back sorted by (setting, r_min, seed, model).
    """
    base = base or RunConfig(restarts=3, radius_grid=list(DEFAULT_RADIUS_GRID))
    rows = []
    for r_min, setting, seed in grid:
        cfg = dataclasses.replace(base, r_min=float(r_min), setting=setting, master_seed=int(seed))
        if setting != "client_imbalance":
            cfg.client_fractions = None
        scenario = build_scenario(cfg)
        fed = run_fedgem(cfg, scenario)
        central = run_centralized_baseline(cfg, scenario)
        rows.append(csv_row(cfg, "fedgem", fed.report, scenario.k_true))
        rows.append(csv_row(cfg, "centralized_em", central, scenario.k_true))
    rows.sort(key=lambda r: (r["setting"], float(r["r_min"]), int(r["seed"]), r["model"]))
    return rows


def write_csv(rows: Sequence[dict], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def config_to_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(raw: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw = dict(raw)
    if raw.get("dp") is not None:
        try:
            raw["dp"] = DpParams(**raw["dp"])
        except TypeError as exc:
            raise ConfigError(f"bad dp block: {exc}") from exc
    try:
        return RunConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# Execution knobs that cannot change results; left out of summaries so output
# bytes do not depend on how the run was scheduled.
EXECUTION_ONLY = ("workers",)


def summary_json(config: RunConfig, result: RunResult, scenario: Scenario) -> str:
    cfg = {k: v for k, v in config_to_dict(config).items() if k not in EXECUTION_ONLY}
    doc = {
        "config": cfg,
        "k_true": scenario.k_true,
        **result.summary(),
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")

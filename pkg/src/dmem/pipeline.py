"""Estimators built on the MEM core: no-borrow, full MEM, iMEM, k-means baseline, dMEM."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from dmem.changepoint import ChangepointResult, DetectorConfig, split_scored
from dmem.clustering import Strategy, assign, pool
from dmem.errors import InvalidArgument
from dmem.mem import (
    MAX_ENUMERATED_SOURCES,
    PriorSpec,
    SourceSummary,
    count_evaluations,
    fit_mem,
)
from dmem.scores import ScoredSource, imem_select, score_all


class EstimatorKind(str, Enum):
    NO_BORROW = "no_borrow"
    FULL_MEM = "full_mem"
    IMEM = "imem"
    KMEANS_BASELINE = "kmeans_baseline"
    DMEM = "dmem"


@dataclass(frozen=True)
class EstimatorSpec:
    kind: EstimatorKind = EstimatorKind.DMEM
    q: int = 10
    M: int = 10
    strategy: Strategy = Strategy.RANDOM
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    prior: PriorSpec = field(default_factory=PriorSpec)
    seed: int | None = None
    averaging_runs: int = 10
    kmeans_restarts: int = 25
    kmeans_max_iter: int = 100
    max_sources: int = MAX_ENUMERATED_SOURCES
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.kind is EstimatorKind.IMEM and self.q < 1:
            raise InvalidArgument(f"q must be at least 1, got {self.q}")
        if self.kind in (EstimatorKind.DMEM, EstimatorKind.KMEANS_BASELINE) and self.M < 1:
            raise InvalidArgument(f"M must be at least 1, got {self.M}")
        if self.averaging_runs < 1:
            raise InvalidArgument("averaging_runs must be at least 1")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind is EstimatorKind.IMEM:
            return f"imem_q{self.q}"
        if self.kind is EstimatorKind.KMEANS_BASELINE:
            return f"kmeans_M{self.M}"
        if self.kind is EstimatorKind.DMEM:
            return f"dmem_{self.strategy.value}_M{self.M}"
        return self.kind.value


@dataclass
class EstimateRecord:
    estimator: str
    posterior_mean: float
    posterior_variance: float
    esss: float
    n_supplements: int
    n_selected: int
    n_clusters: int
    selected_ids: list[str]
    cluster_composition: list[list[str]]
    model_count: int
    elapsed: float
    seed: int | None = None
    marginal_scores: list[tuple[str, float]] | None = None
    changepoint: ChangepointResult | None = None

    @property
    def posterior_sd(self) -> float:
        return float(np.sqrt(self.posterior_variance))

    @property
    def timing(self) -> dict:
        return {"model_count": self.model_count, "elapsed_seconds": self.elapsed}


def _record(spec, primary, supplements, fit, selected, clusters, counter, t0, **extra):
    return EstimateRecord(
        estimator=spec.label,
        posterior_mean=fit.posterior_mean,
        posterior_variance=fit.posterior_variance,
        esss=fit.esss,
        n_supplements=len(supplements),
        n_selected=len(selected),
        n_clusters=len(clusters),
        selected_ids=[s.id for s in selected],
        cluster_composition=[[s.id for s in c] for c in clusters],
        model_count=counter.value,
        elapsed=time.perf_counter() - t0,
        seed=spec.seed,
        **extra,
    )


def _score_list(scored: Sequence[ScoredSource]):
    return [(s.source.id, s.score) for s in scored]


def run_no_borrow(primary: SourceSummary, spec: EstimatorSpec | None = None) -> EstimateRecord:
    spec = spec or EstimatorSpec(EstimatorKind.NO_BORROW)
    t0 = time.perf_counter()
    with count_evaluations() as counter:
        fit = fit_mem(primary, [])
    return _record(spec, primary, [], fit, [], [], counter, t0)


def run_full_mem(primary, supplements, spec: EstimatorSpec | None = None) -> EstimateRecord:
    spec = spec or EstimatorSpec(EstimatorKind.FULL_MEM)
    t0 = time.perf_counter()
    with count_evaluations() as counter:
        fit = fit_mem(primary, supplements, spec.prior, max_sources=spec.max_sources)
    clusters = [[s] for s in supplements]
    return _record(spec, primary, supplements, fit, list(supplements), clusters, counter, t0)


def _subset_prior(prior: PriorSpec, scored: Sequence[ScoredSource]) -> PriorSpec:
    return prior.subset([s.index for s in scored])


def _cluster_prior(prior: PriorSpec, clusters: Sequence[Sequence[int]]) -> PriorSpec:
    """Prior for pooled clusters given as original supplement indices.

    Per-source inclusion probabilities are averaged over cluster members.
    """
    p = prior.inclusion_prob
    if not isinstance(p, tuple):
        return prior
    return PriorSpec(tuple(float(np.mean([p[i] for i in c])) for c in clusters))


def run_imem(primary, supplements, spec: EstimatorSpec | None = None) -> EstimateRecord:
    spec = spec or EstimatorSpec(EstimatorKind.IMEM)
    t0 = time.perf_counter()
    with count_evaluations() as counter:
        if not supplements:
            fit, scored, top = fit_mem(primary, []), [], []
        else:
            scored = score_all(primary, supplements, spec.prior)
            top = scored[: len(imem_select(scored, spec.q))]
            fit = fit_mem(
                primary,
                [s.source for s in top],
                _subset_prior(spec.prior, top),
                max_sources=spec.max_sources,
            )
    selected = [s.source for s in top]
    return _record(
        spec, primary, supplements, fit, selected, [[s] for s in selected], counter, t0,
        marginal_scores=_score_list(scored),
    )


def run_kmeans_baseline(primary, supplements, spec: EstimatorSpec | None = None) -> EstimateRecord:
    """k-means on the sample means of all supplements, pooled, then a full MEM."""
    spec = spec or EstimatorSpec(EstimatorKind.KMEANS_BASELINE, strategy=Strategy.KMEANS)
    t0 = time.perf_counter()
    with count_evaluations() as counter:
        if supplements:
            assignment = assign(
                supplements, Strategy.KMEANS, spec.M, spec.seed,
                kmeans_restarts=spec.kmeans_restarts, kmeans_max_iter=spec.kmeans_max_iter,
            )
            positions = assignment.clusters
        else:
            positions = ()
        clusters = [[supplements[i] for i in c] for c in positions]
        fit = fit_mem(
            primary, [pool(c) for c in clusters], _cluster_prior(spec.prior, positions),
            max_sources=spec.max_sources,
        )
    return _record(spec, primary, supplements, fit, list(supplements), clusters, counter, t0)


def _average_fits(fits):
    return (
        float(np.mean([f.posterior_mean for f in fits])),
        float(np.mean([f.posterior_variance for f in fits])),
        float(np.mean([f.esss for f in fits])),
    )


def run_dmem(primary, supplements, spec: EstimatorSpec | None = None) -> EstimateRecord:
    """Score, select by change-point, cluster into at most M pooled sources, fit a MEM.

    With the ``random_averaging`` strategy the clustering and final fit are
    repeated ``averaging_runs`` times (seeds ``seed + r``) and the posterior
    mean, variance and ESSS are averaged; the reported composition is that of
    the first run.
    """
    spec = spec or EstimatorSpec(EstimatorKind.DMEM)
    t0 = time.perf_counter()
    with count_evaluations() as counter:
        if not supplements:
            fit = fit_mem(primary, [])
            return _record(spec, primary, supplements, fit, [], [], counter, t0)
        scored = score_all(primary, supplements, spec.prior)
        kept, cp = split_scored(scored, spec.detector)
        selected = [s.source for s in kept]
        if not selected:
            fit = fit_mem(primary, [])
            return _record(
                spec, primary, supplements, fit, [], [], counter, t0,
                marginal_scores=_score_list(scored), changepoint=cp,
            )

        averaging = spec.strategy is Strategy.RANDOM_AVERAGING and len(selected) > spec.M
        runs = spec.averaging_runs if averaging else 1
        fits, first_clusters = [], None
        for r in range(runs):
            seed = None if spec.seed is None else spec.seed + r
            assignment = assign(
                selected, spec.strategy, spec.M, seed,
                kmeans_restarts=spec.kmeans_restarts, kmeans_max_iter=spec.kmeans_max_iter,
            )
            clusters = [[selected[i] for i in c] for c in assignment.clusters]
            prior = _cluster_prior(
                spec.prior, [[kept[i].index for i in c] for c in assignment.clusters]
            )
            fits.append(
                fit_mem(primary, [pool(c) for c in clusters], prior, max_sources=spec.max_sources)
            )
            if first_clusters is None:
                first_clusters = clusters

    record = _record(
        spec, primary, supplements, fits[0], selected, first_clusters, counter, t0,
        marginal_scores=_score_list(scored), changepoint=cp,
    )
    if runs > 1:
        record.posterior_mean, record.posterior_variance, record.esss = _average_fits(fits)
    return record


_RUNNERS = {
    EstimatorKind.FULL_MEM: run_full_mem,
    EstimatorKind.IMEM: run_imem,
    EstimatorKind.KMEANS_BASELINE: run_kmeans_baseline,
    EstimatorKind.DMEM: run_dmem,
}


def run_estimator(
    primary: SourceSummary, supplements: Sequence[SourceSummary], spec: EstimatorSpec
) -> EstimateRecord:
    if spec.kind is EstimatorKind.NO_BORROW:
        return run_no_borrow(primary, spec)
    return _RUNNERS[spec.kind](primary, list(supplements), spec)


def with_seed(spec: EstimatorSpec, seed: int | None) -> EstimatorSpec:
    return replace(spec, seed=seed)

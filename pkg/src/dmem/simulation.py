"""Seeded simulation studies comparing borrowing estimators.

Every replication draws its own generator from ``SeedSequence([base_seed,
rep])`` so a study gives the same rows whether replications run serially
or in a process pool.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from dmem.clustering import pool
from dmem.errors import InvalidArgument
from dmem.mem import PriorSpec, SourceSummary, fit_mem
from dmem.pipeline import EstimatorKind, EstimatorSpec, run_estimator
from dmem.changepoint import DetectorConfig

WORKERS_ENV = "DMEM_WORKERS"

ORACLE_VARIANTS = ("10x6", "10x(6+4)", "10x10")


@dataclass(frozen=True)
class PrimarySpec:
    n: int = 20
    mean: float = 0.0
    sd: float = 1.0


@dataclass(frozen=True)
class SupplementGroup:
    count: int
    mean: float
    n_range: tuple[int, int] = (20, 20)
    sd_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "n_range", tuple(int(v) for v in self.n_range))
        object.__setattr__(self, "sd_range", tuple(float(v) for v in self.sd_range))
        lo, hi = self.n_range
        if self.count < 1:
            raise InvalidArgument("group count must be positive")
        if lo < 2 or hi < lo:
            raise InvalidArgument(f"invalid n range {self.n_range}")
        if self.sd_range[0] <= 0 or self.sd_range[1] < self.sd_range[0]:
            raise InvalidArgument(f"invalid sd range {self.sd_range}")


@dataclass(frozen=True)
class OracleSpec:
    """Clusters built from the generator's true exchangeability labels.

    ``10x6``: exchangeable sources randomly split into M clusters.
    ``10x(6+4)``: M clusters, each mixing a share of exchangeable and
    nonexchangeable sources.
    ``10x10``: exchangeable and nonexchangeable sources separately chunked
    into clusters of ``(#all sources) / M`` members.
    """

    variant: str = "10x6"
    M: int = 10
    name: str | None = None

    def __post_init__(self):
        if self.variant not in ORACLE_VARIANTS:
            raise InvalidArgument(f"unknown oracle variant {self.variant!r}")

    @property
    def label(self) -> str:
        return self.name or f"oracle_{self.variant}"


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    primary: PrimarySpec
    groups: tuple[SupplementGroup, ...]
    reps: int = 1000
    base_seed: int = 0
    estimators: tuple = ()

    @property
    def n_supplements(self) -> int:
        return sum(g.count for g in self.groups)

    def with_(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = [_estimator_to_dict(e) for e in self.estimators]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(
            name=d.get("name", "custom"),
            primary=PrimarySpec(**d.get("primary", {})),
            groups=tuple(SupplementGroup(**g) for g in d["groups"]),
            reps=int(d.get("reps", 1000)),
            base_seed=int(d.get("base_seed", 0)),
            estimators=tuple(_estimator_from_dict(e) for e in d.get("estimators", ())),
        )


def _estimator_to_dict(e) -> dict:
    if isinstance(e, OracleSpec):
        return {"kind": "oracle", "variant": e.variant, "M": e.M, "name": e.name}
    d = asdict(e)
    d["kind"] = e.kind.value
    d["strategy"] = e.strategy.value
    return d


def _estimator_from_dict(d: dict):
    d = dict(d)
    if d.get("kind") == "oracle":
        d.pop("kind")
        return OracleSpec(**d)
    if "detector" in d:
        d["detector"] = DetectorConfig(**d["detector"])
    if "prior" in d:
        d["prior"] = PriorSpec(**d["prior"])
    return EstimatorSpec(**d)


@dataclass(frozen=True)
class Replication:
    primary: SourceSummary
    supplements: list[SourceSummary]
    theta: float
    exchangeable: np.ndarray  # true labels, aligned with supplements
    seed: int


@dataclass(frozen=True)
class MetricsRecord:
    rep: int
    estimator: str
    post_var: float
    bias: float
    rmse: float
    esss: float
    n_selected: int
    seed: int

    @classmethod
    def from_estimate(cls, rep, estimator, mean, variance, esss, n_selected, theta, seed):
        bias = mean - theta
        return cls(rep, estimator, variance, bias, math.sqrt(variance + bias * bias), esss,
                   n_selected, seed)


# -- built-in scenarios ------------------------------------------------------

def default_comparison() -> tuple:
    return (
        EstimatorSpec(EstimatorKind.IMEM, q=10),
        EstimatorSpec(EstimatorKind.DMEM, M=10, strategy="random"),
    )


SCENARIO3_PROPORTIONS = (10, 20, 30, 40, 50)


def builtin_scenario(name: str) -> ScenarioSpec:
    varied = dict(n_range=(15, 25), sd_range=(0.5, 1.5))
    primary = PrimarySpec(n=20, mean=0.0, sd=1.0)
    if name == "poc":
        groups = (SupplementGroup(60, 0.0), SupplementGroup(40, 1.0))
        estimators = (
            EstimatorSpec(EstimatorKind.IMEM, q=10),
            OracleSpec("10x10"),
            OracleSpec("10x(6+4)"),
            OracleSpec("10x6"),
        )
        return ScenarioSpec(name, primary, groups, estimators=estimators)
    if name == "scenario1":
        groups = (SupplementGroup(60, 0.0, **varied), SupplementGroup(40, 1.0, **varied))
    elif name == "scenario2":
        groups = (SupplementGroup(50, 0.0, **varied),) + tuple(
            SupplementGroup(10, m, **varied) for m in (1.0, 0.8, 0.6, 0.4, 0.2)
        )
    elif name.startswith("scenario3_"):
        suffix = name[len("scenario3_"):]
        strong = suffix.endswith("_strong") or suffix == "strong"
        pct = suffix.split("_")[0]
        if pct == "strong":
            pct = "p50"
        if not pct.startswith("p") or int(pct[1:]) not in SCENARIO3_PROPORTIONS:
            raise InvalidArgument(f"unknown scenario {name!r}")
        n_exch = 500 * int(pct[1:]) // 100
        far = 1.5 if strong else 1.0
        groups = (SupplementGroup(n_exch, 0.0, **varied), SupplementGroup(500 - n_exch, far, **varied))
    else:
        raise InvalidArgument(f"unknown scenario {name!r}")
    return ScenarioSpec(name, primary, groups, estimators=default_comparison())


def builtin_scenario_names() -> list[str]:
    names = ["poc", "scenario1", "scenario2"]
    names += [f"scenario3_p{p}" for p in SCENARIO3_PROPORTIONS]
    names += [f"scenario3_p{p}_strong" for p in SCENARIO3_PROPORTIONS]
    return names + ["scenario3_strong"]


# -- generation --------------------------------------------------------------

def replication_seed(base_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([base_seed, rep]).generate_state(1, np.uint64)[0] >> 1)


def _summarize(id, values):
    return SourceSummary.from_observations(id, values)


def generate_replication(spec: ScenarioSpec, rep: int) -> Replication:
    if not 0 <= rep < spec.reps:
        raise InvalidArgument(f"replication {rep} outside 0..{spec.reps - 1}")
    seed = replication_seed(spec.base_seed, rep)
    rng = np.random.default_rng(seed)
    p = spec.primary
    primary = _summarize("primary", rng.normal(p.mean, p.sd, p.n))
    supplements, labels = [], []
    k = 0
    for g in spec.groups:
        for _ in range(g.count):
            n = int(rng.integers(g.n_range[0], g.n_range[1] + 1))
            sd = float(rng.uniform(*g.sd_range)) if g.sd_range[0] < g.sd_range[1] else g.sd_range[0]
            supplements.append(_summarize(f"s{k}", rng.normal(g.mean, sd, n)))
            labels.append(g.mean == p.mean)
            k += 1
    return Replication(primary, supplements, p.mean, np.array(labels), seed)


# -- estimation --------------------------------------------------------------

def oracle_clusters(rep: Replication, spec: OracleSpec, rng: np.random.Generator):
    exch = [s for s, e in zip(rep.supplements, rep.exchangeable) if e]
    other = [s for s, e in zip(rep.supplements, rep.exchangeable) if not e]

    def split(sources, n_blocks):
        perm = rng.permutation(len(sources))
        return [[sources[i] for i in b] for b in np.array_split(perm, n_blocks) if len(b)]

    if spec.variant == "10x6":
        return split(exch, spec.M)
    if spec.variant == "10x(6+4)":
        return [a + b for a, b in zip(split(exch, spec.M), split(other, spec.M))]
    size = max(1, len(rep.supplements) // spec.M)
    return split(exch, math.ceil(len(exch) / size)) + split(other, math.ceil(len(other) / size))


def _estimate(rep: Replication, index: int, estimator, rep_index: int) -> MetricsRecord:
    # each estimator gets its own stream so adding one does not perturb the others
    sub_seed = int(np.random.SeedSequence([rep.seed, index]).generate_state(1, np.uint64)[0] >> 1)
    if isinstance(estimator, OracleSpec):
        clusters = oracle_clusters(rep, estimator, np.random.default_rng(sub_seed))
        fit = fit_mem(rep.primary, [pool(c) for c in clusters])
        return MetricsRecord.from_estimate(
            rep_index, estimator.label, fit.posterior_mean, fit.posterior_variance, fit.esss,
            sum(len(c) for c in clusters), rep.theta, rep.seed,
        )
    record = run_estimator(rep.primary, rep.supplements, replace(estimator, seed=sub_seed))
    return MetricsRecord.from_estimate(
        rep_index, estimator.label, record.posterior_mean, record.posterior_variance, record.esss,
        record.n_selected, rep.theta, rep.seed,
    )


def run_replication(spec: ScenarioSpec, rep: int) -> list[MetricsRecord]:
    replication = generate_replication(spec, rep)
    return [_estimate(replication, i, e, rep) for i, e in enumerate(spec.estimators)]


def _run_chunk(args):
    spec, reps = args
    return [run_replication(spec, r) for r in reps]


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def run_study(spec: ScenarioSpec, workers: int | None = None) -> list[MetricsRecord]:
    """Metrics for every (replication, estimator), replication-major."""
    if not spec.estimators:
        raise InvalidArgument("scenario has no estimators to run")
    workers = resolve_workers(workers)
    if workers == 1:
        rows = [run_replication(spec, r) for r in range(spec.reps)]
    else:
        chunks = [(spec, list(c)) for c in np.array_split(np.arange(spec.reps), workers * 4) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = [row for chunk in ex.map(_run_chunk, chunks) for row in chunk]
    return [m for row in rows for m in row]


# -- summaries ---------------------------------------------------------------

PERCENTILES = (2.5, 25.0, 50.0, 75.0, 97.5)
METRICS = ("post_var", "bias", "rmse", "esss", "n_selected")


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    metric: str
    percentiles: tuple[float, ...]


def summarize(records: Sequence[MetricsRecord], metrics: Sequence[str] = METRICS) -> list[SummaryRow]:
    """Empirical percentiles (linear interpolation) of each metric per estimator.

    Estimators appear in order of first occurrence.
    """
    order = list(dict.fromkeys(r.estimator for r in records))
    out = []
    for est in order:
        rows = [r for r in records if r.estimator == est]
        for m in metrics:
            vals = np.array([getattr(r, m) for r in rows], dtype=float)
            out.append(SummaryRow(est, m, tuple(float(v) for v in np.percentile(vals, PERCENTILES))))
    return out


def median_of(records: Sequence[MetricsRecord], estimator: str, metric: str) -> float:
    vals = [getattr(r, metric) for r in records if r.estimator == estimator]
    if not vals:
        raise InvalidArgument(f"no records for estimator {estimator!r}")
    return float(np.median(vals))

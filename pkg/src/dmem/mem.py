"""Closed-form Gaussian multisource exchangeability models.

Each source is reduced to its sufficient statistics (count, sample mean,
known or plug-in variance).  Likelihoods are written on the sample-mean
scale, ``ybar_i ~ N(mu, sigma_i^2 / n_i)``, so a source that is not pooled
with anything integrates to exactly one under the flat prior on its mean.
A model (exchangeability configuration) pools the primary source with the
supplements whose indicator is 1; its marginal likelihood is the flat-prior
integral over the single shared mean of that group.

All model weights are normalized in the log domain.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from dmem.errors import InvalidArgument, ModelSpaceTooLarge

LOG_2PI = math.log(2.0 * math.pi)

#: Largest number of supplements ``fit_mem`` enumerates without an override.
MAX_ENUMERATED_SOURCES = 20


@dataclass(frozen=True)
class SourceSummary:
    """Sufficient statistics of one data source."""

    id: str
    n: int
    mean: float
    variance: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgument(f"source {self.id!r}: n must be a positive integer, got {self.n}")
        if not math.isfinite(self.mean):
            raise InvalidArgument(f"source {self.id!r}: mean must be finite")
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise InvalidArgument(
                f"source {self.id!r}: variance must be positive and finite, got {self.variance}"
            )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))
        if not math.isfinite(self.precision):
            raise InvalidArgument(f"source {self.id!r}: precision n/variance overflows")

    @property
    def precision(self) -> float:
        return self.n / self.variance

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    @classmethod
    def from_observations(
        cls, id: str, values: Sequence[float], variance_floor: float | None = None
    ) -> "SourceSummary":
        """Summarize raw observations using the plug-in sample variance (ddof=1).

        A zero sample variance is rejected unless ``variance_floor`` is given,
        in which case the variance is raised to the floor.
        """
        x = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise InvalidArgument(f"source {id!r}: need at least 2 observations, got {x.size}")
        var = float(np.var(x, ddof=1))
        if variance_floor is not None:
            var = max(var, variance_floor)
        if var <= 0:
            raise InvalidArgument(
                f"source {id!r}: all observations identical (zero variance); "
                "set a variance floor to use it"
            )
        return cls(id=id, n=x.size, mean=float(np.mean(x)), variance=var)


@dataclass(frozen=True)
class ModelConfiguration:
    """Exchangeability indicators ``(s_1, ..., s_H)`` for one model."""

    indicators: tuple[int, ...]

    def __post_init__(self):
        ind = tuple(int(s) for s in self.indicators)
        if any(s not in (0, 1) for s in ind):
            raise InvalidArgument(f"indicators must be 0/1, got {self.indicators}")
        object.__setattr__(self, "indicators", ind)

    def __len__(self):
        return len(self.indicators)

    @classmethod
    def from_index(cls, k: int, n_sources: int) -> "ModelConfiguration":
        """Configuration ``k`` of the fixed enumeration order: ``s_h = bit h of k``."""
        return cls(tuple((k >> h) & 1 for h in range(n_sources)))


def enumerate_configurations(n_sources: int) -> Iterator[ModelConfiguration]:
    """Yield all ``2**n_sources`` configurations, index 0 (no borrowing) first."""
    for k in range(1 << n_sources):
        yield ModelConfiguration.from_index(k, n_sources)


def indicator_matrix(n_sources: int) -> np.ndarray:
    """``(2**H, H)`` 0/1 matrix whose row k is configuration k."""
    k = np.arange(1 << n_sources, dtype=np.int64)[:, None]
    return ((k >> np.arange(n_sources, dtype=np.int64)) & 1).astype(np.int8)


@dataclass(frozen=True)
class PriorSpec:
    """Per-source prior inclusion probabilities ``pi(S_h = 1)``.

    ``inclusion_prob`` is either one value shared by all sources or a
    sequence with one value per supplement.
    """

    inclusion_prob: float | tuple[float, ...] = 0.5

    def __post_init__(self):
        p = self.inclusion_prob
        if isinstance(p, (list, tuple, np.ndarray)):
            p = tuple(float(v) for v in p)
            vals = p
        else:
            p = float(p)
            vals = (p,)
        if any(not (0.0 <= v <= 1.0) for v in vals):
            raise InvalidArgument(f"inclusion probabilities must lie in [0, 1], got {p}")
        object.__setattr__(self, "inclusion_prob", p)

    def probabilities(self, n_sources: int) -> np.ndarray:
        p = self.inclusion_prob
        if isinstance(p, tuple):
            if len(p) != n_sources:
                raise InvalidArgument(
                    f"prior has {len(p)} inclusion probabilities for {n_sources} sources"
                )
            return np.array(p)
        return np.full(n_sources, p)

    def subset(self, indices: Sequence[int]) -> "PriorSpec":
        """Prior restricted to the supplements at ``indices``."""
        if isinstance(self.inclusion_prob, tuple):
            return PriorSpec(tuple(self.inclusion_prob[i] for i in indices))
        return self


# -- instrumentation ---------------------------------------------------------

class EvaluationCounter:
    """Counts marginal-likelihood (model) evaluations inside a ``count_evaluations`` block."""

    def __init__(self):
        self.value = 0


_active_counter: contextvars.ContextVar[EvaluationCounter | None] = contextvars.ContextVar(
    "dmem_evaluation_counter", default=None
)


@contextlib.contextmanager
def count_evaluations() -> Iterator[EvaluationCounter]:
    """Nested blocks also add their count to the enclosing counter."""
    counter = EvaluationCounter()
    token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(token)
        record_evaluations(counter.value)


def record_evaluations(n: int) -> None:
    counter = _active_counter.get()
    if counter is not None:
        counter.value += n


# -- marginal likelihoods ----------------------------------------------------

def _check_sources(sources):
    for s in sources:
        if not isinstance(s, SourceSummary):
            raise InvalidArgument(f"expected SourceSummary, got {type(s).__name__}")


def log_group_marginal(group: Sequence[SourceSummary]) -> float:
    """Log of the flat-prior integral over a shared mean of the group's sample-mean likelihoods.

    A single source gives exactly 0.0.
    """
    if len(group) == 0:
        raise InvalidArgument("group must contain at least one source")
    _check_sources(group)
    record_evaluations(1)
    if len(group) == 1:
        return 0.0
    tau = np.array([s.precision for s in group])
    # center on the first mean so the quadratic form only sees differences
    d = np.array([s.mean for s in group]) - group[0].mean
    total = tau.sum()
    weighted = np.dot(tau, d)
    q = max(float(np.dot(tau, d * d) - weighted * weighted / total), 0.0)
    return float(
        -0.5 * (len(group) - 1) * LOG_2PI
        + 0.5 * np.log(tau).sum()
        - 0.5 * math.log(total)
        - 0.5 * q
    )


def log_model_marginal(
    primary: SourceSummary,
    supplements: Sequence[SourceSummary],
    config: ModelConfiguration | Sequence[int],
) -> float:
    if not isinstance(config, ModelConfiguration):
        config = ModelConfiguration(tuple(config))
    if len(config) != len(supplements):
        raise InvalidArgument(
            f"configuration has {len(config)} indicators for {len(supplements)} supplements"
        )
    group = [primary] + [s for s, flag in zip(supplements, config.indicators) if flag]
    return log_group_marginal(group)


def _config_sums(if_zero: np.ndarray, if_one: np.ndarray) -> np.ndarray:
    """Per-configuration sum of ``if_one[h]`` or ``if_zero[h]`` according to bit h.

    Built by doubling in the fixed enumeration order, so the additions happen
    in the same order on every run.
    """
    out = np.zeros(1)
    for a, b in zip(if_zero, if_one):
        out = np.concatenate((out + a, out + b))
    return out


def logsumexp(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    top = np.max(x)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(x - top))))


@dataclass(frozen=True)
class PosteriorMixture:
    """A fitted MEM: model weights and the Gaussian mixture posterior for the primary mean.

    Component ``k`` corresponds to ``ModelConfiguration.from_index(k, n_sources)``.
    """

    weights: np.ndarray
    component_means: np.ndarray
    component_variances: np.ndarray
    posterior_mean: float
    posterior_variance: float
    esss: float
    log_marginals: np.ndarray
    log_priors: np.ndarray
    n_sources: int
    source_ids: tuple[str, ...] = field(default=())

    @property
    def n_models(self) -> int:
        return len(self.weights)

    @property
    def posterior_sd(self) -> float:
        return math.sqrt(self.posterior_variance)

    @property
    def indicators(self) -> np.ndarray:
        return indicator_matrix(self.n_sources)

    def configuration(self, k: int) -> ModelConfiguration:
        return ModelConfiguration.from_index(k, self.n_sources)

    def inclusion_probabilities(self) -> np.ndarray:
        """Posterior probability that each supplement is exchangeable."""
        if self.n_sources == 0:
            return np.zeros(0)
        return self.weights @ self.indicators


def fit_mem(
    primary: SourceSummary,
    supplements: Sequence[SourceSummary],
    prior: PriorSpec | None = None,
    *,
    max_sources: int = MAX_ENUMERATED_SOURCES,
    allow_large: bool = False,
) -> PosteriorMixture:
    """Fit the full MEM by enumerating every exchangeability configuration."""
    prior = prior or PriorSpec()
    _check_sources([primary, *supplements])
    H = len(supplements)
    if H > max_sources and not allow_large:
        raise ModelSpaceTooLarge(
            f"full MEM over {H} supplements needs 2^{H} models (limit {max_sources}); "
            "use iMEM or dMEM, or pass allow_large=True"
        )
    pi = prior.probabilities(H)
    record_evaluations(1 << H)

    tau_p = primary.precision
    tau = np.array([s.precision for s in supplements], dtype=float)
    d = np.array([s.mean for s in supplements], dtype=float) - primary.mean
    zeros = np.zeros(H)

    total = tau_p + _config_sums(zeros, tau)
    weighted = _config_sums(zeros, tau * d)
    sq = _config_sums(zeros, tau * d * d)
    log_tau = math.log(tau_p) + _config_sums(zeros, np.log(tau))
    size = _config_sums(zeros, np.ones(H))

    q = np.maximum(sq - weighted * weighted / total, 0.0)
    log_marg = -0.5 * size * LOG_2PI + 0.5 * log_tau - 0.5 * np.log(total) - 0.5 * q
    with np.errstate(divide="ignore"):
        log_prior = _config_sums(np.log1p(-pi), np.log(pi))

    log_post = log_marg + log_prior
    norm = logsumexp(log_post)
    if not np.isfinite(norm):
        raise InvalidArgument("every model has zero prior probability")
    weights = np.exp(log_post - norm)

    rel_means = weighted / total
    variances = 1.0 / total
    mean_rel = float(np.sum(weights * rel_means))
    post_var = float(np.sum(weights * (variances + (rel_means - mean_rel) ** 2)))
    gain = (total - tau_p) / tau_p

    return PosteriorMixture(
        weights=weights,
        component_means=primary.mean + rel_means,
        component_variances=variances,
        posterior_mean=primary.mean + mean_rel,
        posterior_variance=post_var,
        esss=float(np.sum(weights * gain)),
        log_marginals=log_marg,
        log_priors=log_prior,
        n_sources=H,
        source_ids=tuple(s.id for s in supplements),
    )


def esss(
    fit: PosteriorMixture,
    primary: SourceSummary,
    supplements: Sequence[SourceSummary],
    configs: Sequence[ModelConfiguration] | None = None,
) -> float:
    """Effective supplemental sample size of a fitted MEM.

    Posterior-weighted precision gain over the no-borrowing reference,
    in units of the primary source's precision.  ``configs`` defaults to the
    fixed enumeration order used by :func:`fit_mem`.
    """
    if configs is None:
        configs = list(enumerate_configurations(len(supplements)))
    if len(configs) != len(fit.weights):
        raise InvalidArgument(f"{len(configs)} configurations for {len(fit.weights)} weights")
    inv_v = 1.0 / (primary.variance / primary.n)
    inv_vh = np.array([1.0 / (s.variance / s.n) for s in supplements])
    total = 0.0
    for w, cfg in zip(fit.weights, configs):
        if len(cfg) != len(supplements):
            raise InvalidArgument("configuration length does not match supplements")
        borrowed = float(np.dot(np.array(cfg.indicators, dtype=float), inv_vh)) if len(cfg) else 0.0
        total += w * ((inv_v + borrowed) / inv_v - 1.0)
    return float(total)

"""Marginal exchangeability scores and top-q (iMEM) source selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dmem.errors import InvalidArgument
from dmem.mem import LOG_2PI, PriorSpec, SourceSummary, log_group_marginal, record_evaluations


@dataclass(frozen=True)
class ScoredSource:
    source: SourceSummary
    score: float
    index: int = 0  # position in the caller's supplement list, used for tie-breaking


def _posterior_inclusion(log_l1: np.ndarray, pi: np.ndarray) -> np.ndarray:
    # w = L1*pi / (L1*pi + 1*(1-pi)), evaluated in the log domain
    with np.errstate(divide="ignore"):
        a = log_l1 + np.log(pi)
        b = np.log1p(-pi)
    return np.exp(a - np.logaddexp(a, b))


def marginal_score(
    primary: SourceSummary, source: SourceSummary, prior: PriorSpec | None = None, index: int = 0
) -> ScoredSource:
    """Weight of the exchangeable model in the two-source MEM of ``primary`` and ``source``."""
    prior = prior or PriorSpec()
    p = prior.inclusion_prob
    pi = np.array([p[index] if isinstance(p, tuple) else p])
    log_l1 = log_group_marginal([primary, source])
    score = float(_posterior_inclusion(np.array([log_l1]), pi)[0])
    return ScoredSource(source, score, index)


def pairwise_log_marginals(primary: SourceSummary, supplements: Sequence[SourceSummary]) -> np.ndarray:
    """Vectorized ``log_group_marginal([primary, h])`` for every supplement h."""
    tau_p = primary.precision
    tau = np.array([s.precision for s in supplements], dtype=float)
    d = np.array([s.mean for s in supplements], dtype=float) - primary.mean
    total = tau_p + tau
    record_evaluations(len(supplements))
    return (
        -0.5 * LOG_2PI
        + 0.5 * (math.log(tau_p) + np.log(tau))
        - 0.5 * np.log(total)
        - 0.5 * (tau_p * tau / total) * d * d
    )


def score_all(
    primary: SourceSummary, supplements: Sequence[SourceSummary], prior: PriorSpec | None = None
) -> list[ScoredSource]:
    """Score every supplement and sort descending; ties keep the original order.

    Each score depends only on its own source, so this is a map over
    supplements (computed here as one vectorized pass).
    """
    if len(supplements) == 0:
        raise InvalidArgument("need at least one supplementary source to score")
    prior = prior or PriorSpec()
    scores = _posterior_inclusion(
        pairwise_log_marginals(primary, supplements), prior.probabilities(len(supplements))
    )
    order = np.argsort(-scores, kind="stable")
    return [ScoredSource(supplements[i], float(scores[i]), int(i)) for i in order]


def imem_select(scored: Sequence[ScoredSource], q: int) -> list[SourceSummary]:
    """Top ``q`` sources of an already sorted score list."""
    if q < 1:
        raise InvalidArgument(f"q must be at least 1, got {q}")
    return [s.source for s in scored[:q]]

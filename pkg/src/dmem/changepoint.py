"""Single change-point detection on sorted marginal scores (stage-1 selection).

The detector fits two Gaussian segments with their own means and a shared
variance against a single-segment null.  With MLE plug-in variances the
likelihood-ratio statistic reduces to ``H * log(RSS_0 / RSS_min)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from dmem.errors import InvalidArgument
from dmem.mem import SourceSummary
from dmem.scores import ScoredSource

MIN_SCORES_FOR_TEST = 4


class Fallback(str, Enum):
    NONE = "none"
    KEEP_ALL = "keep_all"
    DROP_ALL = "drop_all"


@dataclass(frozen=True)
class DetectorConfig:
    """Settings for :func:`detect`.

    penalty: threshold ``b`` on the LR statistic; ``None`` means ``3 * log(H)``.
    low_weight_threshold: without a detected change, drop everything when
        the largest score is below this value, otherwise keep everything.
    hard_threshold: optional extra cut applied after selection.
    """

    penalty: float | None = None
    low_weight_threshold: float = 0.2
    hard_threshold: float | None = None

    def threshold(self, n_scores: int) -> float:
        if self.penalty is not None:
            return float(self.penalty)
        return 3.0 * math.log(n_scores)


@dataclass(frozen=True)
class ChangepointResult:
    detected: bool
    split_index: int | None  # number of leading scores kept when detected
    statistic: float
    threshold: float
    fallback: Fallback

    def n_kept(self, n_scores: int) -> int:
        if self.detected:
            return self.split_index
        return n_scores if self.fallback is Fallback.KEEP_ALL else 0


def segment_rss(x: np.ndarray) -> np.ndarray:
    """RSS of the best two-segment fit for every split c = 1..H-1 (index c-1)."""
    x = x - x.mean()
    H = len(x)
    c = np.arange(1, H)
    s1 = np.cumsum(x)[:-1]
    s2 = np.cumsum(x * x)[:-1]
    tot1, tot2 = s1[-1] + x[-1], s2[-1] + x[-1] ** 2
    left = s2 - s1 * s1 / c
    right = (tot2 - s2) - (tot1 - s1) ** 2 / (H - c)
    return np.maximum(left, 0.0) + np.maximum(right, 0.0)


def _fallback(x: np.ndarray, config: DetectorConfig) -> Fallback:
    return Fallback.DROP_ALL if np.max(x) < config.low_weight_threshold else Fallback.KEEP_ALL


def detect(sorted_scores: Sequence[float], config: DetectorConfig | None = None) -> ChangepointResult:
    config = config or DetectorConfig()
    x = np.asarray(sorted_scores, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgument("need a non-empty 1-D score vector")
    if np.any(np.diff(x) > 0):
        raise InvalidArgument("scores must be sorted in descending order")
    H = x.size
    b = config.threshold(H) if H > 1 else math.inf

    if H < MIN_SCORES_FOR_TEST or x[0] == x[-1]:
        return ChangepointResult(False, None, 0.0, b, _fallback(x, config))

    rss0 = float(np.sum((x - x.mean()) ** 2))
    rss = segment_rss(x)
    tol = 1e-12 * rss0
    # near-ties (within rounding) resolve toward the smaller c
    c = int(np.flatnonzero(rss <= rss.min() + tol)[0]) + 1
    rss_min = float(rss[c - 1])
    if rss_min <= tol:
        stat = math.inf
    else:
        stat = max(H * math.log(rss0 / rss_min), 0.0)

    if stat > b:
        return ChangepointResult(True, c, stat, b, Fallback.NONE)
    return ChangepointResult(False, None, stat, b, _fallback(x, config))


def split_scored(
    scored: Sequence[ScoredSource], config: DetectorConfig | None = None
) -> tuple[list[ScoredSource], ChangepointResult]:
    """Kept prefix of a descending score list together with the detector result."""
    config = config or DetectorConfig()
    if len(scored) == 0:
        return [], ChangepointResult(False, None, 0.0, math.inf, Fallback.DROP_ALL)
    result = detect([s.score for s in scored], config)
    kept = list(scored[: result.n_kept(len(scored))])
    if config.hard_threshold is not None:
        kept = [s for s in kept if s.score >= config.hard_threshold]
    return kept, result


def select_sources(
    scored: Sequence[ScoredSource], config: DetectorConfig | None = None
) -> list[SourceSummary]:
    return [s.source for s in split_scored(scored, config)[0]]

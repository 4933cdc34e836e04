"""CSV/JSON ingestion and emission.

Input tables are UTF-8, comma-delimited, with a header row:

* ``long``: ``source_id,value``; one row per observation.
* ``summary``: ``source_id,n,mean,sd``; one row per source.

Floats are written with 17 significant digits so that files round-trip.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from dmem.errors import DataFormatError, DataValidationError, InvalidArgument
from dmem.mem import SourceSummary

log = logging.getLogger(__name__)

LONG_COLUMNS = ("source_id", "value")
SUMMARY_COLUMNS = ("source_id", "n", "mean", "sd")
METRICS_COLUMNS = ("rep", "estimator", "post_var", "bias", "rmse", "esss", "n_selected", "seed")
SUMMARY_TABLE_COLUMNS = ("estimator", "metric", "p2.5", "p25", "p50", "p75", "p97.5")
SCORES_COLUMNS = ("source_id", "marginal_score", "selected_flag", "changepoint_index")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class DataTable:
    sources: dict[str, SourceSummary]
    path: str
    format: str
    dropped: list[str] = field(default_factory=list)

    def split(self, primary_id: str) -> tuple[SourceSummary, list[SourceSummary]]:
        if primary_id not in self.sources:
            raise DataValidationError(f"{self.path}: primary source {primary_id!r} not found")
        return self.sources[primary_id], [s for k, s in self.sources.items() if k != primary_id]


def _reader(path: Path, required: Sequence[str]):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        fh.close()
        raise DataFormatError(f"{path}:1: empty file, header row required")
    header = [h.strip() for h in reader.fieldnames]
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise DataFormatError(f"{path}:1: missing column(s) {', '.join(missing)}")
    reader.fieldnames = header
    return fh, reader


def _number(path, line, column, text, kind=float):
    try:
        value = kind(text.strip())
    except (ValueError, AttributeError):
        raise DataFormatError(f"{path}:{line}: column {column!r}: not a number: {text!r}") from None
    if kind is float and not math.isfinite(value):
        raise DataFormatError(f"{path}:{line}: column {column!r}: non-finite value {text!r}")
    return value


def _read_long(path, primary_id, min_count, variance_floor):
    values: dict[str, list[float]] = {}
    fh, reader = _reader(path, LONG_COLUMNS)
    with fh:
        for row in reader:
            line = reader.line_num
            sid = (row["source_id"] or "").strip()
            if not sid:
                raise DataFormatError(f"{path}:{line}: empty source_id")
            values.setdefault(sid, []).append(_number(path, line, "value", row["value"]))

    sources, dropped = {}, []
    for sid, vals in values.items():
        needed = max(2, min_count)
        if len(vals) < needed:
            if sid == primary_id:
                raise DataValidationError(
                    f"{path}: primary source {sid!r} has {len(vals)} observation(s), needs {needed}"
                )
            log.warning("dropping source %r: %d observation(s) < minimum %d", sid, len(vals), needed)
            dropped.append(sid)
            continue
        try:
            sources[sid] = SourceSummary.from_observations(sid, vals, variance_floor)
        except InvalidArgument as exc:
            raise DataValidationError(f"{path}: {exc}") from None
    return sources, dropped


def _read_summary(path, primary_id, min_count):
    sources, dropped = {}, []
    fh, reader = _reader(path, SUMMARY_COLUMNS)
    with fh:
        for row in reader:
            line = reader.line_num
            sid = (row["source_id"] or "").strip()
            if not sid:
                raise DataFormatError(f"{path}:{line}: empty source_id")
            if sid in sources or sid in dropped:
                raise DataValidationError(f"{path}:{line}: duplicate source_id {sid!r}")
            n_val = _number(path, line, "n", row["n"])
            if n_val != int(n_val) or n_val < 1:
                raise DataValidationError(f"{path}:{line}: n must be a positive integer, got {row['n']!r}")
            mean = _number(path, line, "mean", row["mean"])
            sd = _number(path, line, "sd", row["sd"])
            if sd <= 0:
                raise DataValidationError(f"{path}:{line}: sd must be positive, got {row['sd']!r}")
            if n_val < min_count and sid != primary_id:
                log.warning("dropping source %r: n=%d < minimum %d", sid, n_val, min_count)
                dropped.append(sid)
                continue
            sources[sid] = SourceSummary(sid, int(n_val), mean, sd * sd)
    if primary_id is not None and primary_id in sources and sources[primary_id].n < min_count:
        raise DataValidationError(f"{path}: primary source {primary_id!r} below minimum count {min_count}")
    return sources, dropped


def ingest(
    path: str | Path,
    format: str = "long",
    *,
    primary_id: str | None = None,
    min_count: int = 2,
    variance_floor: float | None = None,
) -> DataTable:
    """Read a data file into per-source summaries.

    Supplements below ``min_count`` observations are dropped with a warning;
    the primary (when named) is rejected instead.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"{path}: no such file")
    if format == "long":
        sources, dropped = _read_long(path, primary_id, min_count, variance_floor)
    elif format == "summary":
        sources, dropped = _read_summary(path, primary_id, min_count)
    else:
        raise InvalidArgument(f"unknown format {format!r}; expected 'long' or 'summary'")
    if primary_id is not None and primary_id not in sources:
        raise DataValidationError(f"{path}: primary source {primary_id!r} not found")
    return DataTable(sources, str(path), format, dropped)


def _write_rows(target, header, rows: Iterable[Sequence]):
    # target is a path or an open text stream
    if hasattr(target, "write"):
        w = csv.writer(target, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(target, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, header, rows)


def write_summary_csv(sources: Iterable[SourceSummary], path: str | Path) -> None:
    _write_rows(path, SUMMARY_COLUMNS, ([s.id, s.n, fmt(s.mean), fmt(s.sd)] for s in sources))


def write_metrics_csv(records, path: str | Path) -> None:
    _write_rows(
        path,
        METRICS_COLUMNS,
        (
            [r.rep, r.estimator, fmt(r.post_var), fmt(r.bias), fmt(r.rmse), fmt(r.esss), r.n_selected, r.seed]
            for r in records
        ),
    )


def write_summary_table_csv(rows, path: str | Path) -> None:
    _write_rows(
        path,
        SUMMARY_TABLE_COLUMNS,
        ([r.estimator, r.metric, *(fmt(v) for v in r.percentiles)] for r in rows),
    )


def write_scores_csv(scored, n_kept: int, split_index: int | None, path: str | Path) -> None:
    cp = "" if split_index is None else str(split_index)
    _write_rows(
        path,
        SCORES_COLUMNS,
        ([s.source.id, fmt(s.score), int(i < n_kept), cp] for i, s in enumerate(scored)),
    )


def estimate_to_dict(record, emit_scores: bool = False) -> dict:
    doc = {
        "estimator": record.estimator,
        "posterior_mean": record.posterior_mean,
        "posterior_sd": record.posterior_sd,
        "esss": record.esss,
        "n_supplements": record.n_supplements,
        "n_selected": record.n_selected,
        "n_clusters": record.n_clusters,
        "selected_source_ids": record.selected_ids,
        "cluster_composition": record.cluster_composition,
        "seed": record.seed,
        "model_count": record.model_count,
    }
    if emit_scores:
        doc["marginal_scores"] = (
            None if record.marginal_scores is None
            else [{"source_id": sid, "score": sc} for sid, sc in record.marginal_scores]
        )
    return doc


def dump_json(doc, path: str | Path | None = None) -> str:
    text = json.dumps(doc, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text

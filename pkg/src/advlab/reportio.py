"""File formats: the prediction-log CSV and the report artifacts.

Prediction log (UTF-8, LF)::

    item_id,true_class,source_model,attack,target_model,clean_top_k,adv_pred,target_class

`clean_top_k` is a ';'-joined class list; `target_class` is empty for
untargeted runs. Reports are written as CSV (rounded percentages) plus a
JSON twin carrying exact counts; undefined percentages render as an em dash.
"""

from __future__ import annotations

import csv
import json
from typing import Sequence

from .errors import ContractError, LogConsistencyError, LogParseError
from .evaluation import (
    CollectionReportRow,
    TopkReport,
    TransferMatrix,
    TransferRecord,
)

LOG_HEADER = ["item_id", "true_class", "source_model", "attack", "target_model",
              "clean_top_k", "adv_pred", "target_class"]

UNDEFINED = "—"


def fmt_pct(value: float | None) -> str:
    return UNDEFINED if value is None else f"{value:.1f}"


def export_prediction_log(records: Sequence[TransferRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for r in records:
            writer.writerow([
                r.item_id, r.true_class, r.source_model, r.attack, r.target_model,
                ";".join(str(c) for c in r.clean_top_k), r.adv_pred,
                "" if r.target_class is None else r.target_class,
            ])


def ingest_prediction_log(path) -> list[TransferRecord]:
    """Parse and validate an external prediction log; errors carry the
    offending 1-based line number."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LogParseError(1, "empty file; expected a header row") from None
        if header != LOG_HEADER:
            raise LogParseError(1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LOG_HEADER):
                raise LogParseError(lineno, f"expected {len(LOG_HEADER)} fields, got {len(row)}")
            try:
                true_class = int(row[1])
                topk = tuple(int(c) for c in row[5].split(";") if c != "")
                adv_pred = int(row[6])
                target = None if row[7] == "" else int(row[7])
            except ValueError as exc:
                raise LogParseError(lineno, f"bad integer field: {exc}") from None
            if row[3] not in ("PGD", "CW"):
                raise LogParseError(lineno, f"unknown attack name {row[3]!r}")
            if min((true_class, adv_pred, *topk), default=0) < 0:
                raise LogParseError(lineno, "negative class index")
            if not topk or topk[0] != true_class:
                raise LogConsistencyError(
                    lineno, f"clean_top_k must start with the true class {true_class}, got {row[5]!r}")
            try:
                records.append(TransferRecord(
                    item_id=row[0], true_class=true_class, source_model=row[2],
                    attack=row[3], target_model=row[4], clean_top_k=topk,
                    adv_pred=adv_pred, target_class=target,
                ))
            except ContractError as exc:
                raise LogConsistencyError(lineno, str(exc)) from None
    return records


def _write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_matrix_csv(matrix: TransferMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_model", "target_model", "successes", "attempted", "percentage"])
        for s, t, n in matrix.cells():
            writer.writerow([s, t, n, matrix.attempted.get(s, 0), fmt_pct(matrix.percentage(s, t))])


def write_matrix_json(matrix: TransferMatrix, path) -> None:
    _write_json({
        "attack": matrix.attack,
        "mode": matrix.mode,
        "models": list(matrix.models),
        "attempted": dict(matrix.attempted),
        "cells": [{"source": s, "target": t, "successes": n} for s, t, n in matrix.cells()],
    }, path)


def write_topk_csv(reports: Sequence[TopkReport], path) -> None:
    """Per-class rows plus an 'all' row; one percentage column per K."""
    ks = [r.k for r in reports]
    classes = sorted({c for r in reports for c in r.per_class})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true_class", "transfer_records", *[f"top{k}_pct" for k in ks]])
        for cls in classes:
            total = reports[0].per_class.get(cls, (0, 0))[1]
            row = [cls, total]
            for r in reports:
                rate = r.class_rate(cls)
                row.append(fmt_pct(None if rate is None else 100.0 * rate))
            writer.writerow(row)
        row = ["all", reports[0].total]
        for r in reports:
            row.append(fmt_pct(None if r.rate is None else 100.0 * r.rate))
        writer.writerow(row)


def write_topk_json(reports: Sequence[TopkReport], path) -> None:
    _write_json({
        "ks": [r.k for r in reports],
        "total_transfer_records": reports[0].total if reports else 0,
        "overall_hits": {str(r.k): r.hits for r in reports},
        "per_class": {
            str(cls): {str(r.k): list(r.per_class.get(cls, (0, 0))) for r in reports}
            for cls in sorted({c for r in reports for c in r.per_class})
        },
    }, path)


def write_collection_csv(rows: Sequence[CollectionReportRow], path, top_ks: Sequence[int] = (3, 5)) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hierarchy", "collection", "classes_in_collection", "source_images",
                         "adv_examples", "intra_count", "intra_pct",
                         *[f"top{k}_pct" for k in top_ks]])
        for row in rows:
            writer.writerow([row.path, row.name, row.classes_in_collection, row.source_images,
                             row.adv_examples, row.intra_count, fmt_pct(row.intra_pct),
                             *[fmt_pct(row.topk_pct(k)) for k in top_ks]])


def write_collection_json(rows: Sequence[CollectionReportRow], path) -> None:
    _write_json({"rows": [{
        "hierarchy": row.path,
        "collection": row.name,
        "classes_in_collection": row.classes_in_collection,
        "source_images": row.source_images,
        "adv_examples": row.adv_examples,
        "intra_count": row.intra_count,
        "topk_hits": {str(k): v for k, v in sorted(row.topk_hits.items())},
    } for row in rows]}, path)

"""Ingestion of externally transcribed score tables.

Summary tables arrive as the canonical long CSV plus a small sidecar mapping
each experiment id to its (pre-training, fine-tuning) dataset pair. Ingestion
validates the schema, recomputes every OOTD mean from the per-dataset cells,
and flags rows where the stored value disagrees beyond a tolerance. Stored
cells stay authoritative; the flag records the discrepancy.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import ValidationError
from .evaluation import ScoreTable, read_score_table, recompute_ootd_flags

OOTD_TOLERANCE = 0.002


def read_experiment_pairs(path) -> dict[str, tuple[str, str]]:
    """Sidecar CSV with header experiment,pt_data,ft_data."""
    pairs: dict[str, tuple[str, str]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != ("experiment", "pt_data", "ft_data"):
            raise ValidationError("experiment sidecar must have header experiment,pt_data,ft_data")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise ValidationError(f"row {lineno}: expected 3 fields")
            exp, pt, ft = (x.strip() for x in rec)
            if pt == ft:
                raise ValidationError(f"row {lineno}: pt and ft datasets must differ")
            pairs[exp] = (pt, ft)
    if not pairs:
        raise ValidationError("experiment sidecar has no rows")
    return pairs


def ingest_score_table(
    path, pairs: dict[str, tuple[str, str]], tolerance: float = OOTD_TOLERANCE
) -> tuple[ScoreTable, list[str]]:
    """Read and validate one score-table CSV.

    Returns the table and a list of human-readable discrepancy flags. Rows
    with |stored OOTD - recomputed OOTD| > tolerance carry an
    ``ootd-discrepancy`` flag; a missing OOTD cell is filled in.
    """
    table = read_score_table(path)
    for row in table.rows:
        if row.experiment_id not in pairs:
            raise ValidationError(
                f"{Path(str(path)).name}: experiment {row.experiment_id!r} missing from sidecar"
            )
        pt, _ = pairs[row.experiment_id]
        if pt in row.per_dataset:
            raise ValidationError(
                f"experiment {row.experiment_id} scheme {row.scheme}: contains a cell for the "
                f"pre-training dataset {pt!r}"
            )
    flags = recompute_ootd_flags(table, pairs, tolerance)
    return table, flags


def ingest_many(paths, pairs, tolerance: float = OOTD_TOLERANCE) -> tuple[ScoreTable, list[str]]:
    """Ingest several table files into one merged table."""
    merged_rows = []
    merged_flags: list[str] = []
    dataset_order: list[str] = []
    for p in paths:
        table, flags = ingest_score_table(p, pairs, tolerance)
        merged_rows.extend(table.rows)
        merged_flags.extend(flags)
        for n in table.dataset_order:
            if n not in dataset_order:
                dataset_order.append(n)
    return ScoreTable(merged_rows, tuple(dataset_order)), merged_flags

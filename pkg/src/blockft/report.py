"""Report emission: score tables, selection comparison, statistics summary.

All artifacts are plain CSV/JSON with fixed ordering and no timestamps, so
regenerating a report from the same inputs is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .analysis import analysis_report
from .errors import ValidationError
from .evaluation import OOTD_COLUMN, ScoreTable, write_score_table
from .selection import ENCODER_RESTRICTED, LITERAL_ARGMAX

WIDE_FILE = "score_table_wide.csv"
LONG_FILE = "score_table.csv"
SELECTION_FILE = "selection.csv"
STATS_FILE = "stats.json"


def _cell_text(cell) -> str:
    return f"{cell.mean:.3f} ± {cell.std:.4f}"


def render_wide_table(table: ScoreTable, pairs: dict[str, tuple[str, str]]) -> str:
    """One row per (experiment, scheme) with per-dataset `mean ± std` cells."""
    datasets = list(table.dataset_order)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "pt_data", "ft_data", "scheme", *datasets, OOTD_COLUMN])
    for row in table.sorted_rows():
        if row.experiment_id not in pairs:
            raise ValidationError(f"no pt/ft pair for experiment {row.experiment_id!r}")
        pt, ft = pairs[row.experiment_id]
        cells = []
        for ds in datasets:
            if ds in row.per_dataset:
                cells.append(_cell_text(row.per_dataset[ds]))
            else:
                cells.append("---")
        ootd = _cell_text(row.ootd) if row.ootd is not None else "---"
        w.writerow([row.experiment_id, pt, ft, str(row.scheme), *cells, ootd])
    return buf.getvalue()


def render_selection_table(analysis: dict) -> str:
    """Chosen scheme vs full-model fine-tuning, one row per (experiment, policy)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        [
            "experiment", "policy", "chosen_scheme", "ft_mean",
            "ootd_mean", "ootd_std", "full_ootd_mean", "full_ootd_std",
            "beats_full", "policy_divergence",
        ]
    )
    for exp in sorted(analysis["experiments"]):
        block = analysis["experiments"][exp]["selection"]
        for policy in (ENCODER_RESTRICTED, LITERAL_ARGMAX):
            sel = block[policy]
            w.writerow(
                [
                    exp, policy, sel["chosen_scheme"], f"{sel['ft_score'][0]:.3f}",
                    f"{sel['ootd'][0]:.3f}", f"{sel['ootd'][1]:.4f}",
                    f"{sel['full_ootd'][0]:.3f}", f"{sel['full_ootd'][1]:.4f}",
                    str(sel["beats_full"]).lower(), str(sel["policy_divergence"]).lower(),
                ]
            )
    return buf.getvalue()


def emit_report(
    table: ScoreTable,
    pairs: dict[str, tuple[str, str]],
    out_dir,
    analysis: dict | None = None,
) -> dict[str, str]:
    """Write the full report set into ``out_dir``; returns artifact paths."""
    if not table.rows:
        raise ValidationError("cannot emit a report for an empty score table")
    if analysis is None:
        analysis = analysis_report(table, pairs)
    if "experiments" not in analysis:
        raise ValidationError(f"analysis is not usable for a report: {analysis}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = {
        "long": out_dir / LONG_FILE,
        "wide": out_dir / WIDE_FILE,
        "selection": out_dir / SELECTION_FILE,
        "stats": out_dir / STATS_FILE,
    }
    write_score_table(table, paths["long"])
    paths["wide"].write_text(render_wide_table(table, pairs))
    paths["selection"].write_text(render_selection_table(analysis))
    with open(paths["stats"], "w") as f:
        json.dump(analysis, f, indent=2, sort_keys=True)
        f.write("\n")
    return {k: str(v) for k, v in paths.items()}

"""Dice scoring, multi-run aggregation and out-of-training-domain columns.

Conventions (the aggregate is sensitive to these, so they are pinned here):

* Per class c, DSC = 2|P & G| / (|P| + |G|) over pixel sets; a class absent
  from both prediction and ground truth in a frame contributes nothing.
* A frame's score is the mean over non-absent foreground classes; frames
  whose ground truth contains no foreground are skipped entirely.
* A dataset's score is the mean over its scored frames.
* The OOTD column of a row is the arithmetic mean over the datasets seen in
  neither pre-training nor fine-tuning. When per-run values exist its spread
  is the sample std over runs; for ingested summary tables it is the
  population spread (ddof=0) across the unseen datasets' means, which is the
  convention the reference tables follow.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .labels import LABEL_SPACE, FrameSample
from .schemes import SCHEMES, Scheme

OOTD_COLUMN = "OOTD"


def dice_per_class(pred: np.ndarray, gt: np.ndarray, c: int) -> float | None:
    """DSC of class ``c`` between two label grids, or None when the class is
    absent from both."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = pred == c
    g = gt == c
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return None
    return 2.0 * int((p & g).sum()) / denom


def frame_dice(pred: np.ndarray, gt: np.ndarray) -> float | None:
    """Mean DSC over non-absent foreground classes; None if the ground truth
    has no foreground."""
    gt = np.asarray(gt)
    if not (gt > 0).any():
        return None
    scores = []
    for c in range(1, LABEL_SPACE.n_classes):
        d = dice_per_class(pred, gt, c)
        if d is not None:
            scores.append(d)
    return float(np.mean(scores)) if scores else None


def dataset_dice(preds, gts) -> float:
    """Mean frame DSC over frames with foreground ground truth."""
    scores = []
    for p, g in zip(preds, gts):
        d = frame_dice(p, g)
        if d is not None:
            scores.append(d)
    if not scores:
        raise ValidationError("no frame in the set has foreground ground truth")
    return float(np.mean(scores))


def evaluate_checkpoint(checkpoint, test_samples: list[FrameSample], batch_size: int = 16) -> float:
    """Aggregate DSC of a segmentation checkpoint on a test set.

    Accepts a checkpoint record (see blockft.checkpoints) or any object with
    a ``predict(images) -> (N, H, W, C) probabilities`` method.
    """
    if not test_samples:
        raise ValidationError("test set is empty")
    model = checkpoint
    if not hasattr(model, "predict"):
        from .checkpoints import restore_model  # local import: keeps torch optional here

        model = restore_model(checkpoint)
    images = np.stack([s.image for s in test_samples])
    preds = []
    for i in range(0, len(images), batch_size):
        probs = model.predict(images[i : i + batch_size])
        preds.append(np.argmax(probs, axis=-1))
    pred_labels = np.concatenate(preds)
    return dataset_dice(pred_labels, [s.labels for s in test_samples])


@dataclass(frozen=True)
class ScoreCell:
    mean: float
    std: float
    n_runs: int

    def __post_init__(self):
        if math.isnan(self.mean) or not (0.0 <= self.mean <= 1.0):
            raise ValidationError(f"mean DSC {self.mean} outside [0, 1]")
        if self.std < 0:
            raise ValidationError("std must be >= 0")
        if self.n_runs < 1:
            raise ValidationError("n_runs must be >= 1")


def aggregate_runs(values) -> ScoreCell:
    """Mean and sample std (n-1 denominator; 0 for a single value)."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValidationError("cannot aggregate an empty list of run scores")
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return ScoreCell(mean, std, len(vals))


@dataclass
class ScoreRow:
    """Scores of one (experiment, scheme) across evaluation datasets."""

    experiment_id: str
    scheme: Scheme
    per_dataset: dict[str, ScoreCell]
    ootd: ScoreCell | None = None
    run_ootd: tuple[float, ...] | None = None  # per-run OOTD values, live runs only
    flags: list[str] = field(default_factory=list)

    def require_cell(self, dataset: str) -> ScoreCell:
        if dataset not in self.per_dataset:
            raise ValidationError(
                f"experiment {self.experiment_id} scheme {self.scheme} has no cell for {dataset!r}"
            )
        return self.per_dataset[dataset]


def compute_ootd(
    row: ScoreRow,
    pt_name: str,
    ft_name: str,
    all_dataset_names,
) -> ScoreCell:
    """Arithmetic mean over the unseen datasets' cells.

    Requires a cell for every dataset except the pre-training one. The std is
    taken over per-run OOTD values when the row carries them, else over the
    unseen datasets' means (population convention, see module docstring).
    """
    unseen = [n for n in all_dataset_names if n not in (pt_name, ft_name)]
    if not unseen:
        raise ValidationError("no unseen datasets to average over")
    if pt_name in row.per_dataset:
        raise ValidationError(f"row contains a cell for the pre-training dataset {pt_name!r}")
    means = [row.require_cell(n).mean for n in unseen]
    mean = float(np.mean(means))
    if row.run_ootd:
        std = float(np.std(row.run_ootd, ddof=1)) if len(row.run_ootd) > 1 else 0.0
        n = len(row.run_ootd)
    else:
        std = float(np.std(means, ddof=0))
        n = min(row.per_dataset[n_].n_runs for n_ in unseen)
    return ScoreCell(mean, std, n)


@dataclass
class ScoreTable:
    """Rows for one or more experiments, one row per (experiment, scheme)."""

    rows: list[ScoreRow]
    dataset_order: tuple[str, ...] = ()

    def experiments(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.experiment_id not in seen:
                seen.append(r.experiment_id)
        return seen

    def row(self, experiment_id: str, scheme: Scheme) -> ScoreRow:
        for r in self.rows:
            if r.experiment_id == experiment_id and r.scheme == scheme:
                return r
        raise ValidationError(f"no row for experiment {experiment_id!r} scheme {scheme}")

    def experiment_rows(self, experiment_id: str) -> list[ScoreRow]:
        rows = [r for r in self.rows if r.experiment_id == experiment_id]
        if not rows:
            raise ValidationError(f"unknown experiment {experiment_id!r}")
        return rows

    def validate_complete(self, experiment_id: str):
        present = {str(r.scheme) for r in self.experiment_rows(experiment_id)}
        missing = [str(s) for s in SCHEMES if str(s) not in present]
        if missing:
            raise ValidationError(
                f"experiment {experiment_id!r} is missing scheme rows: {', '.join(missing)}"
            )

    def sorted_rows(self) -> list[ScoreRow]:
        scheme_pos = {str(s): i for i, s in enumerate(SCHEMES)}
        return sorted(self.rows, key=lambda r: (r.experiment_id, scheme_pos[str(r.scheme)]))


CSV_HEADER = ("experiment", "scheme", "dataset", "mean", "std", "n_runs")


def _fmt(x: float) -> str:
    return repr(round(float(x), 12))


def write_score_table(table: ScoreTable, path=None) -> str:
    """Serialize to the canonical long CSV; returns the text, optionally
    writing it to ``path``. Output is byte-deterministic for a given table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    names = list(table.dataset_order)
    for row in table.sorted_rows():
        datasets = [n for n in names if n in row.per_dataset]
        datasets += [n for n in sorted(row.per_dataset) if n not in datasets]
        for ds in datasets:
            c = row.per_dataset[ds]
            w.writerow([row.experiment_id, str(row.scheme), ds, _fmt(c.mean), _fmt(c.std), c.n_runs])
        if row.ootd is not None:
            c = row.ootd
            w.writerow(
                [row.experiment_id, str(row.scheme), OOTD_COLUMN, _fmt(c.mean), _fmt(c.std), c.n_runs]
            )
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text


def read_score_table(path_or_text) -> ScoreTable:
    """Parse the canonical long CSV (path or raw text)."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text, newline="") as f:
            text = f.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise ValidationError("empty score table file") from None
    if header != CSV_HEADER:
        raise ValidationError(f"bad header {header!r}, expected {CSV_HEADER!r}")
    cells: dict[tuple[str, str], dict[str, ScoreCell]] = {}
    ootd: dict[tuple[str, str], ScoreCell] = {}
    dataset_order: list[str] = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 6:
            raise ValidationError(f"row {lineno}: expected 6 fields, got {len(rec)}")
        exp, scheme_s, ds, mean_s, std_s, n_s = rec
        try:
            cell = ScoreCell(float(mean_s), float(std_s), int(n_s))
        except (ValueError, ValidationError) as e:
            raise ValidationError(f"row {lineno}: {e}") from None
        Scheme.parse(scheme_s)
        key = (exp, scheme_s)
        if ds == OOTD_COLUMN:
            ootd[key] = cell
        else:
            cells.setdefault(key, {})[ds] = cell
            if ds not in dataset_order:
                dataset_order.append(ds)
    if not cells:
        raise ValidationError("score table has no data rows")
    rows = [
        ScoreRow(exp, Scheme.parse(scheme_s), per_ds, ootd.get((exp, scheme_s)))
        for (exp, scheme_s), per_ds in cells.items()
    ]
    return ScoreTable(rows, tuple(dataset_order))


def tables_equal(a: ScoreTable, b: ScoreTable) -> bool:
    return write_score_table(a) == write_score_table(b)


def recompute_ootd_flags(
    table: ScoreTable, pairs: dict[str, tuple[str, str]], tolerance: float = 0.002
) -> list[str]:
    """Recompute each row's OOTD from its per-dataset cells and flag rows where
    the stored OOTD mean differs by more than ``tolerance``.

    ``pairs`` maps experiment id -> (pt_dataset, ft_dataset). Flags are also
    attached to the rows; the stored (printed) cells are left authoritative.
    """
    all_names = list(table.dataset_order)
    flags = []
    for row in table.rows:
        if row.experiment_id not in pairs:
            raise ValidationError(f"no pt/ft pair registered for experiment {row.experiment_id!r}")
        pt, ft = pairs[row.experiment_id]
        names = [n for n in all_names if n != pt]
        recomputed = compute_ootd(row, pt, ft, names)
        if row.ootd is None:
            row.ootd = recomputed
            continue
        if abs(recomputed.mean - row.ootd.mean) > tolerance:
            msg = (
                f"experiment {row.experiment_id} scheme {row.scheme}: stored OOTD "
                f"{row.ootd.mean:.3f} vs recomputed {recomputed.mean:.3f}"
            )
            row.flags.append("ootd-discrepancy")
            flags.append(msg)
    return flags


def pseudo_runs(row: ScoreRow, pt_name: str, ft_name: str, all_dataset_names) -> tuple[float, ...]:
    """Three synthetic per-run OOTD values for a summary-only row.

    Real runs are unavailable for ingested tables, so the row is expanded into
    run values {m - j, m, m + j} around the recomputed OOTD mean m, where the
    jitter j is the mean of the unseen cells' stds scaled by sqrt(3/2) so that
    the population std (ddof=0, the convention the summary tables use) of the
    triple equals that mean std.
    """
    if row.run_ootd:
        return row.run_ootd
    unseen = [n for n in all_dataset_names if n not in (pt_name, ft_name)]
    if not unseen:
        raise ValidationError("no unseen datasets")
    means = [row.require_cell(n).mean for n in unseen]
    stds = [row.require_cell(n).std for n in unseen]
    m = float(np.mean(means))
    j = float(np.mean(stds)) * math.sqrt(1.5)
    return (m - j, m, m + j)


def row_with_ootd(row: ScoreRow, cell: ScoreCell) -> ScoreRow:
    return replace(row, ootd=cell)

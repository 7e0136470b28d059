"""Best-fit-line figures: OOTD score against fine-tuned block count.

Two figures per table: encoder side (depths 1..5) and decoder side
(subsequence lengths 1..4), one fitted line per experiment with the slope and
its p-value in the legend. Rendering is headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis import DECODER_LENGTHS, ENCODER_DEPTHS, ootd_depth_points
from .errors import ValidationError
from .evaluation import ScoreTable
from .schemes import decoder_scheme, encoder_scheme
from .stats import ols_slope_test

FORMATS = ("png", "svg")


def _side_figure(table, pairs, side, xs, path_base, formats):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    fits = {}
    for exp in table.experiments():
        pt, ft = pairs[exp]
        points = ootd_depth_points(table, exp, pt, ft, side)
        fit = ols_slope_test(points)
        fits[exp] = fit
        if side == "encoder":
            means = [table.row(exp, encoder_scheme(k)).ootd.mean for k in xs]
        else:
            means = [table.row(exp, decoder_scheme(5 - length)).ootd.mean for length in xs]
        (line,) = ax.plot(
            xs,
            [fit.intercept + fit.slope * x for x in xs],
            label=f"exp {exp}: slope={fit.slope:+.3f}, p={fit.slope_p_value:.3f}",
        )
        ax.scatter(xs, means, color=line.get_color(), s=22, zorder=3)
    ax.set_xlabel(f"{side} blocks fine-tuned")
    ax.set_ylabel("OOTD score (mean DSC over unseen datasets)")
    ax.set_xticks(list(xs))
    ax.set_title(f"OOTD vs {side} fine-tuning depth")
    ax.legend(fontsize=8)
    fig.tight_layout()
    written = []
    for fmt in formats:
        out = Path(f"{path_base}.{fmt}")
        fig.savefig(out, metadata={"Date": None} if fmt == "svg" else None)
        written.append(str(out))
    plt.close(fig)
    return fits, written


def emit_plots(
    table: ScoreTable,
    pairs: dict[str, tuple[str, str]],
    out_dir,
    formats=FORMATS,
) -> dict:
    """Render both figures; returns fit metadata and written paths."""
    for row in table.rows:
        if row.ootd is None:
            raise ValidationError(f"row {row.experiment_id}/{row.scheme} is missing its OOTD cell")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    enc_fits, enc_paths = _side_figure(
        table, pairs, "encoder", ENCODER_DEPTHS, out_dir / "encoder_ootd", formats
    )
    dec_fits, dec_paths = _side_figure(
        table, pairs, "decoder", DECODER_LENGTHS, out_dir / "decoder_ootd", formats
    )
    return {
        "encoder": {"fits": enc_fits, "paths": enc_paths},
        "decoder": {"fits": dec_fits, "paths": dec_paths},
    }

import csv
import json
from pathlib import Path

import pytest

from blockft.analysis import analysis_report, ootd_depth_points
from blockft.errors import ValidationError
from blockft.evaluation import pseudo_runs
from blockft.plots import emit_plots
from blockft.report import emit_report, render_selection_table, render_wide_table
from blockft.schemes import Scheme

ALPHA = 0.05

# published analysis targets for the reference tables
ENCODER_P = {"1": 0.008, "2": 0.001, "3": 0.017, "4": 0.158}
DECODER_P = {"1": 0.001, "2": 0.011, "3": 0.001, "4": 0.007}


class TestPseudoRuns:
    def test_three_runs_centered_on_recomputed_mean(self, reference_table, experiment_pairs):
        table, _ = reference_table
        row = table.row("2", Scheme.parse("e-5"))
        runs = pseudo_runs(row, *experiment_pairs["2"], table.dataset_order)
        assert len(runs) == 3
        import numpy as np

        assert np.mean(runs) == pytest.approx((0.605 + 0.673 + 0.596) / 3)
        # the triple's population std equals the mean of the unseen cells' stds
        assert np.std(runs, ddof=0) == pytest.approx((0.0034 + 0.0001 + 0.0001) / 3)

    def test_real_runs_pass_through(self, reference_table, experiment_pairs):
        from blockft.evaluation import ScoreCell, ScoreRow

        row = ScoreRow("x", Scheme.parse("e-1"), {"b": ScoreCell(0.5, 0, 1)},
                       run_ootd=(0.1, 0.2))
        assert pseudo_runs(row, "a", "b", ("a", "b", "c")) == (0.1, 0.2)


class TestReferenceAnalysis:
    def test_wilcoxon_mean_level_floor(self, reference_table, experiment_pairs):
        """Four mean-level pairs bound the one-sided exact p at 1/16."""
        table, _ = reference_table
        report = analysis_report(table, experiment_pairs)
        for exp in "234":
            wil = report["experiments"][exp]["wilcoxon_encoder_vs_decoder"]
            assert wil["p_value"] == 1 / 16
            assert wil["n"] == 4 and wil["exact"]
        assert report["experiments"]["1"]["wilcoxon_encoder_vs_decoder"]["p_value"] > 1 / 16

    def test_ols_verdicts_match_reference(self, reference_table, experiment_pairs):
        table, _ = reference_table
        report = analysis_report(table, experiment_pairs)
        for exp in "1234":
            enc = report["experiments"][exp]["ols_encoder"]
            dec = report["experiments"][exp]["ols_decoder"]
            assert enc["significant"] == (ENCODER_P[exp] < ALPHA)
            assert dec["significant"] == (DECODER_P[exp] < ALPHA)
        dec2 = report["experiments"]["2"]["ols_decoder"]
        assert dec2["ci95"][1] < 0  # negative relationship
        assert dec2["slope"] < 0

    def test_run_level_points_used_when_available(self):
        from blockft.evaluation import ScoreCell, ScoreRow, ScoreTable
        from blockft.schemes import SCHEMES

        rows = []
        for i, s in enumerate(SCHEMES):
            rows.append(ScoreRow("x", s, {"ft": ScoreCell(0.5, 0, 2), "u": ScoreCell(0.5, 0, 2)},
                                 ootd=ScoreCell(0.5, 0.0, 2), run_ootd=(0.4 + i * 0.01, 0.6)))
        table = ScoreTable(rows, ("ft", "u"))
        pts = ootd_depth_points(table, "x", "pt", "ft", "encoder")
        assert len(pts) == 10  # 5 depths x 2 runs

    def test_flags_propagate(self, reference_table, experiment_pairs):
        table, _ = reference_table
        report = analysis_report(table, experiment_pairs)
        assert any("ootd-discrepancy" in f for f in report["flags"])
        assert any("selection policies diverge" in f for f in report["flags"])


class TestReportEmission:
    def test_files_and_determinism(self, reference_table, experiment_pairs, tmp_path):
        table, _ = reference_table
        paths = emit_report(table, experiment_pairs, tmp_path)
        contents = {k: Path(p).read_bytes() for k, p in paths.items()}
        paths2 = emit_report(table, experiment_pairs, tmp_path)
        assert paths == paths2
        for k, p in paths2.items():
            assert Path(p).read_bytes() == contents[k]

    def test_wide_table_marks_pt_columns(self, reference_table, experiment_pairs):
        table, _ = reference_table
        text = render_wide_table(table, experiment_pairs)
        rows = list(csv.DictReader(text.splitlines()))
        assert len(rows) == 40
        exp1 = [r for r in rows if r["experiment"] == "1"]
        assert all(r["ph1-12"] == "---" for r in exp1)
        assert exp1[0]["h50"] == "0.499 ± 0.0003"
        assert exp1[0]["OOTD"] == "0.583 ± 0.0206"

    def test_selection_table_matches_reference(self, reference_table, experiment_pairs):
        table, _ = reference_table
        report = analysis_report(table, experiment_pairs)
        rows = list(csv.DictReader(render_selection_table(report).splitlines()))
        restricted = {r["experiment"]: r for r in rows if r["policy"] == "EncoderRestricted"}
        expected = {
            "1": ("d-1", "0.656", "0.612"),
            "2": ("e-5", "0.625", "0.328"),
            "3": ("e-5", "0.620", "0.393"),
            "4": ("e-5", "0.541", "0.403"),
        }
        for exp, (scheme, ootd, full) in expected.items():
            row = restricted[exp]
            assert row["chosen_scheme"] == scheme
            assert row["ootd_mean"] == ootd
            assert row["full_ootd_mean"] == full
            assert row["beats_full"] == "true"

    def test_stats_json_parses(self, reference_table, experiment_pairs, tmp_path):
        table, _ = reference_table
        paths = emit_report(table, experiment_pairs, tmp_path)
        payload = json.loads(Path(paths["stats"]).read_text())
        assert set(payload["experiments"]) == {"1", "2", "3", "4"}

    def test_error_analysis_rejected(self, reference_table, experiment_pairs, tmp_path):
        table, _ = reference_table
        with pytest.raises(ValidationError):
            emit_report(table, experiment_pairs, tmp_path, analysis={"error": "nope"})

    def test_empty_table_rejected(self, experiment_pairs, tmp_path):
        from blockft.evaluation import ScoreTable

        with pytest.raises(ValidationError, match="empty"):
            emit_report(ScoreTable([], ()), experiment_pairs, tmp_path)


class TestPlots:
    def test_figures_and_fit_directions(self, reference_table, experiment_pairs, tmp_path):
        table, _ = reference_table
        info = emit_plots(table, experiment_pairs, tmp_path)
        for side in ("encoder", "decoder"):
            for p in info[side]["paths"]:
                path = Path(p)
                assert path.exists() and path.stat().st_size > 0
            assert len(info[side]["fits"]) == 4  # one line per experiment
        enc_sig = [info["encoder"]["fits"][e].slope_p_value < ALPHA for e in "1234"]
        assert enc_sig == [True, True, True, False]
        assert info["decoder"]["fits"]["2"].slope < 0

    def test_png_and_svg_emitted(self, reference_table, experiment_pairs, tmp_path):
        table, _ = reference_table
        info = emit_plots(table, experiment_pairs, tmp_path)
        suffixes = {Path(p).suffix for p in info["encoder"]["paths"]}
        assert suffixes == {".png", ".svg"}

    def test_missing_ootd_rejected(self, tmp_path):
        from blockft.evaluation import ScoreCell, ScoreRow, ScoreTable

        row = ScoreRow("x", Scheme.parse("e-1"), {"a": ScoreCell(0.5, 0, 1)})
        with pytest.raises(ValidationError):
            emit_plots(ScoreTable([row], ("a",)), {"x": ("p", "a")}, tmp_path)

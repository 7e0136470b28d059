"""Per-experiment statistical analysis over a score table.

Three questions are answered per experiment: does the encoder side generalize
better than the decoder side (signed-rank test on matched-depth OOTD pairs),
does OOTD improve linearly with the number of fine-tuned blocks on each side
(OLS slope test), and which scheme does the selection rule pick. Live tables
carry per-run OOTD values and are analyzed at run level; ingested summary
tables are expanded into three pseudo-runs per row (see
``evaluation.pseudo_runs``) for the slope fits, while the paired signed-rank
test runs at mean level, where four pairs bound the one-sided p at 1/16.
"""

from __future__ import annotations

from .errors import DegenerateInputError, ValidationError
from .evaluation import ScoreTable, pseudo_runs
from .schemes import Scheme, decoder_scheme, encoder_scheme
from .selection import (
    ENCODER_RESTRICTED,
    LITERAL_ARGMAX,
    MEAN_LEVEL,
    RUN_LEVEL,
    SelectionResult,
    pair_encoder_decoder,
    select_model,
)
from .stats import OLSResult, WilcoxonResult, ols_slope_test, wilcoxon_signed_rank

ALPHA = 0.05

ENCODER_DEPTHS = tuple(range(1, 6))
DECODER_LENGTHS = tuple(range(1, 5))  # d-4 trains 1 block, ..., d-1 trains 4


def _has_run_level(table: ScoreTable, experiment_id: str) -> bool:
    return all(r.run_ootd for r in table.experiment_rows(experiment_id))


def _row_runs(table: ScoreTable, experiment_id: str, scheme: Scheme, pt: str, ft: str):
    row = table.row(experiment_id, scheme)
    if row.run_ootd:
        return row.run_ootd
    return pseudo_runs(row, pt, ft, table.dataset_order)


def ootd_depth_points(
    table: ScoreTable, experiment_id: str, pt: str, ft: str, side: str
) -> list[tuple[float, float]]:
    """(blocks fine-tuned, OOTD) sample for one side of one experiment."""
    points = []
    if side == "encoder":
        schemes = [(k, encoder_scheme(k)) for k in ENCODER_DEPTHS]
    elif side == "decoder":
        schemes = [(length, decoder_scheme(5 - length)) for length in DECODER_LENGTHS]
    else:
        raise ValidationError("side must be 'encoder' or 'decoder'")
    for x, scheme in schemes:
        for v in _row_runs(table, experiment_id, scheme, pt, ft):
            points.append((float(x), float(v)))
    return points


def encoder_decoder_wilcoxon(table: ScoreTable, experiment_id: str) -> WilcoxonResult:
    """One-sided signed-rank test that encoder OOTD exceeds decoder OOTD at
    matched depths; run level when available."""
    level = RUN_LEVEL if _has_run_level(table, experiment_id) else MEAN_LEVEL
    pairs = pair_encoder_decoder(table, experiment_id, level)
    diffs = [e - d for e, d in pairs]
    return wilcoxon_signed_rank(diffs, alternative="greater")


def experiment_analysis(
    table: ScoreTable, experiment_id: str, pt: str, ft: str
) -> dict:
    """Full statistics bundle for one experiment, JSON-serializable."""
    table.validate_complete(experiment_id)
    flags = [
        f"{experiment_id}/{r.scheme}: {fl}"
        for r in table.experiment_rows(experiment_id)
        for fl in r.flags
    ]
    try:
        wil_dict = _wilcoxon_dict(encoder_decoder_wilcoxon(table, experiment_id))
    except DegenerateInputError:
        wil_dict = {"statistic": None, "p_value": 1.0, "n": 0, "alternative": "greater",
                    "exact": True, "significant": False, "degenerate": True}
        flags.append(f"{experiment_id}: encoder/decoder OOTD pairs are all tied")
    ols_enc = ols_slope_test(ootd_depth_points(table, experiment_id, pt, ft, "encoder"))
    ols_dec = ols_slope_test(ootd_depth_points(table, experiment_id, pt, ft, "decoder"))
    sel_restricted = select_model(table, experiment_id, ft, ENCODER_RESTRICTED)
    sel_literal = select_model(table, experiment_id, ft, LITERAL_ARGMAX)
    if sel_restricted.policy_divergence:
        flags.append(f"{experiment_id}: selection policies diverge "
                     f"({sel_literal.chosen_scheme} vs {sel_restricted.chosen_scheme})")
    if ols_enc.degenerate_fit or ols_dec.degenerate_fit:
        flags.append(f"{experiment_id}: degenerate OLS fit")
    return {
        "experiment": experiment_id,
        "pt_data": pt,
        "ft_data": ft,
        "wilcoxon_encoder_vs_decoder": wil_dict,
        "ols_encoder": _ols_dict(ols_enc),
        "ols_decoder": _ols_dict(ols_dec),
        "selection": {
            ENCODER_RESTRICTED: _selection_dict(sel_restricted),
            LITERAL_ARGMAX: _selection_dict(sel_literal),
        },
        "mean_level_pairs": pair_encoder_decoder(table, experiment_id, MEAN_LEVEL),
        "flags": flags,
    }


def analysis_report(table: ScoreTable, pairs: dict[str, tuple[str, str]]) -> dict:
    """Analysis for every experiment in the table plus collected flags."""
    experiments = {}
    flags: list[str] = []
    for exp in table.experiments():
        if exp not in pairs:
            raise ValidationError(f"no pt/ft pair for experiment {exp!r}")
        pt, ft = pairs[exp]
        experiments[exp] = experiment_analysis(table, exp, pt, ft)
        flags.extend(experiments[exp]["flags"])
    return {"alpha": ALPHA, "experiments": experiments, "flags": flags}


def _wilcoxon_dict(r: WilcoxonResult) -> dict:
    return {
        "statistic": r.statistic,
        "p_value": r.p_value,
        "n": r.n,
        "alternative": r.alternative,
        "exact": r.exact,
        "significant": r.p_value < ALPHA,
    }


def _ols_dict(r: OLSResult) -> dict:
    return {
        "slope": r.slope,
        "intercept": r.intercept,
        "p_value": r.slope_p_value,
        "ci95": list(r.ci95),
        "n_points": r.n_points,
        "degenerate_fit": r.degenerate_fit,
        "significant": r.slope_p_value < ALPHA,
    }


def _selection_dict(s: SelectionResult) -> dict:
    return {
        "policy": s.policy,
        "chosen_scheme": str(s.chosen_scheme),
        "ft_score": [s.ft_score.mean, s.ft_score.std, s.ft_score.n_runs],
        "ootd": [s.ootd_score.mean, s.ootd_score.std, s.ootd_score.n_runs],
        "full_ootd": [s.full_model_ootd.mean, s.full_model_ootd.std, s.full_model_ootd.n_runs],
        "beats_full": s.ootd_score.mean > s.full_model_ootd.mean,
        "policy_divergence": s.policy_divergence,
        "flags": list(s.flags),
    }

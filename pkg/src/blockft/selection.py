"""Encoder/decoder pairing and the fine-tuned-model selection rule.

Selection treats the fine-tuning dataset's score as a stand-in for how well a
scheme will generalize to unseen data: the chosen model is the non-Full
scheme with the highest ft-data score. Two policies are shipped:

* ``LiteralArgmax``: argmax over all 9 contiguous schemes.
* ``EncoderRestricted``: when the encoder side dominates the decoder side
  (strictly higher OOTD in every matched-depth pair), the argmax is taken
  over encoder schemes only; otherwise it falls back to the literal rule.

The restricted policy reflects that decoder schemes can score high on the
ft-data while generalizing poorly; it only kicks in when the table itself
shows encoder dominance. Results always carry the Full row's OOTD for
comparison, and a divergence flag when the two policies disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError
from .evaluation import ScoreCell, ScoreRow, ScoreTable
from .schemes import FULL, NON_FULL_SCHEMES, PAIRED_DEPTHS, Scheme, scheme_order_key

MEAN_LEVEL = "mean"
RUN_LEVEL = "run"

LITERAL_ARGMAX = "LiteralArgmax"
ENCODER_RESTRICTED = "EncoderRestricted"

POLICIES = (LITERAL_ARGMAX, ENCODER_RESTRICTED)


@dataclass(frozen=True)
class SelectionResult:
    experiment_id: str
    policy: str
    chosen_scheme: Scheme
    ft_score: ScoreCell
    ootd_score: ScoreCell
    full_model_ootd: ScoreCell
    policy_divergence: bool = False
    flags: tuple[str, ...] = field(default=())


def _ootd_cell(row: ScoreRow) -> ScoreCell:
    if row.ootd is None:
        raise ValidationError(
            f"row {row.experiment_id}/{row.scheme} has no OOTD cell; derive it first"
        )
    return row.ootd


def pair_encoder_decoder(
    table: ScoreTable, experiment_id: str, level: str = MEAN_LEVEL
) -> list[tuple[float, float]]:
    """Matched-depth (encoder OOTD, decoder OOTD) pairs for one experiment.

    Depth-k encoder schemes pair with the decoder scheme of equal block count
    (e-1 with d-4, ..., e-4 with d-1); e-5, the bottleneck scheme, has no
    partner and is excluded. ``run`` level crosses the pairing with each run
    index and requires per-run OOTD values on the rows.
    """
    if level not in (MEAN_LEVEL, RUN_LEVEL):
        raise ValidationError(f"level must be '{MEAN_LEVEL}' or '{RUN_LEVEL}'")
    pairs = []
    for enc, dec in PAIRED_DEPTHS:
        enc_row = table.row(experiment_id, enc)
        dec_row = table.row(experiment_id, dec)
        if level == MEAN_LEVEL:
            pairs.append((_ootd_cell(enc_row).mean, _ootd_cell(dec_row).mean))
        else:
            if not enc_row.run_ootd or not dec_row.run_ootd:
                raise ValidationError(
                    f"run-level pairing requires per-run OOTD values on {enc} and {dec}"
                )
            if len(enc_row.run_ootd) != len(dec_row.run_ootd):
                raise ValidationError("encoder and decoder rows have different run counts")
            pairs.extend(zip(enc_row.run_ootd, dec_row.run_ootd))
    return pairs


def encoder_dominates(table: ScoreTable, experiment_id: str) -> bool:
    """True when every matched-depth pair has encoder OOTD strictly above the
    decoder's at mean level."""
    return all(e > d for e, d in pair_encoder_decoder(table, experiment_id, MEAN_LEVEL))


def _argmax_scheme(rows_by_scheme: dict[Scheme, ScoreRow], candidates, ft_dataset: str) -> Scheme:
    best: Scheme | None = None
    best_score = -1.0
    for s in candidates:
        score = rows_by_scheme[s].require_cell(ft_dataset).mean
        if score > best_score or (
            score == best_score and best is not None and scheme_order_key(s) < scheme_order_key(best)
        ):
            best, best_score = s, score
    assert best is not None
    return best


def select_model(
    table: ScoreTable, experiment_id: str, ft_dataset: str, policy: str = ENCODER_RESTRICTED
) -> SelectionResult:
    """Pick the contiguous-block scheme with the highest ft-data score.

    Full is never a candidate. Ties break toward fewer trainable blocks
    (encoder first at equal count). The result reports the chosen scheme's
    OOTD next to the Full row's OOTD.
    """
    if policy not in POLICIES:
        raise ValidationError(f"policy must be one of {POLICIES}")
    table.validate_complete(experiment_id)
    rows_by_scheme = {r.scheme: r for r in table.experiment_rows(experiment_id)}

    literal = _argmax_scheme(rows_by_scheme, NON_FULL_SCHEMES, ft_dataset)
    if encoder_dominates(table, experiment_id):
        restricted = _argmax_scheme(
            rows_by_scheme, [s for s in NON_FULL_SCHEMES if s.kind == "encoder"], ft_dataset
        )
    else:
        restricted = literal

    chosen = restricted if policy == ENCODER_RESTRICTED else literal
    divergence = literal != restricted
    flags = ("policy-divergence",) if divergence else ()
    chosen_row = rows_by_scheme[chosen]
    return SelectionResult(
        experiment_id=experiment_id,
        policy=policy,
        chosen_scheme=chosen,
        ft_score=chosen_row.require_cell(ft_dataset),
        ootd_score=_ootd_cell(chosen_row),
        full_model_ootd=_ootd_cell(rows_by_scheme[FULL]),
        policy_divergence=divergence,
        flags=flags,
    )

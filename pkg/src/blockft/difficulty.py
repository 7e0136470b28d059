"""Dataset-difficulty ranking via autoencoder reconstruction error.

A small convolutional autoencoder is trained on each dataset 5 times with
distinct seeds; the mean final-epoch reconstruction loss is the dataset's
difficulty score (statistically harder data reconstructs worse). Adjacent
datasets in the resulting order are compared with a one-sided rank-sum test
over the 5-vs-5 replicate errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .labels import FrameSample
from .stats import rank_sum_test
from .training import AutoencoderTrainConfig, train_autoencoder
from .unet import AutoencoderConfig

REPLICATES = 5
ALPHA = 0.05

FT_HARDER = "ft-harder"
FT_NOT_HARDER = "ft-not-harder"


@dataclass
class DifficultyReport:
    per_dataset: dict[str, tuple[float, float, int]]  # name -> (mean, std, n)
    values: dict[str, tuple[float, ...]]  # the raw replicate errors
    order: tuple[str, ...]  # easiest (lowest error) first
    pairwise: dict[str, float]  # "a<b" -> one-sided p that b is harder than a
    flags: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "per_dataset": {k: list(v) for k, v in self.per_dataset.items()},
            "values": {k: list(v) for k, v in self.values.items()},
            "order": list(self.order),
            "pairwise": self.pairwise,
            "flags": self.flags,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DifficultyReport":
        return cls(
            per_dataset={k: tuple(v) for k, v in d["per_dataset"].items()},
            values={k: tuple(v) for k, v in d["values"].items()},
            order=tuple(d["order"]),
            pairwise=dict(d["pairwise"]),
            flags=list(d.get("flags", [])),
        )


def rank_difficulty(reports: list[tuple[str, list[float]]]) -> DifficultyReport:
    """Order datasets by mean reconstruction error (ascending = easier).

    ``reports`` holds (dataset name, exactly 5 replicate error values). Each
    adjacent ordered pair gets a one-sided rank-sum p for "the harder one has
    higher error"; identical replicate sets are flagged as degenerate ties.
    """
    if len(reports) < 2:
        raise ValidationError("need at least 2 datasets to rank")
    seen = set()
    for name, values in reports:
        if len(values) != REPLICATES:
            raise ValidationError(
                f"dataset {name!r} has {len(values)} replicates, expected {REPLICATES}"
            )
        if name in seen:
            raise ValidationError(f"dataset {name!r} listed twice")
        seen.add(name)
    per_dataset = {}
    values = {}
    for name, vals in reports:
        vals = [float(v) for v in vals]
        per_dataset[name] = (float(np.mean(vals)), float(np.std(vals, ddof=1)), len(vals))
        values[name] = tuple(vals)
    order = tuple(sorted(per_dataset, key=lambda n: per_dataset[n][0]))
    pairwise = {}
    flags = []
    for easier, harder in zip(order, order[1:]):
        if values[easier] == values[harder]:
            pairwise[f"{easier}<{harder}"] = 1.0
            flags.append(f"degenerate-tie:{easier}={harder}")
            continue
        res = rank_sum_test(values[harder], values[easier], alternative="greater")
        pairwise[f"{easier}<{harder}"] = res.p_value
    return DifficultyReport(per_dataset, values, order, pairwise, flags)


@dataclass
class DifficultyJob:
    """5 replicate autoencoder trainings per dataset under one shared config."""

    datasets: dict[str, list[FrameSample]]
    ae_config: AutoencoderConfig
    train_config: AutoencoderTrainConfig = AutoencoderTrainConfig()
    base_seed: int = 0

    def __post_init__(self):
        if len(self.datasets) < 2:
            raise ValidationError("difficulty job needs at least 2 datasets")
        for name, frames in self.datasets.items():
            if not frames:
                raise ValidationError(f"dataset {name!r} has no frames")

    def seeds(self) -> tuple[int, ...]:
        return tuple(self.base_seed + i for i in range(REPLICATES))


def run_difficulty(job: DifficultyJob, report_path=None) -> DifficultyReport:
    """Train 5 autoencoders per dataset and rank the mean errors."""
    measured = []
    for name in sorted(job.datasets):
        errors = []
        for seed in job.seeds():
            cfg = AutoencoderTrainConfig(
                epochs=job.train_config.epochs,
                batch_size=job.train_config.batch_size,
                lr=job.train_config.lr,
                seed=seed,
            )
            _, err, _ = train_autoencoder(job.datasets[name], job.ae_config, cfg, dataset_name=name)
            errors.append(err)
        measured.append((name, errors))
    report = rank_difficulty(measured)
    if report_path is not None:
        path = Path(report_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(report.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    return report


def predict_tradeoff(report: DifficultyReport, pt_name: str, ft_name: str) -> dict:
    """Advise whether the fine-tuning data is statistically harder than the
    pre-training data.

    Returns ``ft-harder`` when mean_error(ft) > mean_error(pt) with one-sided
    rank-sum p < 0.05, else ``ft-not-harder``. In the harder case the selected
    scheme's ft-data score may trail full-model fine-tuning even while
    generalizing better.
    """
    for name in (pt_name, ft_name):
        if name not in report.per_dataset:
            raise ValidationError(f"dataset {name!r} not present in the difficulty report")
    flags = []
    if report.values[pt_name] == report.values[ft_name]:
        return {"verdict": FT_NOT_HARDER, "p_value": 1.0, "flags": ["degenerate-tie"]}
    res = rank_sum_test(report.values[ft_name], report.values[pt_name], alternative="greater")
    harder = (
        report.per_dataset[ft_name][0] > report.per_dataset[pt_name][0] and res.p_value < ALPHA
    )
    return {
        "verdict": FT_HARDER if harder else FT_NOT_HARDER,
        "p_value": res.p_value,
        "flags": flags,
    }

"""Declarative experiment execution.

One experiment fixes a (pre-training dataset, fine-tuning dataset) pair and
sweeps every contiguous fine-tuning scheme across ``n_runs`` seeds: one
pre-training per seed, shared by all ten fine-tunes of that seed. Every
fine-tuned model is scored on the fine-tuning dataset and on every other
registered dataset except the pre-training one; the unseen datasets' average
is the row's OOTD column.

Execution is resumable: each (scheme, seed) cell persists its scores under
the output directory and completed cells are skipped on rerun. A diverged
cell is recorded as failed without aborting the experiment; the bundle is
then marked partial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import analysis_report
from .checkpoints import load_checkpoint, save_checkpoint
from .datastore import DatasetBundle
from .errors import DivergedRunError, ValidationError
from .evaluation import ScoreCell, ScoreRow, ScoreTable, aggregate_runs, evaluate_checkpoint
from .schemes import SCHEMES, Scheme
from .training import TrainConfig, append_ledger, finetune, pretrain, with_seed
from .unet import UNetConfig, build_unet


@dataclass
class ExperimentSpec:
    experiment_id: str
    pt_dataset: str
    ft_dataset: str
    schemes: tuple[Scheme, ...] = SCHEMES
    n_runs: int = 3
    seeds: tuple[int, ...] = ()
    train_config: TrainConfig = field(default_factory=TrainConfig)
    model_config: UNetConfig = field(default_factory=UNetConfig)

    def __post_init__(self):
        if self.pt_dataset == self.ft_dataset:
            raise ValidationError("pt and ft datasets must differ")
        if not self.schemes:
            raise ValidationError("schemes list is empty")
        if not self.seeds:
            self.seeds = tuple(self.train_config.seed + i for i in range(self.n_runs))
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(self.seeds) != self.n_runs:
            raise ValidationError(f"need {self.n_runs} seeds, got {len(self.seeds)}")

    def eval_datasets(self, registered: list[str]) -> list[str]:
        out = [n for n in registered if n != self.pt_dataset]
        if self.ft_dataset not in out:
            raise ValidationError(f"ft dataset {self.ft_dataset!r} is not registered")
        return out

    def to_json_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "pt_dataset": self.pt_dataset,
            "ft_dataset": self.ft_dataset,
            "schemes": [str(s) for s in self.schemes],
            "n_runs": self.n_runs,
            "seeds": list(self.seeds),
            "train_config": self.train_config.to_json_dict(),
            "model_config": self.model_config.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(
            experiment_id=str(d["experiment_id"]),
            pt_dataset=d["pt_dataset"],
            ft_dataset=d["ft_dataset"],
            schemes=tuple(Scheme.parse(s) for s in d.get("schemes", [str(s) for s in SCHEMES])),
            n_runs=int(d.get("n_runs", 3)),
            seeds=tuple(d.get("seeds", ())),
            train_config=TrainConfig.from_json_dict(d.get("train_config", {})),
            model_config=UNetConfig.from_json_dict(
                d.get("model_config", UNetConfig().to_json_dict())
            ),
        )


@dataclass
class ResultsBundle:
    spec: ExperimentSpec
    table: ScoreTable
    analysis: dict
    ledger_path: str
    artifacts: dict[str, str]
    partial: bool = False
    new_train_runs: int = 0
    flags: list[str] = field(default_factory=list)


def _cell_path(out_dir: Path, scheme: Scheme, seed: int) -> Path:
    return out_dir / "cells" / f"{scheme}_s{seed}.json"


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def run_experiment(
    spec: ExperimentSpec, datasets: dict[str, DatasetBundle], out_dir
) -> ResultsBundle:
    """Execute (or resume) one experiment and assemble its results bundle."""
    for name in (spec.pt_dataset, spec.ft_dataset):
        if name not in datasets:
            raise ValidationError(f"dataset {name!r} is not registered")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger_path = out_dir / "ledger.jsonl"
    _write_json(out_dir / "spec.json", spec.to_json_dict())

    eval_names = spec.eval_datasets(list(datasets))
    unseen = [n for n in eval_names if n != spec.ft_dataset]
    if not unseen:
        raise ValidationError("need at least one unseen dataset for the OOTD column")
    pt_train = datasets[spec.pt_dataset].train
    ft_train = datasets[spec.ft_dataset].train

    new_runs = 0
    partial = False
    flags: list[str] = []

    pre_ckpts = {}
    for seed in spec.seeds:
        pre_path = out_dir / "checkpoints" / f"pretrain_s{seed}.pt"
        if pre_path.exists():
            pre_ckpts[seed] = load_checkpoint(pre_path)
            continue
        cfg = with_seed(spec.train_config, seed)
        model = build_unet(spec.model_config, seed=seed)
        ckpt, run = pretrain(model, pt_train, cfg, dataset_name=spec.pt_dataset)
        run.checkpoint_path = str(pre_path)
        save_checkpoint(ckpt, pre_path)
        append_ledger(ledger_path, run)
        new_runs += 1
        pre_ckpts[seed] = ckpt

    for scheme in spec.schemes:
        for seed in spec.seeds:
            cell_path = _cell_path(out_dir, scheme, seed)
            if cell_path.exists():
                continue
            cfg = with_seed(spec.train_config, seed)
            ft_path = out_dir / "checkpoints" / f"ft_{scheme}_s{seed}.pt"
            try:
                ckpt, run = finetune(
                    pre_ckpts[seed], scheme, ft_train, cfg, dataset_name=spec.ft_dataset
                )
            except DivergedRunError as e:
                _write_json(cell_path, {"status": "failed", "error": str(e), "epoch": e.epoch})
                flags.append(f"{spec.experiment_id}/{scheme}/seed{seed}: diverged at epoch {e.epoch}")
                partial = True
                new_runs += 1
                continue
            run.checkpoint_path = str(ft_path)
            save_checkpoint(ckpt, ft_path)
            append_ledger(ledger_path, run)
            new_runs += 1
            scores = {
                name: evaluate_checkpoint(ckpt, datasets[name].test) for name in eval_names
            }
            _write_json(
                cell_path, {"status": "ok", "scores": scores, "run_id": run.run_id, "seed": seed}
            )

    rows = []
    for scheme in spec.schemes:
        per_run: list[dict[str, float]] = []
        for seed in spec.seeds:
            cell_path = _cell_path(out_dir, scheme, seed)
            with open(cell_path) as f:
                cell = json.load(f)
            if cell.get("status") == "ok":
                per_run.append(cell["scores"])
        if not per_run:
            flags.append(f"{spec.experiment_id}/{scheme}: no completed runs")
            continue
        row_flags = []
        if len(per_run) < len(spec.seeds):
            row_flags.append("incomplete")
        per_dataset = {
            name: aggregate_runs([r[name] for r in per_run]) for name in eval_names
        }
        run_ootd = tuple(float(np.mean([r[n] for n in unseen])) for r in per_run)
        ootd = ScoreCell(
            float(np.mean(run_ootd)),
            float(np.std(run_ootd, ddof=1)) if len(run_ootd) > 1 else 0.0,
            len(run_ootd),
        )
        rows.append(
            ScoreRow(spec.experiment_id, scheme, per_dataset, ootd, run_ootd, row_flags)
        )
    table = ScoreTable(rows, tuple(eval_names))

    try:
        analysis = analysis_report(table, {spec.experiment_id: (spec.pt_dataset, spec.ft_dataset)})
    except ValidationError as e:
        # an intentionally restricted scheme sweep has no complete table to
        # analyze; that is not a failure of the runs themselves
        analysis = {"error": str(e)}
        flags.append(f"analysis skipped: {e}")

    from .evaluation import write_score_table

    table_path = out_dir / "score_table.csv"
    write_score_table(table, table_path)
    analysis_path = out_dir / "analysis.json"
    _write_json(analysis_path, analysis)

    return ResultsBundle(
        spec=spec,
        table=table,
        analysis=analysis,
        ledger_path=str(ledger_path),
        artifacts={"score_table": str(table_path), "analysis": str(analysis_path)},
        partial=partial,
        new_train_runs=new_runs,
        flags=flags,
    )

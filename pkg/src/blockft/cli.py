"""Command-line interface.

Exit codes: 0 success, 1 validation/usage error, 2 completed with partial
results (some cells failed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ValidationError

DESK_PRESET = {
    "image_size": (64, 64),
    "counts": {"h50": (40, 12), "ph1-12": (40, 12), "ph1-22": (40, 12),
               "ph2-12": (30, 12), "p12": (30, 12)},
}
FULL_PRESET = {
    "image_size": (256, 256),
    "counts": {"h50": (500, 150), "ph1-12": (600, 150), "ph1-22": (558, 150),
               "ph2-12": (150, 150), "p12": (120, 150)},
}


def _load_train_config(args) -> "TrainConfig":
    from .training import TrainConfig

    payload = {}
    if getattr(args, "train_config", None):
        with open(args.train_config) as f:
            payload = json.load(f)
    cfg = TrainConfig.from_json_dict(payload) if payload else TrainConfig()
    overrides = {}
    for flag, field_name in (
        ("seed", "seed"), ("epochs", None), ("batch_size", "batch_size"), ("lr", None),
    ):
        if getattr(args, flag, None) is not None:
            if flag == "epochs":
                overrides["epochs_pretrain"] = args.epochs
                overrides["epochs_finetune"] = args.epochs
            elif flag == "lr":
                overrides["lr_pretrain"] = args.lr
                overrides["lr_finetune"] = args.lr
            else:
                overrides[field_name] = getattr(args, flag)
    if overrides:
        d = cfg.to_json_dict()
        d.update(overrides)
        cfg = TrainConfig.from_json_dict(d)
    return cfg


def cmd_generate_data(args) -> int:
    from .datastore import save_dataset
    from .phantom import ROLE_PRESETS, make_role_dataset

    out = Path(args.out)
    if args.config:
        with open(args.config) as f:
            entries = json.load(f)
    else:
        preset = DESK_PRESET if args.preset == "desk" else FULL_PRESET
        entries = [
            {"role": role, "n_train": nt, "n_test": ne,
             "image_size": list(preset["image_size"]), "seed": 100 + i}
            for i, (role, (nt, ne)) in enumerate(preset["counts"].items())
        ]
    for entry in entries:
        role = entry["role"]
        if role not in ROLE_PRESETS:
            raise ValidationError(f"unknown role {role!r}")
        bundle = make_role_dataset(
            role,
            n_train=int(entry["n_train"]),
            n_test=int(entry["n_test"]),
            image_size=tuple(entry.get("image_size", (64, 64))),
            seed=int(entry.get("seed", 0)),
            name=entry.get("name"),
        )
        path = save_dataset(out / bundle.name, bundle.descriptor, bundle.train, bundle.test)
        print(f"wrote {path} ({bundle.descriptor.n_train} train / {bundle.descriptor.n_test} test)")
    return 0


def cmd_pretrain(args) -> int:
    from .checkpoints import save_checkpoint
    from .datastore import load_dataset
    from .training import append_ledger, pretrain
    from .unet import UNetConfig, build_unet

    bundle = load_dataset(args.dataset)
    cfg = _load_train_config(args)
    h, w = bundle.train[0].shape if bundle.train else (64, 64)
    model_cfg = UNetConfig(input_size=(h, w), base_channels=args.base_channels)
    model = build_unet(model_cfg, seed=cfg.seed)
    ckpt, run = pretrain(model, bundle.train, cfg, dataset_name=bundle.name)
    run.checkpoint_path = str(args.out)
    save_checkpoint(ckpt, args.out)
    if args.ledger:
        append_ledger(args.ledger, run)
    print(json.dumps({"checkpoint": str(args.out), "final_loss": run.final_loss,
                      "epochs": len(run.epoch_losses)}))
    return 0


def cmd_finetune(args) -> int:
    from .checkpoints import load_checkpoint, save_checkpoint
    from .datastore import load_dataset
    from .schemes import Scheme
    from .training import append_ledger, finetune

    bundle = load_dataset(args.dataset)
    cfg = _load_train_config(args)
    scheme = Scheme.parse(args.scheme)
    source = load_checkpoint(args.checkpoint)
    ckpt, run = finetune(source, scheme, bundle.train, cfg, dataset_name=bundle.name)
    run.checkpoint_path = str(args.out)
    save_checkpoint(ckpt, args.out)
    if args.ledger:
        append_ledger(args.ledger, run)
    print(json.dumps({"checkpoint": str(args.out), "scheme": str(scheme),
                      "final_loss": run.final_loss}))
    return 0


def cmd_evaluate(args) -> int:
    from .checkpoints import load_checkpoint
    from .datastore import load_dataset
    from .evaluation import evaluate_checkpoint

    bundle = load_dataset(args.dataset)
    frames = bundle.test if args.split == "test" else bundle.train
    dsc = evaluate_checkpoint(load_checkpoint(args.checkpoint), frames)
    print(json.dumps({"dataset": bundle.name, "split": args.split,
                      "n_frames": len(frames), "dsc": dsc}))
    return 0


def cmd_run_experiment(args) -> int:
    from .datastore import load_dataset_root
    from .experiment import ExperimentSpec, run_experiment
    from .plots import emit_plots
    from .report import emit_report

    if args.write_template:
        spec = ExperimentSpec(experiment_id="1", pt_dataset="ph1-12", ft_dataset="h50")
        with open(args.config, "w") as f:
            json.dump(spec.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"wrote template config to {args.config}")
        return 0
    with open(args.config) as f:
        spec = ExperimentSpec.from_json_dict(json.load(f))
    datasets = load_dataset_root(args.data)
    bundle = run_experiment(spec, datasets, args.out)
    pairs = {spec.experiment_id: (spec.pt_dataset, spec.ft_dataset)}
    if "error" not in bundle.analysis:
        report_paths = emit_report(bundle.table, pairs, args.out, bundle.analysis)
        plot_info = emit_plots(bundle.table, pairs, args.out)
        bundle.artifacts.update(report_paths)
        bundle.artifacts["figures"] = ", ".join(
            plot_info["encoder"]["paths"] + plot_info["decoder"]["paths"]
        )
    print(json.dumps({"partial": bundle.partial, "new_train_runs": bundle.new_train_runs,
                      "artifacts": bundle.artifacts, "flags": bundle.flags}, indent=2))
    return 2 if bundle.partial else 0


def cmd_ingest_tables(args) -> int:
    from .evaluation import write_score_table
    from .ingest import ingest_many, read_experiment_pairs

    pairs = read_experiment_pairs(args.experiments)
    table, flags = ingest_many(args.tables, pairs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_score_table(table, out / "score_table.csv")
    with open(out / "ingest_flags.json", "w") as f:
        json.dump({"flags": flags}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"ingested {len(table.rows)} rows from {len(args.tables)} file(s); "
          f"{len(flags)} discrepancy flag(s)")
    for fl in flags:
        print(f"  flag: {fl}")
    return 0


def _load_table_and_pairs(args):
    from .ingest import ingest_score_table, read_experiment_pairs

    pairs = read_experiment_pairs(args.experiments)
    table, flags = ingest_score_table(args.table, pairs)
    return table, pairs, flags


def cmd_select(args) -> int:
    from .analysis import _selection_dict
    from .selection import ENCODER_RESTRICTED, LITERAL_ARGMAX, select_model

    table, pairs, _ = _load_table_and_pairs(args)
    policy = ENCODER_RESTRICTED if args.policy == "encoder-restricted" else LITERAL_ARGMAX
    results = {}
    experiments = [args.experiment] if args.experiment else table.experiments()
    for exp in experiments:
        _, ft = pairs[exp]
        results[exp] = _selection_dict(select_model(table, exp, ft, policy))
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def cmd_stats(args) -> int:
    from .analysis import analysis_report

    table, pairs, flags = _load_table_and_pairs(args)
    report = analysis_report(table, pairs)
    report["ingest_flags"] = flags
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_difficulty(args) -> int:
    from .datastore import load_dataset_root
    from .difficulty import DifficultyJob, predict_tradeoff, run_difficulty
    from .training import AutoencoderTrainConfig
    from .unet import AutoencoderConfig

    datasets = load_dataset_root(args.data)
    missing = [n for n in args.datasets if n not in datasets]
    if missing:
        raise ValidationError(f"datasets not found under {args.data}: {missing}")
    frames = {n: datasets[n].train for n in args.datasets}
    h, w = next(iter(frames.values()))[0].shape
    job = DifficultyJob(
        datasets=frames,
        ae_config=AutoencoderConfig(input_size=(h, w)),
        train_config=AutoencoderTrainConfig(
            epochs=args.epochs, batch_size=args.batch_size, lr=args.lr
        ),
        base_seed=args.seed,
    )
    report = run_difficulty(job, report_path=args.out)
    payload = report.to_json_dict()
    if args.pt and args.ft:
        payload["tradeoff"] = predict_tradeoff(report, args.pt, args.ft)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    from .report import emit_report

    table, pairs, _ = _load_table_and_pairs(args)
    paths = emit_report(table, pairs, args.out)
    print(json.dumps(paths, indent=2, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    from .plots import emit_plots

    table, pairs, _ = _load_table_and_pairs(args)
    info = emit_plots(table, pairs, args.out, formats=tuple(args.formats.split(",")))
    print(json.dumps({"encoder": info["encoder"]["paths"],
                      "decoder": info["decoder"]["paths"]}, indent=2))
    return 0


def _add_train_flags(p):
    p.add_argument("--train-config", help="JSON file with training config fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--ledger", help="append run records to this JSON-lines file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockft",
        description="Contiguous-block fine-tuning experiments for encoder-decoder segmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="synthesize phantom datasets to disk")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--config", help="JSON list of dataset entries (overrides --preset)")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("pretrain", help="pre-train a segmentation model on one dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base-channels", dest="base_channels", type=int, default=8)
    _add_train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint under one scheme")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scheme", required=True, help="e-1..e-5, d-4..d-1 or Full")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="run or resume a declarative experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="root directory of dataset directories")
    p.add_argument("--out", help="experiment output directory")
    p.add_argument("--write-template", action="store_true",
                   help="write a default config to --config and exit")
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("ingest-tables", help="validate transcribed score tables")
    p.add_argument("tables", nargs="+")
    p.add_argument("--experiments", required=True, help="CSV: experiment,pt_data,ft_data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest_tables)

    p = sub.add_parser("select", help="apply the model-selection rule to a score table")
    p.add_argument("--table", required=True)
    p.add_argument("--experiments", required=True)
    p.add_argument("--experiment", help="limit to one experiment id")
    p.add_argument("--policy", choices=("encoder-restricted", "literal"),
                   default="encoder-restricted")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("stats", help="statistics summary for a score table")
    p.add_argument("--table", required=True)
    p.add_argument("--experiments", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("difficulty", help="autoencoder-based dataset difficulty ranking")
    p.add_argument("--data", required=True)
    p.add_argument("--datasets", nargs="+", required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pt", help="pre-training dataset for the trade-off advisory")
    p.add_argument("--ft", help="fine-tuning dataset for the trade-off advisory")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_difficulty)

    p = sub.add_parser("report", help="emit score/selection/statistics report files")
    p.add_argument("--table", required=True)
    p.add_argument("--experiments", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", help="emit the best-fit-line figures")
    p.add_argument("--table", required=True)
    p.add_argument("--experiments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--formats", default="png,svg")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run-experiment" and not args.write_template:
        if not args.data or not args.out:
            parser.error("run-experiment requires --data and --out")
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

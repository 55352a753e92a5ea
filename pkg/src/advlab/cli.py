"""Command-line front door.

Subcommands: train, attack, report, ingest, verify. Every command is
deterministic given (config, seed); exit codes are 0 on success, 1 on
validation problems, 2 on runtime/numeric failures. The ADVLAB_LOG env var
sets the logging level (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .accel import get_backend
from .config import ExperimentConfig, load_config
from .errors import (
    AdvlabError,
    ContractError,
    NumericError,
    TrainingDivergedError,
)
from .evaluation import (
    filter_commonly_correct,
    run_transfer_study,
    topk_misclassification,
    transfer_matrix,
    collection_report,
)
from .hierarchy import bundled_hierarchy_path, load_hierarchy
from .models import check_zoo_distinct, load_model, save_model, train
from .reportio import (
    export_prediction_log,
    ingest_prediction_log,
    write_collection_csv,
    write_collection_json,
    write_matrix_csv,
    write_matrix_json,
    write_topk_csv,
    write_topk_json,
)
from .rng import philox_rng
from .synthdata import hierarchical_gaussian
from . import verify as verify_mod

log = logging.getLogger("advlab")


class UsageError(ContractError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage problems are validation
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="advlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, help="seed override")

    p_train = sub.add_parser("train", help="train the model zoo and write checkpoints")
    common(p_train)

    p_attack = sub.add_parser("attack", help="run the transfer study and write the prediction log")
    common(p_attack)
    p_attack.add_argument("--attack", choices=["pgd", "cw", "both"], default="both")
    p_attack.add_argument("--mode", choices=["untargeted", "targeted"], default="untargeted")
    p_attack.add_argument("--jobs", type=int, default=1, help="parallel attack workers")
    p_attack.add_argument("--top-k", type=int, dest="top_k", help="captured clean top-K depth")

    p_report = sub.add_parser("report", help="compute matrices, top-K and collection reports from a log")
    p_report.add_argument("--log", required=True, help="prediction-log CSV")
    p_report.add_argument("--hierarchy", help="hierarchy JSON path, or bundled name (fixture, imagenet)")
    p_report.add_argument("--out", help="output directory")
    p_report.add_argument("--top-k", type=int, dest="top_k", default=5)
    p_report.add_argument("--sources", type=int, help="attempted sources per (model, attack) cell")
    p_report.add_argument("--include-self-transfer", action="store_true",
                          help="keep source==target records in top-K and collection reports")

    p_ingest = sub.add_parser("ingest", help="validate an external prediction log")
    p_ingest.add_argument("--log", required=True)
    p_ingest.add_argument("--out", help="write the normalized log back out")

    p_verify = sub.add_parser("verify", help="run gradient, attack-soundness and hierarchy self-checks")
    p_verify.add_argument("--seed", type=int, default=2024)
    p_verify.add_argument("--quick", action="store_true", help="smaller fuzz budgets")
    return parser


def _config_from(args) -> ExperimentConfig:
    overrides = {"out_dir": getattr(args, "out", None), "seed": getattr(args, "seed", None)}
    if getattr(args, "top_k", None) is not None:
        overrides["top_k"] = args.top_k
    return load_config(args.config, overrides)


def _train_dataset(cfg: ExperimentConfig):
    return hierarchical_gaussian(cfg.train_per_class, dim=cfg.dim, noise=cfg.noise,
                                 seed=cfg.seed, stream=1, id_prefix="train")


def _source_dataset(cfg: ExperimentConfig):
    return hierarchical_gaussian(cfg.source_per_class, dim=cfg.dim, noise=cfg.noise,
                                 seed=cfg.seed, stream=2, id_prefix="item")


def cmd_train(args) -> int:
    cfg = _config_from(args)
    out_dir = Path(cfg.out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    dataset = _train_dataset(cfg)
    summary = {}
    for spec in cfg.model_specs():
        try:
            model = train(spec, dataset, epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size)
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(exc.epoch, f"model {spec.name!r}: {exc}") from exc
        path = cfg.checkpoint_path(out_dir, spec.name)
        save_model(model, path)
        summary[spec.name] = model.final_train_accuracy
        print(f"trained {spec.name}: accuracy {model.final_train_accuracy:.3f} -> {path}")
    with open(out_dir / "train_summary.json", "w", encoding="utf-8") as fh:
        json.dump({"train_accuracy": summary}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def _load_zoo(cfg: ExperimentConfig, out_dir: Path):
    models = []
    for spec in cfg.model_specs():
        path = cfg.checkpoint_path(out_dir, spec.name)
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint {path}; run `advlab train` first")
        models.append(load_model(path))
    return models


def cmd_attack(args) -> int:
    cfg = _config_from(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    models = _load_zoo(cfg, out_dir)

    sources = _source_dataset(cfg)
    filtered = filter_commonly_correct(sources, models)
    print(f"filtered sources: {len(filtered)}/{len(sources)} classified correctly by all models")
    probe = philox_rng(cfg.seed, stream=3).uniform(0.0, 1.0, size=(256, cfg.dim))
    check_zoo_distinct(models, probe)

    target_rule = (lambda k, m: (k + 1) % m) if args.mode == "targeted" else None
    attacks = cfg.attack_configs(args.attack)
    records = run_transfer_study(filtered, models, attacks, top_k_depth=cfg.top_k,
                                 backend=get_backend(), target_rule=target_rule, jobs=args.jobs)

    log_path = out_dir / "prediction_log.csv"
    export_prediction_log(records, log_path)
    meta = {
        "sources_attempted": len(filtered),
        "source_class_counts": {str(it.true_class): 0 for it in filtered.items},
        "mode": args.mode,
    }
    for it in filtered.items:
        meta["source_class_counts"][str(it.true_class)] += 1
    with open(out_dir / "attack_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")

    for atk in attacks:
        name = atk.attack_name
        whitebox = {r.source_model: set() for r in records if r.attack == name}
        for r in records:
            if r.attack == name:
                whitebox[r.source_model].add(r.item_id)
        for model in models:
            n = len(whitebox.get(model.name, ()))
            pct = 100.0 * n / len(filtered) if len(filtered) else 0.0
            print(f"{name} on {model.name}: {n}/{len(filtered)} white-box successes ({pct:.1f}%)")
    print(f"wrote {log_path} ({len(records)} records)")
    return 0


def _resolve_hierarchy(arg: str | None):
    if arg in (None, "fixture", "imagenet"):
        return load_hierarchy(str(bundled_hierarchy_path(arg or "fixture")))
    return load_hierarchy(arg)


def cmd_report(args) -> int:
    records = ingest_prediction_log(args.log)
    tree = _resolve_hierarchy(args.hierarchy)
    out_dir = Path(args.out or "report")
    out_dir.mkdir(parents=True, exist_ok=True)

    meta_path = Path(args.log).parent / "attack_meta.json"
    attempted = args.sources
    source_counts = None
    if attempted is None and meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        attempted = int(meta.get("sources_attempted", 0)) or None
        source_counts = {int(k): v for k, v in meta.get("source_class_counts", {}).items()} or None

    if not records:
        log.warning("empty prediction log %s; matrices skipped, reports will hold zeros", args.log)
    attacks = sorted({r.attack for r in records})
    modes = ["untargeted"] + (["targeted"] if any(r.target_class is not None for r in records) else [])
    for attack in attacks:
        for mode in modes:
            m = transfer_matrix(records, attack, mode, attempted=attempted)
            stem = f"transfer_matrix_{attack.lower()}_{mode}"
            write_matrix_csv(m, out_dir / f"{stem}.csv")
            write_matrix_json(m, out_dir / f"{stem}.json")

    scoped = records if args.include_self_transfer else [
        r for r in records if r.source_model != r.target_model]
    ks = list(range(2, args.top_k + 1))
    topk_reports = [topk_misclassification(scoped, k) for k in ks]
    write_topk_csv(topk_reports, out_dir / "topk_misclassification.csv")
    write_topk_json(topk_reports, out_dir / "topk_misclassification.json")

    rows = collection_report(scoped, tree, "all", source_class_counts=source_counts, top_ks=(3, 5))
    write_collection_csv(rows, out_dir / "collection_report.csv", top_ks=(3, 5))
    write_collection_json(rows, out_dir / "collection_report.json")
    print(f"wrote reports for {len(records)} records ({', '.join(attacks)}) to {out_dir}")
    return 0


def cmd_ingest(args) -> int:
    records = ingest_prediction_log(args.log)
    attacks = sorted({r.attack for r in records})
    transfers = sum(1 for r in records if r.adv_pred != r.true_class)
    print(f"{args.log}: {len(records)} records, attacks: {', '.join(attacks) or 'none'}, "
          f"{transfers} untargeted successes")
    if args.out:
        export_prediction_log(records, args.out)
        print(f"normalized log written to {args.out}")
    return 0


def cmd_verify(args) -> int:
    budget = (20, 200, 20) if args.quick else (100, 1000, 100)
    checks = [
        ("gradient finite differences", verify_mod.gradient_check_suite(budget[0], seed=args.seed)),
        ("pgd ball + box soundness", verify_mod.pgd_soundness_suite(budget[1], seed=args.seed)),
        ("hierarchy properties", verify_mod.hierarchy_property_suite(budget[2], seed=args.seed)),
    ]
    failed = False
    for name, (ok, messages) in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {'; '.join(messages)}")
        failed = failed or not ok
    return 1 if failed else 0


_COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "report": cmd_report,
    "ingest": cmd_ingest,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    level = os.environ.get("ADVLAB_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AdvlabError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

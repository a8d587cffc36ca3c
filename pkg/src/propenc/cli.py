"""Command line interface: derive, split, train, eval, discover, neighbors.

Every command is deterministic given its inputs, configuration and seed;
reports embed the seed, a hash of the effective configuration and sha256
digests of the input files. Exit codes: 0 success, 2 usage or input
problems, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import yaml

from . import corpus, fixtures, metrics, modelio, pipeline, retrieval, splits, trainer
from .encoder import BiEncoder, EncoderConfig
from .errors import (
    DatasetError,
    DimensionError,
    IngestError,
    InputError,
    MetricError,
    TapeError,
    TrainingError,
)

DATA_DIR_ENV = "PROPENC_DATA_DIR"


def _resolve(path: str | None) -> str | None:
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(os.environ.get(DATA_DIR_ENV, "."), path)


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(_resolve(path), encoding="utf-8") as fh:
        loaded = yaml.safe_load(fh) or {}
    if not isinstance(loaded, dict):
        raise InputError(f"{path}: config file must be a key-value tree")
    return loaded


def _section(config: dict, name: str) -> dict:
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise InputError(f"config section {name!r} must be a mapping")
    return section


def _encoder_config(args, file_config: dict) -> EncoderConfig:
    merged = EncoderConfig().as_dict()
    merged.update(_section(file_config, "encoder"))
    overrides = {
        "dim": args.dim,
        "layers": args.layers,
        "ffn_dim": args.ffn_dim,
        "max_len": args.max_len,
        "pooling": args.pooling,
        "template": args.template,
        "concept_template": args.concept_template,
        "property_template": args.property_template,
        "init_std": args.init_std,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "no_attention", False):
        merged["use_attention"] = False
    return EncoderConfig.from_dict(merged)


def _train_config(args, file_config: dict) -> trainer.TrainConfig:
    merged = trainer.TrainConfig().as_dict()
    merged.update(_section(file_config, "train"))
    overrides = {
        "concepts_per_batch": args.batch_concepts,
        "learning_rate": args.lr,
        "weight_decay": args.weight_decay,
        "max_epochs": args.max_epochs,
        "patience": args.patience,
        "seed": args.seed,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return trainer.TrainConfig(**merged)


def _write_report(path: str | None, payload: dict) -> None:
    if not path:
        return
    with open(_resolve(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _provenance(inputs: dict[str, str], seed, config: dict) -> dict:
    return {
        "inputs": {name: _digest(path) for name, path in inputs.items() if path},
        "seed": seed,
        "config_hash": _config_hash(config),
    }


# ---------------------------------------------------------------------------
# commands


def cmd_derive(args) -> int:
    raw = _resolve(args.input)
    out = _resolve(args.output)
    exclude = corpus.PairDataset.read(_resolve(args.exclude)) if args.exclude else None
    if args.source == "mscg":
        with open(raw, encoding="utf-8") as fh:
            dataset, report = corpus.select_mscg(fh, args.top, exclude=exclude)
    elif args.source == "gkb":
        with open(raw, encoding="utf-8") as fh:
            dataset, report = corpus.derive_gkb(fh, args.top, max_len=args.max_len,
                                                exclude=exclude)
    else:  # prefix derives from an already-ingested hypernym pair file
        dataset = corpus.derive_prefix(corpus.PairDataset.read(raw))
        report = corpus.IngestReport(rows_read=0, emitted=len(dataset))
    dataset.write(out)
    inputs = {"input": raw}
    if args.exclude:
        inputs["exclude"] = _resolve(args.exclude)
    payload = {
        "command": f"derive {args.source}",
        **_provenance(inputs, None, {"top": args.top, "max_len": args.max_len}),
        "counters": report.as_dict(),
        "output": _digest(out),
    }
    _write_report(args.report, payload)
    print(
        f"derive {args.source}: emitted {report.emitted} pairs "
        f"(read {report.rows_read}, malformed {report.malformed}, "
        f"length-skipped {report.skipped_length}, pattern-skipped {report.skipped_pattern}, "
        f"excluded {report.excluded})"
    )
    return 0


def cmd_split(args) -> int:
    data = splits.LabelledDataset.read(_resolve(args.data))
    if args.regime == "con":
        fixed = splits.read_fixed_concept_split(_resolve(args.fixed)) if args.fixed else None
        plan = splits.build_con_split(
            data, seed=args.seed, fixed=fixed, test_fraction=args.test_fraction
        )
    elif args.regime == "prop":
        plan = splits.build_prop_split(data, folds=args.folds, seed=args.seed)
    else:
        plan = splits.build_con_prop_split(data, seed=args.seed)
    plan.check_invariants(data)
    plan.write(_resolve(args.output))
    print(f"split {args.regime}: {len(plan.folds)} fold(s) -> {args.output}")
    return 0


def cmd_train(args) -> int:
    file_config = _load_config_file(args.config)
    enc_cfg = _encoder_config(args, file_config)
    train_cfg = _train_config(args, file_config)
    train_path, val_path = _resolve(args.train), _resolve(args.val)
    data = corpus.PairDataset.read(train_path)
    val = corpus.PairDataset.read(val_path)
    result = trainer.train(data, val, train_cfg, encoder_config=enc_cfg)
    out = _resolve(args.output)
    modelio.save_model(out, result.model)
    if args.log:
        with open(_resolve(args.log), "w", encoding="utf-8", newline="\n") as fh:
            for record in result.log:
                fh.write(json.dumps(record.as_dict(), sort_keys=True) + "\n")
    config = {"encoder": enc_cfg.as_dict(), "train": train_cfg.as_dict()}
    payload = {
        "command": "train",
        **_provenance({"train": train_path, "val": val_path}, train_cfg.seed, config),
        "epochs_run": len(result.log),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "model": _digest(out),
    }
    _write_report(args.report, payload)
    print(
        f"train: {len(result.log)} epochs, best epoch {result.best_epoch} "
        f"(val loss {result.best_val_loss:.6f}) -> {args.output}"
    )
    return 0


def cmd_eval(args) -> int:
    file_config = _load_config_file(args.config)
    data = splits.LabelledDataset.read(_resolve(args.data))
    plan = splits.SplitPlan.read(_resolve(args.plan))
    inputs = {"data": _resolve(args.data), "plan": _resolve(args.plan)}
    seed = args.seed if args.seed is not None else 0
    config: dict = {"threshold": args.threshold}
    if args.baseline:
        method = (
            pipeline.method_always_true()
            if args.baseline == "always-true"
            else pipeline.method_random(seed)
        )
        scorer_name = f"baseline:{args.baseline}"
    elif args.embeddings:
        emb_path = _resolve(args.embeddings)
        inputs["embeddings"] = emb_path
        emb = modelio.read_any_embeddings(emb_path)
        method = pipeline.method_knn(emb, args.knn)
        scorer_name = f"knn:k={args.knn}"
        config["knn"] = args.knn
    elif args.model:
        model_path = _resolve(args.model)
        inputs["model"] = model_path
        model = modelio.load_model(model_path)
        if args.finetune:
            train_cfg = _train_config(args, file_config)
            config["train"] = train_cfg.as_dict()
            method = pipeline.method_finetune(train_cfg, base_model=model)
            scorer_name = "model:finetune"
        else:
            method = pipeline.method_model(model)
            scorer_name = "model:direct"
    else:
        raise InputError("eval needs one of --baseline, --embeddings or --model")
    report = pipeline.evaluate_plan(plan, data, method)
    payload = {
        "command": "eval",
        "scorer": scorer_name,
        **_provenance(inputs, seed, config),
        "results": report.as_dict(),
    }
    _write_report(args.output, payload)
    print(metrics.format_report(report))
    return 0


def _read_terms(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _read_gold(path: str) -> dict[str, set[str]]:
    gold: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise InputError(f"{path}:{lineno}: expected target<TAB>hypernym")
            gold.setdefault(corpus.normalize(fields[0]), set()).add(corpus.normalize(fields[1]))
    return gold


def cmd_discover(args) -> int:
    targets = [corpus.normalize(t) for t in _read_terms(_resolve(args.targets))]
    inputs = {"targets": _resolve(args.targets)}
    if args.model:
        model = modelio.load_model(_resolve(args.model))
        candidates = [corpus.normalize(t) for t in _read_terms(_resolve(args.candidates))]
        candidate_emb = retrieval.encode_matrix(model, candidates, "property")
        target_vec = {t: model.concept_vector(t) for t in targets}
        inputs.update({"model": _resolve(args.model), "candidates": _resolve(args.candidates)})
    else:
        candidate_emb = modelio.read_any_embeddings(_resolve(args.candidate_embeddings))
        target_emb = modelio.read_any_embeddings(_resolve(args.target_embeddings))
        missing = [t for t in targets if t not in target_emb]
        if missing:
            raise InputError(f"target embeddings missing {missing[:3]}...")
        target_vec = {t: target_emb.vector(t) for t in targets}
        inputs.update({
            "candidate_embeddings": _resolve(args.candidate_embeddings),
            "target_embeddings": _resolve(args.target_embeddings),
        })
    index = retrieval.MipsIndex(candidate_emb)
    ranked_lists = {}
    lines = []
    for t in targets:
        query = retrieval.Query(t, target_vec[t], k=args.k, filter_candidates=not args.no_filter)
        results = retrieval.discover_hypernyms(index, query)
        ranked_lists[t] = [label for label, _ in results]
        for rank, (label, score) in enumerate(results, start=1):
            lines.append(f"{t}\t{rank}\t{label}\t{score:.6f}")
    out = _resolve(args.output)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    payload = {
        "command": "discover",
        **_provenance(inputs, None, {"k": args.k, "filter": not args.no_filter}),
        "targets": len(targets),
        "output": _digest(out),
    }
    if args.gold:
        gold = _read_gold(_resolve(args.gold))
        scored = [
            metrics.RankedList(t, ranked_lists[t], gold[t]) for t in targets if t in gold
        ]
        if not scored:
            raise MetricError("no target has gold hypernyms")
        scores = metrics.map_mrr_p5(scored)
        payload["metrics"] = {
            "MAP": round(100 * scores.mean_average_precision, 4),
            "MRR": round(100 * scores.mean_reciprocal_rank, 4),
            "P@5": round(100 * scores.precision_at_5, 4),
            "scored_targets": len(scored),
        }
        print(
            f"discover: MAP {metrics.format_percent(scores.mean_average_precision)} "
            f"MRR {metrics.format_percent(scores.mean_reciprocal_rank)} "
            f"P@5 {metrics.format_percent(scores.precision_at_5)} "
            f"over {len(scored)} targets"
        )
    else:
        print(f"discover: wrote {len(lines)} candidate rows for {len(targets)} targets")
    _write_report(args.report, payload)
    return 0


def cmd_neighbors(args) -> int:
    model = modelio.load_model(_resolve(args.model))
    pairs = corpus.PairDataset.read(_resolve(args.pairs))
    results = retrieval.neighbour_report(
        model, pairs, corpus.normalize(args.concept), k=args.k, min_count=args.min_count
    )
    out_lines = [f"{label}\t{score:.6f}" for label, score in results]
    print("\n".join(out_lines))
    if args.output:
        with open(_resolve(args.output), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(out_lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--ffn-dim", type=int, dest="ffn_dim")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--pooling", choices=["mask", "mean"])
    p.add_argument("--template")
    p.add_argument("--concept-template", dest="concept_template")
    p.add_argument("--property-template", dest="property_template")
    p.add_argument("--init-std", type=float, dest="init_std")
    p.add_argument("--no-attention", action="store_true", dest="no_attention")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-concepts", type=int, dest="batch_concepts")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propenc",
        description="Bi-encoder concept/property modelling pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="derive a pair file from a raw corpus")
    p.add_argument("source", choices=["mscg", "prefix", "gkb"])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--top", type=int, default=100_000)
    p.add_argument("--max-len", type=int, default=7, dest="max_len")
    p.add_argument("--exclude", help="pair file whose pairs are skipped (validation builds)")
    p.add_argument("--report")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("split", help="build an evaluation split plan")
    p.add_argument("regime", choices=["con", "prop", "conprop"])
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixed", help="fixed concept assignment file (con regime)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--test-fraction", type=float, default=0.1, dest="test_fraction")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a bi-encoder on positive pairs")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--log")
    p.add_argument("--report")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    _add_encoder_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a scorer over a split plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="JSON report path")
    p.add_argument("--model")
    p.add_argument("--finetune", action="store_true")
    p.add_argument("--baseline", choices=["always-true", "random"])
    p.add_argument("--embeddings")
    p.add_argument("--knn", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("discover", help="rank hypernym candidates for target terms")
    p.add_argument("--targets", required=True)
    p.add_argument("--model")
    p.add_argument("--candidates", help="candidate vocabulary, one term per line")
    p.add_argument("--target-embeddings", dest="target_embeddings")
    p.add_argument("--candidate-embeddings", dest="candidate_embeddings")
    p.add_argument("--gold")
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--no-filter", action="store_true", dest="no_filter")
    p.add_argument("--output", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("neighbors", help="nearest properties of a concept")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--concept", required=True)
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--min-count", type=int, default=10, dest="min_count")
    p.add_argument("--output")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("fixtures", help="write the bundled synthetic fixtures")
    p.add_argument("--output", required=True)
    p.set_defaults(func=lambda a: (fixtures.write_all(_resolve(a.output)), 0)[1])

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "discover" and not args.model:
        if not (args.target_embeddings and args.candidate_embeddings):
            print("error: discover needs --model or both embedding files", file=sys.stderr)
            return 2
    if getattr(args, "command", None) == "discover" and args.model and not args.candidates:
        print("error: discover with --model needs --candidates", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (InputError, DatasetError, IngestError, MetricError, DimensionError,
            FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, TapeError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

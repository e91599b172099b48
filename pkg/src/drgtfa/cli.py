"""Command-line entry point.

Subcommands: convert, augment, challenge-set, train, generate, evaluate.
Every run writes ``config.json`` (the resolved options) into its output
directory; passing that file back with ``--config`` reruns the command.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from collections import Counter
from pathlib import Path

from .drg import LeviGraph
from .encoders import ConfigInvalid, EncoderConfig
from .metrics import DIRECTIONS, MissingJudgment, bleu, meteor_lite, read_judgments, rose_accuracy, voice_heuristic
from .pipeline import Instance, augment, convert
from .sbn import SbnError, load_corpus
from .seq2seq import ModelConfig, Seq2Seq, TrainConfig, tokenize, train
from .tfa import PAIR_ROLES, Strategy, Voice, build_challenge_set

logger = logging.getLogger("drgtfa")

STRATEGIES = ("none", *(s.value for s in Strategy))

REQUIRED = {
    "convert": ("out_dir", "manifest"),
    "augment": ("out_dir", "graphs"),
    "challenge-set": ("out_dir", "graphs"),
    "train": ("out_dir", "train"),
    "generate": ("out_dir", "model", "graphs"),
    "evaluate": ("out_dir",),
}


class CliError(Exception):
    """Fatal error: reported on stderr, exit status 1."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def read_jsonl(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"input not found: {path}")
    with path.open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_dump(row) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(args, out: Path) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# convert


def cmd_convert(args) -> None:
    out = _out_dir(args)
    _snapshot(args, out)
    errors: list = []
    pairs = load_corpus(args.manifest, errors)
    rows, failures = [], [{"row": r, "error": e} for r, e in errors]
    hist: Counter = Counter()
    for doc, reference in pairs:
        try:
            inst = convert(doc, reference)
        except (SbnError, ValueError) as exc:
            logger.error("%s: conversion failed: %s", doc.source_id, exc)
            failures.append({"source_id": doc.source_id, "error": str(exc)})
            continue
        if inst.voice is None:
            hist["ambiguous"] += 1
        elif inst.voice.voice is Voice.NOT_TRANSITIVE:
            hist["not_transitive"] += 1
        else:
            hist[f"{inst.voice.type_name} {inst.voice.voice.value}"] += 1
        rows.append(inst.to_json())
    if not rows:
        warnings.warn(f"{args.manifest}: no graphs produced")
        logger.warning("%s: no graphs produced", args.manifest)
    write_jsonl(out / "graphs.jsonl", rows)
    table = {
        f"{pair}->Agent": {"active": hist[f"{pair}->Agent active"], "passive": hist[f"{pair}->Agent passive"]}
        for pair in PAIR_ROLES
    }
    stats = {
        "rows": len(pairs) + len(errors),
        "converted": len(rows),
        "failures": failures,
        "voice_types": table,
        "not_transitive": hist["not_transitive"],
        "ambiguous": hist["ambiguous"],
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("converted %d of %d rows", len(rows), stats["rows"])


# augment / challenge set


def _voice_expected(inst: Instance, flip: bool) -> dict | None:
    if inst.voice is None:
        return None
    voice = inst.voice.voice.opposite if flip else inst.voice.voice
    return {"voice": voice.value, "pair": inst.voice.pair}


def _augmented_row(inst: Instance, strategy: str, flip: bool) -> dict:
    row = {
        "source_id": inst.source_id,
        "reference": inst.reference,
        "voice": inst.voice.to_json() if inst.voice else None,
        "voice_expected": _voice_expected(inst, flip),
        "strategy": strategy,
        "flip": flip,
    }
    if strategy == "none":
        row.update(graph=inst.graph.to_json(), topic=None)
        return row
    result = augment(inst, strategy, flip)
    if result is None:
        tag = "ambiguous" if inst.voice is None else "not_transitive"
        row.update(graph=inst.graph.to_json(), topic=None, skipped=tag)
        return row
    g, spec = result
    row.update(graph=g.to_json(), topic=spec.to_json())
    return row


def cmd_augment(args) -> None:
    out = _out_dir(args)
    _snapshot(args, out)
    rows = [_augmented_row(Instance.from_json(r), args.strategy, args.flip) for r in read_jsonl(args.graphs)]
    skipped = sum("skipped" in r for r in rows)
    if args.drop_skipped:
        rows = [r for r in rows if "skipped" not in r]
    write_jsonl(out / "augmented.jsonl", rows)
    logger.info("augmented %d rows, %d skipped (no usable frame)", len(rows), skipped)


def cmd_challenge(args) -> None:
    out = _out_dir(args)
    _snapshot(args, out)
    instances = [Instance.from_json(r) for r in read_jsonl(args.graphs)]
    corpus = [(inst, inst.reference, inst.voice) for inst in instances if inst.voice is not None]
    chosen = build_challenge_set(corpus, args.seed, stratify=not args.no_stratify)
    rows = []
    for inst, _, voice in chosen:
        row = _augmented_row(inst, args.strategy, flip=True)
        row["direction"] = DIRECTIONS[0] if voice.voice is Voice.PASSIVE else DIRECTIONS[1]
        rows.append(row)
    write_jsonl(out / "challenge.jsonl", rows)
    logger.info("challenge set: %d rows", len(rows))


# train / generate


def _model_config(args) -> ModelConfig:
    enc = EncoderConfig(
        kind=args.encoder,
        neighborhood=args.neighborhood,
        layers=args.layers,
        hidden=args.hidden,
        heads=args.heads,
    ).resolved()
    return ModelConfig(enc, args.embedding, args.dropout, args.max_len)


def _pairs(rows) -> list:
    return [(LeviGraph.from_json(r["graph"]), tokenize(r["reference"])) for r in rows if "skipped" not in r]


def cmd_train(args) -> None:
    out = _out_dir(args)
    _snapshot(args, out)
    model_cfg = _model_config(args)
    hyper = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        decay=args.decay,
        clip=args.clip,
        patience=args.patience,
        normalize=args.normalize,
        checkpoint_dir=str(out / "checkpoints") if args.save_every_epoch else None,
    )
    train_pairs = _pairs(read_jsonl(args.train))
    dev_pairs = _pairs(read_jsonl(args.dev)) if args.dev else []
    if not train_pairs:
        raise CliError(f"{args.train}: no usable training rows")
    model, history = train(train_pairs, dev_pairs, model_cfg, hyper, args.seed)
    model.save(out / "model.json", {"history": history})
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "dev_ppl", "lr"], lineterminator="\n")
        w.writeheader()
        for rec in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
    logger.info("trained %d epochs; best dev ppl %.4f", len(history), min(h["dev_ppl"] for h in history))


def cmd_generate(args) -> None:
    out = _out_dir(args)
    _snapshot(args, out)
    path = Path(args.model)
    if not path.is_file():
        raise CliError(f"model not found: {path}")
    model = Seq2Seq.load(path)
    rows = [r for r in read_jsonl(args.graphs) if "skipped" not in r]
    hyps = model.generate([LeviGraph.from_json(r["graph"]) for r in rows], args.max_len)
    records = []
    for row, hyp in zip(rows, hyps):
        rec = {
            "source_id": row.get("source_id", ""),
            "hypothesis": hyp,
            "reference": tokenize(row.get("reference", "")),
            "voice_expected": row.get("voice_expected"),
            "strategy": row.get("topic"),
        }
        if "direction" in row:
            rec["direction"] = row["direction"]
        records.append(rec)
    write_jsonl(out / "generations.jsonl", records)
    logger.info("generated %d outputs", len(records))


# evaluate


def _named(spec: str) -> tuple[str, str]:
    name, sep, path = spec.partition("=")
    if not sep:
        return Path(spec).parent.name or spec, spec
    return name, path


def _automatic(records) -> dict:
    hyps = [r["hypothesis"] for r in records]
    refs = [r["reference"] for r in records]
    expected = [r for r in records if r.get("voice_expected")]
    match = sum(voice_heuristic(r["hypothesis"]) == r["voice_expected"]["voice"] for r in expected)
    return {
        "n": len(records),
        "bleu": bleu(hyps, refs),
        "meteor_lite": meteor_lite(hyps, refs),
        "voice_match": 100.0 * match / len(expected) if expected else None,
    }


def cmd_evaluate(args) -> None:
    out = _out_dir(args)
    _snapshot(args, out)
    report: dict = {"automatic": {}, "challenge": {}, "rose": "pending"}
    for spec in args.run:
        name, path = _named(spec)
        report["automatic"][name] = _automatic(read_jsonl(path))
    for spec in args.challenge:
        name, path = _named(spec)
        records = read_jsonl(path)
        report["challenge"][name] = _automatic(records)
        if args.judgments and Path(args.judgments).is_file():
            split = {r["source_id"]: r["direction"] for r in records if "direction" in r}
            try:
                report.setdefault("rose_by_run", {})[name] = rose_accuracy(read_judgments(args.judgments), split)
                report["rose"] = "complete"
            except MissingJudgment as exc:
                logger.warning("%s: %d challenge rows lack judgments; ROSE pending", name, len(exc.ids))
    if report["rose"] == "pending":
        report.pop("rose_by_run", None)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set", "run", "n", "bleu", "meteor_lite", "voice_match"])
        for section in ("automatic", "challenge"):
            for name, m in report[section].items():
                w.writerow([section, name, m["n"], repr(m["bleu"]), repr(m["meteor_lite"]), m["voice_match"]])
    for section in ("automatic", "challenge"):
        for name, m in report[section].items():
            logger.info("%s %s: BLEU %.2f  METEOR-lite %.2f", section, name, m["bleu"], m["meteor_lite"])


# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option values (e.g. a previous run's config.json)")
    p.add_argument("--out-dir", help="directory for outputs and the config snapshot (required)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drgtfa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="SBN manifest -> Levi graph JSONL plus conversion stats")
    _common(p)
    p.add_argument("--manifest", help="TSV of <sbn path>\\t<reference text or path>")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("augment", help="add topic marking for the detected voice")
    _common(p)
    p.add_argument("--graphs", help="graphs.jsonl from convert")
    p.add_argument("--strategy", choices=STRATEGIES, default="ctc")
    p.add_argument("--flip", action="store_true", help="mark the other argument (request the opposite voice)")
    p.add_argument("--drop-skipped", action="store_true", help="omit rows without a transitive frame")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("challenge-set", help="balanced active/passive set with flipped topic marking")
    _common(p)
    p.add_argument("--graphs", help="graphs.jsonl from convert")
    p.add_argument("--strategy", choices=STRATEGIES, default="ctc")
    p.add_argument("--no-stratify", action="store_true", help="draw actives without matching role-pair types")
    p.set_defaults(func=cmd_challenge)

    p = sub.add_parser("train", help="train a graph-to-text model")
    _common(p)
    p.add_argument("--train", help="JSONL rows with graph and reference")
    p.add_argument("--dev", help="JSONL dev rows (default: monitor the training set)")
    p.add_argument("--encoder", choices=["ggnn", "gcn", "gat"], default="ggnn")
    p.add_argument("--neighborhood", choices=["local", "deep"], default="deep")
    p.add_argument("--layers", type=int, help="default: 1 for deep, 2 for local")
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--embedding", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1.0)
    p.add_argument("--decay", type=float, default=0.8)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--normalize", choices=["sentences", "tokens"], default="sentences")
    p.add_argument("--save-every-epoch", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="greedy generation from graphs")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--graphs", help="JSONL rows with a graph")
    p.add_argument("--max-len", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="BLEU / METEOR-lite tables and the ROSE report")
    _common(p)
    p.add_argument("--run", action="append", default=[], metavar="NAME=PATH", help="generations on the test set")
    p.add_argument("--challenge", action="append", default=[], metavar="NAME=PATH", help="generations on the challenge set")
    p.add_argument("--judgments", help="ROSE judgment TSV (source_id, sem, gram, phen, note)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            parser.error(f"config not found: {path}")
        values = json.loads(path.read_text(encoding="utf-8"))
        values.pop("command", None)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(values) - known
        if unknown:
            parser.error(f"{path}: unknown option(s) {', '.join(sorted(unknown))}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d) is None]
    if missing:
        parser.error(f"{args.command}: missing " + ", ".join("--" + d.replace("_", "-") for d in missing))
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        args.func(args)
    except (CliError, ConfigInvalid, SbnError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

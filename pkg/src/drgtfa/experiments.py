"""Desk-scale experiments: overfitting the fixture and voice control by flipping the topic."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .encoders import EncoderConfig
from .metrics import bleu, meteor_lite, voice_heuristic
from .pipeline import Instance, augment, convert_text
from .seq2seq import ModelConfig, TrainConfig, train
from .templates import template_corpus
from .tfa import Voice

__all__ = ["OverfitConfig", "VoiceControlConfig", "overfit", "voice_control", "graphs_for"]

logger = logging.getLogger(__name__)


def graphs_for(instances: list[Instance], strategy: str | None, flip: bool = False):
    """Input graphs for a strategy; ``None`` means the untagged base graph."""
    out = []
    for inst in instances:
        if strategy is None:
            out.append(inst.graph)
        else:
            out.append(augment(inst, strategy, flip)[0])
    return out


@dataclass(frozen=True)
class OverfitConfig:
    n_items: int = 100
    corpus_seed: int = 0
    strategy: str = "ctc"
    model: ModelConfig = field(default_factory=lambda: ModelConfig(EncoderConfig("ggnn", "deep")))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=200, patience=200))
    seed: int = 1
    target_bleu: float = 95.0
    eval_every: int = 10


def overfit(cfg: OverfitConfig, instances: list[Instance] | None = None) -> dict:
    """Train on a corpus and evaluate on the same corpus.

    Stops as soon as a periodic evaluation reaches ``target_bleu``.
    """
    if instances is None:
        instances = [
            convert_text(it.sbn, it.reference, it.source_id) for it in template_corpus(cfg.n_items, cfg.corpus_seed)
        ]
    graphs = graphs_for(instances, cfg.strategy)
    refs = [inst.tokens for inst in instances]
    pairs = list(zip(graphs, refs))
    curve = []

    class _Reached(Exception):
        pass

    def check(model, record):
        if record["epoch"] % cfg.eval_every:
            return
        score = bleu(model.generate(graphs), refs)
        curve.append((record["epoch"], score))
        logger.info("epoch %d  train-set BLEU %.2f", record["epoch"], score)
        if score >= cfg.target_bleu:
            raise _Reached

    start = time.perf_counter()
    try:
        train(pairs, [], cfg.model, cfg.train, cfg.seed, epoch_callback=check)
    except _Reached:
        pass
    seconds = time.perf_counter() - start
    best = max(curve, key=lambda r: r[1]) if curve else (0, 0.0)
    reached = [e for e, s in curve if s >= cfg.target_bleu]
    return {
        "bleu": curve[-1][1] if curve else 0.0,
        "best_bleu": best[1],
        "epochs": reached[0] if reached else (curve[-1][0] if curve else 0),
        "reached": bool(reached),
        "seconds": seconds,
        "curve": curve,
    }


@dataclass(frozen=True)
class VoiceControlConfig:
    n_items: int = 500
    n_test: int = 50
    n_dev: int = 50
    corpus_seed: int = 7
    strategy: str | None = "ctc"  # None trains the untagged baseline
    model: ModelConfig = field(default_factory=lambda: ModelConfig(EncoderConfig("ggnn", "deep")))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=30))
    seed: int = 1


def _requested(voice: Voice) -> str:
    return voice.opposite.value


def voice_control(cfg: VoiceControlConfig) -> dict:
    """Train, then ask for the opposite voice on held-out items by flipping the topic.

    For every held-out item the requested voice is the opposite of its
    reference. ``control_rate`` is the share of generations from the flipped
    input whose surface voice (by :func:`voice_heuristic`) is the requested
    one. ``verdict_flip_rate`` is the share where the verdict on the flipped
    input is the opposite of the verdict on the unflipped input. The untagged
    baseline gets the same graph either way, so it can only hit the requested
    voice by chance.
    """
    items = template_corpus(cfg.n_items, cfg.corpus_seed)
    instances = [convert_text(it.sbn, it.reference, it.source_id) for it in items]
    test = instances[: cfg.n_test]
    dev = instances[cfg.n_test : cfg.n_test + cfg.n_dev]
    train_set = instances[cfg.n_test + cfg.n_dev :]

    def pairs(rows):
        return list(zip(graphs_for(rows, cfg.strategy), (r.tokens for r in rows)))

    model, history = train(pairs(train_set), pairs(dev), cfg.model, cfg.train, cfg.seed)
    refs = [r.tokens for r in test]
    plain = model.generate(graphs_for(test, cfg.strategy))
    flipped = model.generate(graphs_for(test, cfg.strategy, flip=cfg.strategy is not None))
    rows = []
    for inst, a, b in zip(test, plain, flipped):
        va, vb = voice_heuristic(a), voice_heuristic(b)
        rows.append(
            {
                "source_id": inst.source_id,
                "reference_voice": inst.voice.voice.value,
                "requested": _requested(inst.voice.voice),
                "plain": " ".join(a),
                "flipped": " ".join(b),
                "plain_verdict": va,
                "flipped_verdict": vb,
            }
        )
    n = len(rows)
    control = sum(r["flipped_verdict"] == r["requested"] for r in rows) / n
    verdict_flip = sum(
        r["plain_verdict"] in ("active", "passive") and r["flipped_verdict"] == Voice(r["plain_verdict"]).opposite.value
        for r in rows
    ) / n
    return {
        "strategy": cfg.strategy or "none",
        "control_rate": 100.0 * control,
        "verdict_flip_rate": 100.0 * verdict_flip,
        "bleu_plain": bleu(plain, refs),
        "meteor_lite_plain": meteor_lite(plain, refs),
        "epochs": len(history),
        "best_dev_ppl": min(h["dev_ppl"] for h in history),
        "rows": rows,
    }

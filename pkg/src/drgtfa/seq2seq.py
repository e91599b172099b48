"""Graph-to-sequence model: graph encoder, attention LSTM decoder with a copy
gate, teacher-forced training with SGD, and greedy generation.
"""

from __future__ import annotations

import copy
import logging
import math
import re
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nncore as nn
from .drg import LeviGraph, surface_form
from .encoders import EncoderConfig, EncoderParams, NbArrays, encode_batch, neighborhood
from .nncore import LSTMParams, OptimizerState, Parameter, Tensor

__all__ = [
    "PAD",
    "BOS",
    "EOS",
    "UNK",
    "Vocabulary",
    "tokenize",
    "detokenize",
    "ModelConfig",
    "TrainConfig",
    "Example",
    "DecoderState",
    "Seq2Seq",
    "NonFiniteLoss",
    "decode_step",
    "generate",
    "train",
    "run_multi_seed",
]

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")

_WORD = re.compile(r"\w+(?:['’-]\w+)*|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def detokenize(tokens) -> str:
    return " ".join(tokens)


class NonFiniteLoss(FloatingPointError):
    pass


class Vocabulary:
    def __init__(self, tokens=()):
        self.itos = list(RESERVED)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)

    @classmethod
    def build(cls, sequences, min_count: int = 1) -> "Vocabulary":
        counts = Counter(t for seq in sequences for t in seq)
        kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        return cls(kept)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    def to_json(self) -> list[str]:
        return self.itos[len(RESERVED) :]

    @classmethod
    def from_json(cls, tokens) -> "Vocabulary":
        return cls(tokens)


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    embedding: int = 256
    dropout: float = 0.5
    max_len: int = 60

    @property
    def hidden(self) -> int:
        return self.encoder.hidden

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["encoder"] = EncoderConfig(**obj.get("encoder", {}))
        return cls(**obj)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1.0
    decay: float = 0.8
    clip: float = 5.0
    patience: int = 5
    normalize: str = "sentences"  # divide the summed batch loss by "sentences" or "tokens"
    checkpoint_dir: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class Example:
    graph: LeviGraph
    tokens: list[str] | None
    src_ids: np.ndarray
    copy_ids: np.ndarray  # per node: target id, extended id (V + k) or PAD if not copyable
    oov: list[str]
    nb: NbArrays
    tgt_ids: np.ndarray | None


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    prev: np.ndarray  # previous token ids, extended ids allowed
    memory: Tensor  # (B, N, H) node states
    mem_proj: Tensor  # memory projected for attention
    mask_bias: np.ndarray  # (B, N), 0 on real nodes, -inf-like on padding
    copy_ids: np.ndarray  # (B, N)
    width: int  # extended vocabulary width


def _concat_arrays(parts: list[NbArrays]) -> NbArrays:
    dst, src, weight = [], [], []
    sizes = [0, 0, 0]
    offset = 0
    for d in range(3):
        off = 0
        for nb in parts:
            lo, hi = nb.bounds[d], nb.bounds[d + 1]
            dst.append(nb.dst[lo:hi] + off)
            src.append(nb.src[lo:hi] + off)
            weight.append(nb.weight[lo:hi])
            sizes[d] += hi - lo
            off += nb.n
        offset = off
    bounds = (0, sizes[0], sizes[0] + sizes[1], sum(sizes))
    return NbArrays(np.concatenate(dst), np.concatenate(src), np.concatenate(weight), bounds, offset)


class Seq2Seq:
    def __init__(self, cfg: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary, seed: int = 0):
        self.cfg = ModelConfig(cfg.encoder.resolved(), cfg.embedding, cfg.dropout, cfg.max_len)
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.seed = seed
        rng = np.random.default_rng(seed)
        H, E, V = self.cfg.hidden, self.cfg.embedding, len(tgt_vocab)
        self.src_emb = Parameter("src_emb", nn.glorot(rng, (len(src_vocab), H)))
        self.encoder = EncoderParams(self.cfg.encoder, rng)
        self.tgt_emb = Parameter("tgt_emb", nn.glorot(rng, (V, E)))
        self.W_mem = Parameter("attn.W_mem", nn.glorot(rng, (H, H)))
        self.W_dec = Parameter("attn.W_dec", nn.glorot(rng, (H, H)))
        self.v_att = Parameter("attn.v", nn.glorot(rng, (H, 1)))
        self.lstm = LSTMParams.init("decoder.lstm", E + H, H, rng)
        self.W_out = Parameter("out.W", nn.glorot(rng, (2 * H, V)))
        self.b_out = Parameter("out.b", nn.zeros(V))
        self.w_gen = Parameter("copy.w", nn.glorot(rng, (2 * H + E, 1)))
        self.b_gen = Parameter("copy.b", nn.zeros(1))

    def parameters(self) -> list[Parameter]:
        return [
            self.src_emb,
            *self.encoder.parameters(),
            self.tgt_emb,
            self.W_mem,
            self.W_dec,
            self.v_att,
            *self.lstm.parameters(),
            self.W_out,
            self.b_out,
            self.w_gen,
            self.b_gen,
        ]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def prepare(self, graph: LeviGraph, tokens: list[str] | None = None) -> Example:
        src_ids = np.array(self.src_vocab.encode(graph.tokens), dtype=np.intp)
        oov: list[str] = []
        copy_ids = []
        for node in graph.nodes:
            word = surface_form(node)
            if word is None:
                copy_ids.append(PAD)
            elif word in self.tgt_vocab:
                copy_ids.append(self.tgt_vocab.id(word))
            else:
                if word not in oov:
                    oov.append(word)
                copy_ids.append(len(self.tgt_vocab) + oov.index(word))
        tgt_ids = None
        if tokens is not None:
            ids = []
            for t in tokens:
                if t in self.tgt_vocab:
                    ids.append(self.tgt_vocab.id(t))
                elif t in oov:
                    ids.append(len(self.tgt_vocab) + oov.index(t))
                else:
                    ids.append(UNK)
            tgt_ids = np.array(ids, dtype=np.intp)
        nb = neighborhood(graph, self.cfg.encoder.neighborhood).arrays()
        return Example(graph, tokens, src_ids, np.array(copy_ids, dtype=np.intp), oov, nb, tgt_ids)

    def start(self, batch: list[Example]) -> DecoderState:
        """Encode a batch and build the initial decoder state."""
        sizes = [len(ex.src_ids) for ex in batch]
        B, N, H = len(batch), max(sizes), self.cfg.hidden
        h0 = nn.take_rows(self.src_emb, np.concatenate([ex.src_ids for ex in batch]))
        graph_ids = np.repeat(np.arange(B), sizes)
        nb = _concat_arrays([ex.nb for ex in batch])
        states, pooled = encode_batch(h0, nb, graph_ids, B, self.encoder)
        offsets = np.cumsum([0] + sizes[:-1])
        index = np.zeros((B, N), dtype=np.intp)
        mask_bias = np.full((B, N), -1e30)
        copy_ids = np.full((B, N), PAD, dtype=np.intp)
        for b, (off, n) in enumerate(zip(offsets, sizes)):
            index[b, :n] = np.arange(off, off + n)
            mask_bias[b, :n] = 0.0
            copy_ids[b, :n] = batch[b].copy_ids
        memory = nn.reshape(nn.take_rows(states, index.ravel()), (B, N, H))
        width = len(self.tgt_vocab) + max(len(ex.oov) for ex in batch)
        return DecoderState(
            h=pooled,
            c=Tensor(np.zeros((B, H))),
            prev=np.full(B, BOS, dtype=np.intp),
            memory=memory,
            mem_proj=memory @ self.W_mem,
            mask_bias=mask_bias,
            copy_ids=copy_ids,
            width=width,
        )

    def step(self, state: DecoderState, training: bool = False, rng=None, p_gen_override=None):
        B, N, H = state.memory.shape
        V = len(self.tgt_vocab)
        prev = np.where(state.prev < V, state.prev, UNK)
        emb = nn.dropout(nn.take_rows(self.tgt_emb, prev), self.cfg.dropout, rng, training)
        query = nn.reshape(state.h @ self.W_dec, (B, 1, H))
        scores = nn.reshape(nn.tanh(state.mem_proj + query) @ self.v_att, (B, N)) + state.mask_bias
        alpha = nn.softmax(scores, axis=-1)
        context = nn.tsum(state.memory * nn.reshape(alpha, (B, N, 1)), axis=1)
        h, c = nn.lstm_step(nn.concat([emb, context], axis=-1), state.h, state.c, self.lstm)
        features = nn.concat([nn.dropout(h, self.cfg.dropout, rng, training), context], axis=-1)
        p_vocab = nn.softmax(features @ self.W_out + self.b_out, axis=-1)
        if p_gen_override is None:
            p_gen = nn.sigmoid(nn.concat([h, context, emb], axis=-1) @ self.w_gen + self.b_gen)
        else:
            p_gen = Tensor(np.full((B, 1), float(p_gen_override)))
        generated = p_vocab * p_gen
        if state.width > V:
            generated = nn.concat([generated, Tensor(np.zeros((B, state.width - V)))], axis=-1)
        copied = nn.scatter_cols(alpha * (1.0 - p_gen), state.copy_ids, state.width)
        dist = generated + copied
        new_state = DecoderState(
            h, c, state.prev, state.memory, state.mem_proj, state.mask_bias, state.copy_ids, state.width
        )
        return dist, new_state, alpha

    def batch_loss(self, batch: list[Example], training: bool = False, rng=None) -> tuple[Tensor, int]:
        """Summed token negative log-likelihood under teacher forcing, and the token count."""
        state = self.start(batch)
        T = max(len(ex.tgt_ids) for ex in batch) + 1
        targets = np.full((len(batch), T), PAD, dtype=np.intp)
        for b, ex in enumerate(batch):
            targets[b, : len(ex.tgt_ids)] = ex.tgt_ids
            targets[b, len(ex.tgt_ids)] = EOS
        total = None
        for t in range(T):
            dist, state, _ = self.step(state, training, rng)
            mask = (targets[:, t] != PAD).astype(np.float64)
            nll = nn.tsum(nn.log(nn.pick(dist, targets[:, t]) + 1e-12) * -mask)
            total = nll if total is None else total + nll
            state.prev = targets[:, t]
        return total, int((targets != PAD).sum())

    def generate(self, graphs, max_len: int | None = None, batch_size: int = 64) -> list[list[str]]:
        max_len = self.cfg.max_len if max_len is None else max_len
        out = []
        for k in range(0, len(graphs), batch_size):
            batch = [self.prepare(g) for g in graphs[k : k + batch_size]]
            out.extend(self._greedy(batch, max_len))
        return out

    def _greedy(self, batch: list[Example], max_len: int) -> list[list[str]]:
        state = self.start(batch)
        V = len(self.tgt_vocab)
        done = np.zeros(len(batch), dtype=bool)
        hyps: list[list[str]] = [[] for _ in batch]
        for _ in range(max_len):
            dist, state, _ = self.step(state)
            probs = dist.data.copy()
            probs[:, PAD] = -1.0
            probs[:, BOS] = -1.0
            choice = probs.argmax(axis=1)
            for b, ex in enumerate(batch):
                if done[b]:
                    continue
                if choice[b] == EOS:
                    done[b] = True
                elif choice[b] < V:
                    hyps[b].append(self.tgt_vocab.itos[choice[b]])
                else:
                    hyps[b].append(ex.oov[choice[b] - V])
            if done.all():
                break
            state.prev = choice
        return hyps

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if arrays[p.name].shape != p.shape:
                raise nn.ShapeMismatch(f"{p.name}: checkpoint {arrays[p.name].shape} vs model {p.shape}")
            p.data = np.array(arrays[p.name], dtype=np.float64)

    def save(self, path, extra: dict | None = None) -> None:
        meta = {
            "config": self.cfg.to_json(),
            "seed": self.seed,
            "src_vocab": self.src_vocab.to_json(),
            "tgt_vocab": self.tgt_vocab.to_json(),
        }
        meta.update(extra or {})
        nn.save_checkpoint(path, self.parameters(), meta)

    @classmethod
    def load(cls, path) -> "Seq2Seq":
        arrays, meta = nn.load_checkpoint(path)
        model = cls(
            ModelConfig.from_json(meta["config"]),
            Vocabulary.from_json(meta["src_vocab"]),
            Vocabulary.from_json(meta["tgt_vocab"]),
            meta.get("seed", 0),
        )
        model.load_state_dict(arrays)
        return model


def decode_step(state: DecoderState, model: Seq2Seq, p_gen_override=None):
    """One evaluation-mode decoder step: (distribution, new state, attention weights)."""
    return model.step(state, False, None, p_gen_override)


def generate(g: LeviGraph, model: Seq2Seq, max_len: int | None = None) -> list[str]:
    return model.generate([g], max_len)[0]


def perplexity(model: Seq2Seq, examples: list[Example], batch_size: int = 64) -> float:
    nll, n = 0.0, 0
    for k in range(0, len(examples), batch_size):
        loss, count = model.batch_loss(examples[k : k + batch_size])
        nll += float(loss.data)
        n += count
    return math.exp(nll / max(n, 1))


def train(
    train_pairs,
    dev_pairs,
    model_cfg: ModelConfig,
    hyper: TrainConfig,
    seed: int,
    epoch_callback=None,
):
    """Train on ``(LeviGraph, target tokens)`` pairs.

    Vocabularies come from the training pairs only. Without dev pairs the
    training set itself (in evaluation mode) is monitored. The learning rate decays
    whenever dev perplexity fails to improve; training stops after
    ``hyper.patience`` such epochs in a row, and the best parameters by dev
    perplexity are restored. Returns the model and one metrics dict per epoch.
    """
    src_vocab = Vocabulary.build(g.tokens for g, _ in train_pairs)
    tgt_vocab = Vocabulary.build(tokens for _, tokens in train_pairs)
    model = Seq2Seq(model_cfg, src_vocab, tgt_vocab, seed)
    rng = np.random.default_rng(seed + 1)
    train_ex = [model.prepare(g, list(toks)) for g, toks in train_pairs]
    dev_ex = [model.prepare(g, list(toks)) for g, toks in dev_pairs]
    state = OptimizerState(hyper.learning_rate, hyper.decay)
    params = model.parameters()
    history = []
    best_params, stale = None, 0
    ckpt_dir = Path(hyper.checkpoint_dir) if hyper.checkpoint_dir else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(train_ex))
        total, tokens = 0.0, 0
        lr = state.learning_rate
        for step, k in enumerate(range(0, len(order), hyper.batch_size)):
            batch = [train_ex[i] for i in order[k : k + hyper.batch_size]]
            model.zero_grad()
            loss, n = model.batch_loss(batch, training=True, rng=rng)
            if not math.isfinite(float(loss.data)):
                raise NonFiniteLoss(f"epoch {epoch} step {step}: loss {float(loss.data)}")
            (loss * (1.0 / (len(batch) if hyper.normalize == "sentences" else n))).backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            nn.clip_grad_norm(grads, hyper.clip)
            nn.sgd_update(params, grads, state)
            total += float(loss.data)
            tokens += n
        dev_ppl = perplexity(model, dev_ex or train_ex)
        improved = dev_ppl < state.best
        state.end_epoch(dev_ppl)
        if improved:
            best_params, stale = model.state_dict(), 0
        else:
            stale += 1
        record = {"epoch": epoch, "train_loss": total / tokens, "dev_ppl": dev_ppl, "lr": lr}
        history.append(record)
        logger.info("epoch %d  train nll %.4f  dev ppl %.4f  lr %.4g", epoch, record["train_loss"], dev_ppl, lr)
        if ckpt_dir is not None:
            model.save(ckpt_dir / f"epoch_{epoch:03d}.json", {"epoch": epoch})
        if epoch_callback is not None:
            epoch_callback(model, record)
        if stale >= hyper.patience:
            logger.info("early stop after %d epochs without dev improvement", stale)
            break
    if best_params is not None:
        model.load_state_dict(best_params)
    return model, history


def run_multi_seed(train_pairs, dev_pairs, test_pairs, model_cfg: ModelConfig, hyper: TrainConfig, seeds=(1, 2, 3)):
    """Train once per seed and report per-seed and mean test metrics."""
    from .metrics import bleu, meteor_lite

    per_seed = []
    refs = [list(t) for _, t in test_pairs]
    for seed in seeds:
        model, history = train(train_pairs, dev_pairs, model_cfg, copy.deepcopy(hyper), seed)
        hyps = model.generate([g for g, _ in test_pairs])
        per_seed.append(
            {
                "seed": seed,
                "epochs": len(history),
                "dev_ppl": min(h["dev_ppl"] for h in history),
                "bleu": bleu(hyps, refs),
                "meteor_lite": meteor_lite(hyps, refs),
            }
        )
    keys = ("dev_ppl", "bleu", "meteor_lite")
    # statistics works in exact fractions, so identical runs give variance exactly 0
    mean = {k: float(statistics.mean(r[k] for r in per_seed)) for k in keys}
    var = {k: float(statistics.pvariance([r[k] for r in per_seed])) for k in keys}
    return {"seeds": list(seeds), "per_seed": per_seed, "mean": mean, "variance": var}

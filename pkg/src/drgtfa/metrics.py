"""Automatic metrics (corpus BLEU, METEOR-lite), the ROSE judgment harness
and a surface heuristic for active/passive voice.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass

__all__ = [
    "LengthMismatch",
    "MissingJudgment",
    "RoseJudgment",
    "bleu",
    "meteor_lite",
    "stem",
    "read_judgments",
    "write_judgments",
    "rose_accuracy",
    "voice_heuristic",
    "DIRECTIONS",
]

BLEU_EPSILON = 1e-9


class LengthMismatch(ValueError):
    pass


class MissingJudgment(KeyError):
    def __init__(self, ids):
        super().__init__(f"no judgment for {sorted(ids)}")
        self.ids = set(ids)


def _check_lengths(hyps, refs) -> None:
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} references")


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, max_n: int = 4) -> float:
    """Corpus BLEU on token lists, one reference per hypothesis, in [0, 100].

    Zero match counts are replaced by 1e-9 before taking logs.
    """
    _check_lengths(hypotheses, references)
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        matched = total = 0
        for hyp, ref in zip(hypotheses, references):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matched += sum(min(c, r[g]) for g, c in h.items())
            total += max(len(hyp) - n + 1, 0)
        log_p += math.log(max(matched, BLEU_EPSILON) / max(total, 1))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p / max_n)


_SUFFIXES = ("ingly", "edly", "ings", "ing", "ies", "ied", "ed", "es", "ly", "s")


def stem(word: str) -> str:
    """Crude suffix stripper: keeps at least three characters of stem."""
    w = word.lower()
    for suf in _SUFFIXES:
        if w.endswith(suf) and len(w) - len(suf) >= 3:
            w = w[: -len(suf)]
            if suf in ("ies", "ied"):
                w += "y"
            break
    if len(w) > 3 and w[-1] == w[-2] and w[-1] not in "aeiouls":
        w = w[:-1]  # stopp(ed) -> stop
    if len(w) > 3 and w.endswith("e"):
        w = w[:-1]
    return w


def _align(hyp, ref) -> list[tuple[int, int]]:
    """Greedy unigram alignment: exact matches first, then stem matches.

    Among candidates a reference position that extends the previous match is
    preferred, so contiguous runs stay in one chunk.
    """
    pairs: dict[int, int] = {}
    used: set[int] = set()
    for key in (lambda t: t, stem):
        ref_keys = [key(t) for t in ref]
        last = -2
        for i, tok in enumerate(hyp):
            if i in pairs:
                last = pairs[i]
                continue
            k = key(tok)
            cands = [j for j, rk in enumerate(ref_keys) if rk == k and j not in used]
            if not cands:
                continue
            j = last + 1 if last + 1 in cands else cands[0]
            pairs[i] = j
            used.add(j)
            last = j
    return sorted(pairs.items())


def _chunks(alignment) -> int:
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(hypotheses, references, alpha: float = 0.9, beta: float = 3.0, gamma: float = 0.5) -> float:
    """METEOR without synonym or paraphrase stages, aggregated over the corpus.

    score = F_mean · (1 − γ · (chunks / matches)^β), with
    F_mean = P·R / (α·P + (1 − α)·R).
    """
    _check_lengths(hypotheses, references)
    matches = chunks = hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        al = _align(list(hyp), list(ref))
        matches += len(al)
        chunks += _chunks(al)
        hyp_len += len(hyp)
        ref_len += len(ref)
    if matches == 0:
        return 0.0
    p, r = matches / hyp_len, matches / ref_len
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    penalty = gamma * (chunks / matches) ** beta
    return 100.0 * fmean * (1.0 - penalty)


@dataclass(frozen=True)
class RoseJudgment:
    source_id: str
    semantics: int
    grammaticality: int
    phenomenon: int
    note: str = ""

    def __post_init__(self):
        for name in ("semantics", "grammaticality", "phenomenon"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{self.source_id}: {name} must be 0 or 1")

    @property
    def rose(self) -> int:
        return self.semantics & self.grammaticality & self.phenomenon


def read_judgments(path) -> list[RoseJudgment]:
    """Read ``source_id, sem, gram, phen, note`` rows; a header row is optional."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.reader(fh, delimiter="\t"):
            if not rec or rec[0].startswith("#") or rec[0] == "source_id":
                continue
            note = rec[4] if len(rec) > 4 else ""
            rows.append(RoseJudgment(rec[0], int(rec[1]), int(rec[2]), int(rec[3]), note))
    return rows


def write_judgments(path, judgments) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["source_id", "sem", "gram", "phen", "note"])
        for j in judgments:
            w.writerow([j.source_id, j.semantics, j.grammaticality, j.phenomenon, j.note])


DIRECTIONS = ("passive->active", "active->passive")


def _column(js) -> dict:
    n = len(js)
    if n == 0:
        return {"n": 0, "sem": 0.0, "gram": 0.0, "phen": 0.0, "rose": 0.0}
    return {
        "n": n,
        "sem": 100.0 * sum(j.semantics for j in js) / n,
        "gram": 100.0 * sum(j.grammaticality for j in js) / n,
        "phen": 100.0 * sum(j.phenomenon for j in js) / n,
        "rose": 100.0 * sum(j.rose for j in js) / n,
    }


def rose_accuracy(judgments, split_by: dict[str, str]) -> dict:
    """Per-direction means of each bit and ROSE accuracy, plus the overall ROSE.

    ``split_by`` maps every challenge-set id to one of :data:`DIRECTIONS`.
    """
    by_id = {j.source_id: j for j in judgments}
    missing = set(split_by) - set(by_id)
    if missing:
        raise MissingJudgment(missing)
    report = {}
    for direction in DIRECTIONS:
        report[direction] = _column([by_id[i] for i, d in split_by.items() if d == direction])
    everything = [by_id[i] for i in split_by]
    report["all"] = {"n": len(everything), "rose": _column(everything)["rose"]}
    return report


_AUX = frozenset({"am", "is", "are", "was", "were", "been", "being", "get", "got"})
_FINITE = frozenset(
    {"am", "is", "are", "was", "were", "has", "have", "had", "do", "does", "did", "will", "would",
     "can", "could", "shall", "should", "may", "might", "must", "get", "gets", "got"}
)
# past tense and past participle forms of common irregular verbs
_IRREGULAR_PAST = frozenset(
    "ate bit began bought brought built caught chose came cut did drew drank drove fed felt fought found "
    "flew forgot froze gave went grew had heard held hid hit hurt kept knew laid led left lent let lost made "
    "meant met paid put quit read rode rang rose ran said saw sought sold sent set shook shot shut sang sank "
    "sat slept slid spoke spent stood stole stuck stung struck swore swept swam took taught tore told thought "
    "threw understood woke wore won wrote".split()
)
_IRREGULAR_PARTICIPLE = frozenset(
    "eaten bitten begun bought brought built caught chosen come cut done drawn drunk driven fed felt fought "
    "found flown forgotten frozen given gone grown had heard held hidden hit hurt kept known laid led left lent "
    "let lost made meant met paid put quit read ridden rung risen run said seen sought sold sent set shaken shot "
    "shut sung sunk sat slept slid spoken spent stood stolen stuck stung struck sworn swept swum taken taught "
    "torn told thought thrown understood woken worn won written born beaten broken forgiven hung".split()
)


def _participle(tok: str) -> bool:
    return tok in _IRREGULAR_PARTICIPLE or (len(tok) > 3 and tok.endswith("ed"))


def voice_heuristic(tokens) -> str:
    """Guess ``"active"``, ``"passive"`` or ``"unknown"`` from surface tokens.

    Passive: an auxiliary (be forms, get, got) followed within three tokens
    by a past participle. Active: otherwise, if any finite verb form shows up.
    """
    toks = [t.lower() for t in tokens]
    for i, t in enumerate(toks):
        if t in _AUX and any(_participle(u) for u in toks[i + 1 : i + 4]):
            return "passive"
    for t in toks:
        if t in _FINITE or t in _IRREGULAR_PAST or (len(t) > 3 and t.endswith("ed")):
            return "active"
    return "unknown"

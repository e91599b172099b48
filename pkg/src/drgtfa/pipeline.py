"""SBN document to (optionally topic-marked) Levi graph, shared by the CLI and scripts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .drg import LeviAlignment, LeviGraph, build_drg, to_levi
from .sbn import SbnDocument, SbnError, parse_sbn
from .seq2seq import tokenize
from .tfa import (
    PAIR_ROLES,
    AmbiguousVoice,
    Strategy,
    TfaSpec,
    Voice,
    VoiceType,
    apply_tfa,
    detect_voice,
    flip_voice,
    make_spec,
    role_frame,
)

__all__ = ["Instance", "convert", "convert_text", "augment", "read_labelled", "count_voice_types"]


@dataclass(frozen=True)
class Instance:
    source_id: str
    reference: str
    graph: LeviGraph
    alignment: LeviAlignment
    voice: VoiceType | None  # None when the frame's direction is ambiguous
    specs: dict  # strategy value -> TfaSpec marking the reference's subject

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.reference)

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "reference": self.reference,
            "graph": self.graph.to_json(self.alignment),
            "voice": self.voice.to_json() if self.voice else None,
            "specs": {k: s.to_json() for k, s in self.specs.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Instance":
        graph = LeviGraph.from_json(obj["graph"])
        alignment = LeviAlignment.from_json(obj["graph"]["alignment"])
        voice = VoiceType.from_json(obj["voice"]) if obj.get("voice") else None
        specs = {k: TfaSpec.from_json(s) for k, s in obj.get("specs", {}).items()}
        return cls(obj["source_id"], obj["reference"], graph, alignment, voice, specs)


def convert(doc: SbnDocument, reference: str) -> Instance:
    drg = build_drg(doc)
    graph, alignment = to_levi(drg)
    try:
        voice = detect_voice(drg)
    except AmbiguousVoice:
        voice = None
    specs = {}
    if voice is not None and voice.voice is not Voice.NOT_TRANSITIVE:
        frame = role_frame(drg)
        specs = {s.value: make_spec(s, frame, voice, alignment) for s in Strategy}
    return Instance(doc.source_id, reference, graph, alignment, voice, specs)


def convert_text(sbn: str, reference: str, source_id: str = "") -> Instance:
    return convert(parse_sbn(sbn, source_id), reference)


def augment(inst: Instance, strategy, flip: bool = False) -> tuple[LeviGraph, TfaSpec] | None:
    """Topic-marked graph for ``inst``, or None when it has no usable frame."""
    spec = inst.specs.get(Strategy(strategy).value)
    if spec is None:
        return None
    g = apply_tfa(inst.graph, spec)
    if flip:
        g, spec = flip_voice(g, spec)
    return g, spec


def read_labelled(path) -> list[tuple[str, str, str, VoiceType]]:
    """Blocks of SBN with ``%%% id:``, ``%%% text:`` and ``%%% voice:`` headers.

    Returns ``(id, text, sbn, gold voice type)`` per block.
    """
    out = []
    header: dict[str, str] = {}
    body: list[str] = []

    def flush():
        if "id" in header:
            label = header["voice"].split()
            gold = VoiceType(Voice(label[0]), label[1] if len(label) > 1 else None)
            out.append((header["id"], header.get("text", ""), "\n".join(body) + "\n", gold))
        header.clear()
        body.clear()

    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("%%%"):
                key, _, value = line[3:].strip().partition(":")
                if key.strip() == "id":
                    flush()
                header[key.strip()] = value.strip()
            elif header and line.strip():
                body.append(line)
    flush()
    return out


def count_voice_types(root, pattern: str = "en.drs.sbn") -> dict:
    """Active/passive counts per role-pair type over every SBN file below ``root``.

    Files that fail to parse and frames with ambiguous direction are counted
    separately rather than raised.
    """
    hist: Counter = Counter()
    for path in sorted(Path(root).rglob(pattern)):
        try:
            drg = build_drg(parse_sbn(path.read_text(encoding="utf-8"), str(path)))
            voice = detect_voice(drg)
        except SbnError:
            hist["unparsable"] += 1
            continue
        except AmbiguousVoice:
            hist["ambiguous"] += 1
            continue
        if voice.voice is Voice.NOT_TRANSITIVE:
            hist["not_transitive"] += 1
        else:
            hist[(voice.pair, voice.voice.value)] += 1
    types = {p: {"active": hist[(p, "active")], "passive": hist[(p, "passive")]} for p in PAIR_ROLES}
    return {"types": types, **{k: hist[k] for k in ("not_transitive", "ambiguous", "unparsable")}}

"""Topic marking on Levi graphs: voice detection, the three augmentation
strategies (CTC, BTC, RTR), voice flipping and the active/passive challenge set.
"""

from __future__ import annotations

import logging
import random
import warnings
from dataclasses import dataclass
from enum import Enum

from .drg import BOX, MEMBER, Dir, Drg, LeviAlignment, LeviGraph, LeviKind, NodeKind, _LeviBuilder
from .sbn import is_interrogative

__all__ = [
    "Voice",
    "VoiceType",
    "Strategy",
    "TfaSpec",
    "VoiceFrame",
    "PAIR_ROLES",
    "AGENT",
    "TOPIC",
    "TfaError",
    "AmbiguousVoice",
    "TopicNotFound",
    "StrategyInapplicable",
    "InsufficientActive",
    "role_frame",
    "detect_voice",
    "make_spec",
    "apply_tfa",
    "strip_tfa",
    "flip_voice",
    "build_challenge_set",
]

logger = logging.getLogger(__name__)

AGENT = "Agent"
TOPIC = "TOPIC"
PAIR_ROLES = ("Patient", "Theme", "Experiencer", "Result", "Source")
_ARG_ROLES = frozenset(PAIR_ROLES) | {AGENT}


class TfaError(ValueError):
    pass


class AmbiguousVoice(TfaError):
    pass


class TopicNotFound(TfaError):
    pass


class StrategyInapplicable(TfaError):
    pass


class InsufficientActive(UserWarning):
    pass


class Voice(str, Enum):
    ACTIVE = "active"
    PASSIVE = "passive"
    NOT_TRANSITIVE = "not_transitive"

    @property
    def opposite(self) -> "Voice":
        if self is Voice.ACTIVE:
            return Voice.PASSIVE
        if self is Voice.PASSIVE:
            return Voice.ACTIVE
        return self


@dataclass(frozen=True)
class VoiceType:
    voice: Voice
    pair: str | None = None  # the non-Agent role of the transitive frame

    def __post_init__(self):
        if (self.pair is None) != (self.voice is Voice.NOT_TRANSITIVE):
            raise ValueError("pair must be given iff the frame is transitive")

    @property
    def type_name(self) -> str | None:
        return f"{self.pair}->{AGENT}" if self.pair else None

    def to_json(self) -> dict:
        return {"voice": self.voice.value, "pair": self.pair}

    @classmethod
    def from_json(cls, obj: dict) -> "VoiceType":
        return cls(Voice(obj["voice"]), obj.get("pair"))


class Strategy(str, Enum):
    CTC = "ctc"
    BTC = "btc"
    RTR = "rtr"


@dataclass(frozen=True)
class TfaSpec:
    """Which augmentation to apply and where.

    ``topic_node`` is the Levi index of the topic concept (CTC, BTC) or of the
    subject's role label node (RTR). ``partner_node`` is the other argument of
    the same frame; it is what ``flip_voice`` moves the topic to.
    """

    strategy: Strategy
    topic_node: int
    partner_node: int | None = None

    def to_json(self) -> dict:
        return {"strategy": self.strategy.value, "topic": self.topic_node, "partner": self.partner_node}

    @classmethod
    def from_json(cls, obj: dict) -> "TfaSpec":
        return cls(Strategy(obj["strategy"]), obj["topic"], obj.get("partner"))


@dataclass(frozen=True)
class VoiceFrame:
    """Drg indices of the main verb's transitive frame."""

    verb: int
    agent_edge: int
    other_edge: int
    agent: int
    other: int
    pair: str


def role_frame(g: Drg) -> VoiceFrame | None:
    """Frame of the first verb carrying an Agent role, if it is transitive.

    Transitive means exactly one of the five pair roles besides the Agent.
    """
    for v, node in enumerate(g.nodes):
        if node.kind is not NodeKind.CONCEPT or node.pos != "v":
            continue
        roles = [(k, e) for k, e in enumerate(g.edges) if e.src == v and e.kind == "role"]
        agents = [(k, e) for k, e in roles if e.label == AGENT]
        if not agents:
            continue
        others = [(k, e) for k, e in roles if e.label in PAIR_ROLES]
        if len(agents) != 1 or len(others) != 1:
            return None
        (ka, ea), (ko, eo) = agents[0], others[0]
        return VoiceFrame(v, ka, ko, ea.dst, eo.dst, eo.label)
    return None


def detect_voice(g: Drg) -> VoiceType:
    frame = role_frame(g)
    if frame is None:
        return VoiceType(Voice.NOT_TRANSITIVE)
    agent_off = g.edges[frame.agent_edge].offset
    other_off = g.edges[frame.other_edge].offset
    if agent_off is None or other_off is None:
        raise AmbiguousVoice(f"{g.source_id}: role target is a constant, order unknown")
    if agent_off < 0 < other_off:
        return VoiceType(Voice.ACTIVE, frame.pair)
    if other_off < 0 < agent_off:
        return VoiceType(Voice.PASSIVE, frame.pair)
    raise AmbiguousVoice(
        f"{g.source_id}: {AGENT} {agent_off:+d} and {frame.pair} {other_off:+d} point the same way"
    )


def make_spec(strategy: Strategy, frame: VoiceFrame, voice: VoiceType, alignment: LeviAlignment) -> TfaSpec:
    """Spec marking the grammatical subject for the given voice."""
    strategy = Strategy(strategy)
    if voice.voice is Voice.NOT_TRANSITIVE:
        raise StrategyInapplicable("no transitive frame")
    active = voice.voice is Voice.ACTIVE
    if strategy is Strategy.RTR:
        subj, obj = frame.agent_edge, frame.other_edge
        if not active:
            subj, obj = obj, subj
        return TfaSpec(strategy, alignment.edges[subj], alignment.edges[obj])
    subj, obj = frame.agent, frame.other
    if not active:
        subj, obj = obj, subj
    return TfaSpec(strategy, alignment.nodes[subj], alignment.nodes[obj])


def _defaults(g: LeviGraph):
    out: dict[int, list[int]] = {}
    inc: dict[int, list[int]] = {}
    for a, b in g.default_edges():
        out.setdefault(a, []).append(b)
        inc.setdefault(b, []).append(a)
    return out, inc


def _partner(g: LeviGraph, spec: TfaSpec) -> int:
    """Other argument of the frame the topic belongs to."""
    out, inc = _defaults(g)
    tok = g.nodes

    def siblings(label: int) -> list[int]:
        want = frozenset(PAIR_ROLES) if tok[label].token == AGENT else {AGENT}
        found = []
        for verb in inc.get(label, []):
            found += [l2 for l2 in out.get(verb, []) if l2 != label and tok[l2].token in want]
        return found

    if spec.strategy is Strategy.RTR:
        labels = [spec.topic_node]
    else:
        labels = [l for l in inc.get(spec.topic_node, []) if tok[l].token in _ARG_ROLES]
    for label in labels:
        for l2 in siblings(label):
            if spec.strategy is Strategy.RTR:
                return l2
            targets = [t for t in out.get(l2, []) if tok[t].kind is LeviKind.ORIGINAL]
            if targets:
                return targets[0]
    raise StrategyInapplicable(f"no partner argument for node {spec.topic_node}")


def _membership_box(g: LeviGraph, concept: int) -> int:
    out, inc = _defaults(g)
    for label in inc.get(concept, []):
        if g.nodes[label].token != MEMBER:
            continue
        for box in inc.get(label, []):
            if g.nodes[box].token == BOX:
                return box
    raise TopicNotFound(f"node {concept} is not a member of any box")


def _check(g: LeviGraph, spec: TfaSpec) -> None:
    if not 0 <= spec.topic_node < len(g):
        raise TopicNotFound(f"topic node {spec.topic_node} out of range")
    node = g.nodes[spec.topic_node]
    if spec.strategy is Strategy.RTR:
        if node.kind is not LeviKind.LABEL or node.token not in _ARG_ROLES:
            raise TopicNotFound(f"RTR topic must be a role label node, got {node.token!r}")
    elif node.kind is not LeviKind.ORIGINAL or node.token == BOX:
        raise TopicNotFound(f"topic must be a concept node, got {node.token!r}")


def apply_tfa(g: LeviGraph, spec: TfaSpec) -> LeviGraph:
    _check(g, spec)
    b = _LeviBuilder(g.nodes, g.edges)
    t = spec.topic_node
    if spec.strategy is Strategy.CTC:
        topic = b.node(TOPIC, LeviKind.LABEL)
        b.link(t, topic)
        b.link(topic, t)
        b.self_loop(topic)
    elif spec.strategy is Strategy.BTC:
        box = _membership_box(g, t)
        topic = b.node(TOPIC, LeviKind.LABEL)
        b.link(box, topic)
        b.link(topic, t)
        b.self_loop(topic)
    else:
        partner = spec.partner_node if spec.partner_node is not None else _partner(g, spec)
        b.link(t, partner)
    return b.build(g.source_id)


def _remove_last(edges: list, edge: tuple) -> None:
    for k in range(len(edges) - 1, -1, -1):
        if edges[k] == edge:
            del edges[k]
            return
    raise TopicNotFound(f"edge {edge} not present")


def strip_tfa(g: LeviGraph, spec: TfaSpec) -> tuple[LeviGraph, TfaSpec]:
    """Undo ``apply_tfa``; returns the base graph and the spec re-indexed to it."""
    if spec.strategy is Strategy.RTR:
        edges = list(g.edges)
        _remove_last(edges, (spec.topic_node, spec.partner_node, Dir.DEFAULT))
        _remove_last(edges, (spec.partner_node, spec.topic_node, Dir.REVERSE))
        return LeviGraph(g.nodes, tuple(edges), g.source_id), spec
    topics = [
        a
        for a, b in g.default_edges()
        if b == spec.topic_node and g.nodes[a].token == TOPIC and g.nodes[a].kind is LeviKind.LABEL
    ]
    if not topics:
        raise TopicNotFound(f"no {TOPIC} node attached to {spec.topic_node}")
    drop = topics[-1]

    def shift(i):
        return i - 1 if i is not None and i > drop else i

    nodes = g.nodes[:drop] + g.nodes[drop + 1 :]
    edges = tuple((shift(a), shift(b), d) for a, b, d in g.edges if drop not in (a, b))
    return (
        LeviGraph(nodes, edges, g.source_id),
        TfaSpec(spec.strategy, shift(spec.topic_node), shift(spec.partner_node)),
    )


def flip_voice(g: LeviGraph, spec: TfaSpec) -> tuple[LeviGraph, TfaSpec]:
    """Move the topic marking to the other argument of the frame."""
    spec = TfaSpec(Strategy(spec.strategy), spec.topic_node, spec.partner_node)
    if spec.partner_node is None:
        spec = TfaSpec(spec.strategy, spec.topic_node, _partner(g, spec))
    base, spec = strip_tfa(g, spec)
    flipped = TfaSpec(spec.strategy, spec.partner_node, spec.topic_node)
    return apply_tfa(base, flipped), flipped


def build_challenge_set(corpus, seed: int, stratify: bool = True) -> list:
    """Balanced active/passive evaluation set.

    ``corpus`` holds ``(graph, reference, VoiceType)`` rows. All passive rows
    are kept; an equal number of active rows is drawn, per role-pair type when
    ``stratify`` is set. Interrogatives are dropped first.
    """
    rng = random.Random(seed)
    rows = [r for r in corpus if not is_interrogative(r[1])]
    passive = [i for i, r in enumerate(rows) if r[2].voice is Voice.PASSIVE]
    active = [i for i, r in enumerate(rows) if r[2].voice is Voice.ACTIVE]
    if not passive:
        warnings.warn("corpus has no passive instances; challenge set is empty", InsufficientActive)
        return []

    chosen: list[int] = []
    if stratify:
        deficit = 0
        for pair in PAIR_ROLES:
            want = sum(1 for i in passive if rows[i][2].pair == pair)
            pool = [i for i in active if rows[i][2].pair == pair]
            if len(pool) < want:
                warnings.warn(
                    f"{pair}->{AGENT}: {want} passive but only {len(pool)} active; "
                    "filling the rest unstratified",
                    InsufficientActive,
                )
                deficit += want - len(pool)
                chosen += pool
            else:
                chosen += rng.sample(pool, want)
        if deficit:
            rest = [i for i in active if i not in set(chosen)]
            if len(rest) < deficit:
                warnings.warn(f"only {len(rest)} active rows left for a deficit of {deficit}", InsufficientActive)
                deficit = len(rest)
            chosen += rng.sample(rest, deficit)
    else:
        n = min(len(passive), len(active))
        if n < len(passive):
            warnings.warn(f"{len(passive)} passive but only {len(active)} active", InsufficientActive)
        chosen = rng.sample(active, n)
    logger.info("challenge set: %d passive + %d active", len(passive), len(chosen))
    return [rows[i] for i in passive] + [rows[i] for i in sorted(chosen)]

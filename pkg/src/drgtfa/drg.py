"""Discourse Representation Graphs and their extended Levi form."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum, IntEnum

from .sbn import RelativeIndex, SbnDocument, split_synset

__all__ = [
    "NodeKind",
    "DrgNode",
    "DrgEdge",
    "Drg",
    "Dir",
    "LeviKind",
    "LeviNode",
    "LeviGraph",
    "LeviAlignment",
    "MEMBER",
    "BOX",
    "build_drg",
    "to_levi",
    "linearize",
    "surface_form",
]

MEMBER = "member"
BOX = "Box"

_MULTIWORD = re.compile(r"[~_\s]+")


class NodeKind(str, Enum):
    CONCEPT = "concept"
    CONSTANT = "constant"
    BOX = "box"


@dataclass(frozen=True)
class DrgNode:
    kind: NodeKind
    token: str
    line: int | None = None  # SBN line index for heads
    box: int | None = None  # box id for box nodes, owning box for heads

    @property
    def pos(self) -> str | None:
        parts = split_synset(self.token) if self.kind is NodeKind.CONCEPT else None
        return parts[1] if parts else None


@dataclass(frozen=True)
class DrgEdge:
    src: int
    label: str
    dst: int
    kind: str = "role"  # role | member | relation
    offset: int | None = None  # SBN slot offset, kept for voice detection


@dataclass(frozen=True)
class Drg:
    nodes: tuple[DrgNode, ...]
    edges: tuple[DrgEdge, ...]
    source_id: str = ""
    line_nodes: tuple[int | None, ...] = ()

    def box_node(self, box_id: int) -> int:
        for i, node in enumerate(self.nodes):
            if node.kind is NodeKind.BOX and node.box == box_id:
                return i
        raise KeyError(box_id)

    def out_edges(self, node: int) -> list[DrgEdge]:
        return [e for e in self.edges if e.src == node]


def build_drg(doc: SbnDocument) -> Drg:
    nodes: list[DrgNode] = []
    line_nodes: list[int | None] = []
    for i, line in enumerate(doc.lines):
        if line.is_relation:
            line_nodes.append(None)
            continue
        kind = NodeKind.CONCEPT if line.is_synset else NodeKind.CONSTANT
        line_nodes.append(len(nodes))
        nodes.append(DrgNode(kind, line.head, i, line.box_id))

    box_nodes = []
    for b in range(doc.n_boxes):
        box_nodes.append(len(nodes))
        nodes.append(DrgNode(NodeKind.BOX, BOX, None, b))

    def line_target(i: int) -> int:
        # a role pointing at a relation line lands on the box it opens
        idx = line_nodes[i]
        return idx if idx is not None else box_nodes[doc.lines[i].box_id]

    edges: list[DrgEdge] = []
    for i, line in enumerate(doc.lines):
        if line.is_relation:
            continue
        src = line_nodes[i]
        for label, target in line.slots:
            if isinstance(target, RelativeIndex):
                dst = line_target(doc.resolve(i, target.offset))
                edges.append(DrgEdge(src, label, dst, "role", target.offset))
            else:
                nodes.append(DrgNode(NodeKind.CONSTANT, target.atom))
                edges.append(DrgEdge(src, label, len(nodes) - 1, "role", None))

    for b, box_idx in enumerate(box_nodes):
        for i, line in enumerate(doc.lines):
            if line.box_id == b and line_nodes[i] is not None:
                edges.append(DrgEdge(box_idx, MEMBER, line_nodes[i], "member"))

    for line in doc.lines:
        if line.is_relation:
            parent = line.box_id - (line.box_ref or 1)
            edges.append(DrgEdge(box_nodes[parent], line.head, box_nodes[line.box_id], "relation"))

    return Drg(tuple(nodes), tuple(edges), doc.source_id, tuple(line_nodes))


class Dir(IntEnum):
    DEFAULT = 0
    REVERSE = 1
    SELF = 2

    @property
    def json_name(self) -> str:
        return ("default", "reverse", "self")[self]

    @classmethod
    def from_json(cls, name: str) -> "Dir":
        return cls(("default", "reverse", "self").index(name))


class LeviKind(str, Enum):
    ORIGINAL = "original"
    LABEL = "label"


@dataclass(frozen=True)
class LeviNode:
    token: str
    kind: LeviKind = LeviKind.ORIGINAL


@dataclass(frozen=True)
class LeviAlignment:
    nodes: tuple[int, ...]  # Drg node index -> Levi node index
    edges: tuple[int, ...]  # Drg edge index -> Levi label node index

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes), "edges": list(self.edges)}

    @classmethod
    def from_json(cls, obj: dict) -> "LeviAlignment":
        return cls(tuple(obj["nodes"]), tuple(obj["edges"]))


@dataclass(frozen=True)
class LeviGraph:
    nodes: tuple[LeviNode, ...]
    edges: tuple[tuple[int, int, Dir], ...]
    source_id: str = ""

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def tokens(self) -> list[str]:
        return [n.token for n in self.nodes]

    def default_edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a, b, d in self.edges if d is Dir.DEFAULT]

    def count(self, direction: Dir) -> int:
        return sum(1 for e in self.edges if e[2] is direction)

    def to_json(self, alignment: LeviAlignment | None = None) -> dict:
        obj = {
            "nodes": [{"id": i, "token": n.token, "kind": n.kind.value} for i, n in enumerate(self.nodes)],
            "edges": [{"src": a, "dst": b, "dir": d.json_name} for a, b, d in self.edges],
        }
        if alignment is not None:
            obj["alignment"] = alignment.to_json()
        if self.source_id:
            obj["source_id"] = self.source_id
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "LeviGraph":
        nodes = tuple(LeviNode(n["token"], LeviKind(n["kind"])) for n in obj["nodes"])
        edges = tuple((e["src"], e["dst"], Dir.from_json(e["dir"])) for e in obj["edges"])
        return cls(nodes, edges, obj.get("source_id", ""))


class _LeviBuilder:
    def __init__(self, nodes=(), edges=()):
        self.nodes = list(nodes)
        self.edges = list(edges)

    def node(self, token: str, kind: LeviKind) -> int:
        self.nodes.append(LeviNode(token, kind))
        return len(self.nodes) - 1

    def link(self, a: int, b: int) -> None:
        self.edges.append((a, b, Dir.DEFAULT))
        self.edges.append((b, a, Dir.REVERSE))

    def self_loop(self, a: int) -> None:
        self.edges.append((a, a, Dir.SELF))

    def build(self, source_id: str = "") -> LeviGraph:
        return LeviGraph(tuple(self.nodes), tuple(self.edges), source_id)


def _unquote(atom: str) -> str:
    return atom[1:-1] if len(atom) >= 2 and atom[0] == atom[-1] == '"' else atom


def _constant_tokens(atom: str) -> list[str]:
    text = _unquote(atom)
    parts = [p for p in _MULTIWORD.split(text) if p]
    return parts or [text]


def to_levi(g: Drg, split_multiword: bool = True) -> tuple[LeviGraph, LeviAlignment]:
    """Replace every labeled edge by a fresh label node and two plain edges.

    Multiword constants become a chain of token nodes linked by plain edges;
    incoming edges attach to the first token. Every plain edge gets a reverse
    mirror and every node one self-loop.
    """
    b = _LeviBuilder()
    node_map = []
    chains = []
    for node in g.nodes:
        if node.kind is NodeKind.CONSTANT:
            parts = _constant_tokens(node.token) if split_multiword else [_unquote(node.token)]
            ids = [b.node(p, LeviKind.ORIGINAL) for p in parts]
            node_map.append(ids[0])
            chains.extend(zip(ids, ids[1:]))
        else:
            node_map.append(b.node(node.token, LeviKind.ORIGINAL))
    edge_map = []
    for e in g.edges:
        edge_map.append(b.node(e.label, LeviKind.LABEL))
    for e, lab in zip(g.edges, edge_map):
        b.link(node_map[e.src], lab)
        b.link(lab, node_map[e.dst])
    for x, y in chains:
        b.link(x, y)
    for i in range(len(b.nodes)):
        b.self_loop(i)
    return b.build(g.source_id), LeviAlignment(tuple(node_map), tuple(edge_map))


def linearize(g: LeviGraph) -> list[str]:
    return g.tokens


def surface_form(node: LeviNode) -> str | None:
    """Word a copied node contributes to the output, or None if not copyable."""
    if node.kind is LeviKind.LABEL or node.token == BOX:
        return None
    parts = split_synset(node.token)
    if parts is not None:
        return parts[0].lower()
    return node.token.lower()

"""Random SBN documents and graphs for property tests."""

from __future__ import annotations

import random

from drgtfa.drg import Dir, LeviGraph, LeviKind, LeviNode
from drgtfa.tfa import AGENT, PAIR_ROLES

NOUNS = ["wolf.n.01", "sheep.n.01", "bee.n.01", "man.n.01", "box.n.02", "city.n.01", "female.n.02", "male.n.02"]
VERBS = ["kill.v.01", "see.v.01", "sting.v.01", "write.v.01", "leave.v.01", "found.v.01"]
OTHER = ["time.n.08", "big.a.01", "quickly.r.01", "tom", '"Anna"', "2010"]
ROLES = ["Agent", "Patient", "Theme", "Time", "Location", "Attribute", "Name", "Quantity", "User", "PartOf"]
RELATIONS = ["NEGATION", "CONTINUATION", "CONTRAST", "POSSIBILITY"]
ATOMS = ["now", "speaker", "2", '"Tom"', "+", "hearer", '"Taro~Akagawa"', '"New York"']


def random_sbn(rng: random.Random, max_lines: int = 12, multiword: bool = False, relations: bool = True) -> str:
    """Random valid SBN text: concept/constant lines with role slots, some relation lines."""
    n = rng.randint(1, max_lines)
    kinds = []
    for i in range(n):
        kinds.append("rel" if relations and i > 0 and rng.random() < 0.15 else "line")
    n_boxes = 0
    out = []
    atoms = ATOMS if multiword else [a for a in ATOMS if "~" not in a and " " not in a]
    for i, kind in enumerate(kinds):
        if kind == "rel":
            n_boxes += 1
            ref = rng.randint(1, n_boxes)
            out.append(f"{rng.choice(RELATIONS)} <{ref}" if rng.random() < 0.5 else rng.choice(RELATIONS))
            continue
        head = rng.choice(NOUNS + VERBS + OTHER)
        slots = []
        for _ in range(rng.choice([0, 0, 1, 1, 2, 3])):
            label = rng.choice(ROLES)
            if rng.random() < 0.7 and n > 1:
                target = rng.choice([j for j in range(n) if j != i])
                slots.append(f"{label} {target - i:+d}")
            else:
                slots.append(f"{label} {rng.choice(atoms)}")
        out.append(" ".join([head] + slots))
    return "\n".join(out) + "\n"


def counts_from_sbn(text: str) -> dict:
    """Expected Drg/Levi sizes computed straight from SBN text, without the library."""
    lines = [ln.split("%")[0].split() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    rel = [ln for ln in lines if ln[0].isupper() and ln[0].isalpha() and len(ln[0]) > 2]
    heads = len(lines) - len(rel)
    slots = sum((len(ln) - 1) // 2 for ln in lines if ln not in rel)
    constants = sum(
        1
        for ln in lines
        if ln not in rel
        for tgt in ln[2::2]
        if not (tgt[0] in "+-" and tgt[1:].isdigit())
    )
    boxes = 1 + len(rel)
    nodes = heads + boxes + constants
    edges = slots + heads + len(rel)  # roles, one member edge per head, one per relation
    return {"nodes": nodes, "edges": edges}


def voiced_sbn(rng: random.Random, voice: str, pair: str | None = None) -> str:
    """A transitive frame in the given voice, padded with random extra lines."""
    pair = pair or rng.choice(PAIR_ROLES)
    subj, obj = rng.sample(NOUNS, 2)
    pre = [rng.choice(NOUNS) for _ in range(rng.randint(0, 2))]
    post = [rng.choice(NOUNS + OTHER[:3]) for _ in range(rng.randint(0, 2))]
    verb = rng.choice(VERBS)
    lines = pre + [subj, "time.n.08 TPR now"]
    vi = len(lines)
    if voice == "active":
        slots = f"{AGENT} {-2:+d} Time -1 {pair} +1"
    else:
        slots = f"{pair} {-2:+d} Time -1 {AGENT} +1"
    lines += [f"{verb} {slots}", obj] + post
    assert lines[vi].startswith(verb)
    return "\n".join(lines) + "\n"


def random_digraph(rng: random.Random, n: int, p: float) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(n) if a != b and rng.random() < p]


def levi_from_edges(n: int, edges, tokens=None) -> LeviGraph:
    """A LeviGraph with the given plain edges, their mirrors and one self-loop per node."""
    tokens = tokens or [f"n{i}" for i in range(n)]
    nodes = tuple(LeviNode(t, LeviKind.ORIGINAL) for t in tokens)
    es = []
    for a, b in edges:
        es.append((a, b, Dir.DEFAULT))
        es.append((b, a, Dir.REVERSE))
    es += [(i, i, Dir.SELF) for i in range(n)]
    return LeviGraph(nodes, tuple(es))


def permute_levi(g: LeviGraph, perm) -> LeviGraph:
    """Relabel node i as perm[i]."""
    nodes = [None] * len(g)
    for i, node in enumerate(g.nodes):
        nodes[perm[i]] = node
    edges = tuple((perm[a], perm[b], d) for a, b, d in g.edges)
    return LeviGraph(tuple(nodes), edges, g.source_id)

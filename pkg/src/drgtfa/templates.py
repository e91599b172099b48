"""Template-generated transitive sentences with matching SBN.

Used for the bundled fixture corpus, the voice-control experiment and tests;
the Parallel Meaning Bank itself is licensed and not shipped.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .tfa import AGENT, Voice

__all__ = ["TemplateItem", "VERBS", "NOUNS", "NAMES", "make_item", "template_corpus", "write_corpus"]

# lemma, past, participle, non-Agent role
VERBS = [
    ("kill", "killed", "killed", "Patient"),
    ("bite", "bit", "bitten", "Patient"),
    ("eat", "ate", "eaten", "Patient"),
    ("push", "pushed", "pushed", "Patient"),
    ("found", "founded", "founded", "Theme"),
    ("chase", "chased", "chased", "Theme"),
    ("follow", "followed", "followed", "Theme"),
    ("sting", "stung", "stung", "Experiencer"),
    ("scare", "scared", "scared", "Experiencer"),
    ("surprise", "surprised", "surprised", "Experiencer"),
    ("write", "wrote", "written", "Result"),
    ("build", "built", "built", "Result"),
    ("paint", "painted", "painted", "Result"),
    ("desert", "deserted", "deserted", "Source"),
    ("leave", "left", "left", "Source"),
    ("rob", "robbed", "robbed", "Source"),
]

NOUNS = [
    "wolf", "sheep", "dog", "cat", "bee", "man", "woman", "girl", "boy", "farmer",
    "teacher", "student", "intruder", "friend", "doctor", "artist", "soldier", "king", "bird", "horse",
]

# (synset, name) ; multiword names use '~' as in the constant atoms
NAMES = [
    ("male.n.02", "Tom"),
    ("female.n.02", "Anna"),
    ("male.n.02", "Bill"),
    ("female.n.02", "Mary"),
    ("male.n.02", "Taro~Akagawa"),
    ("female.n.02", "Ella~Smith"),
]


@dataclass(frozen=True)
class TemplateItem:
    source_id: str
    sbn: str
    reference: str
    voice: Voice
    pair: str


def _np(arg) -> tuple[str, str]:
    """SBN line and surface phrase for a noun or a name."""
    if isinstance(arg, tuple):
        synset, name = arg
        return f'{synset} Name "{name}"', name.replace("~", " ")
    return f"{arg}.n.01", f"the {arg}"


def make_item(source_id: str, agent, verb, patient, voice: Voice) -> TemplateItem:
    lemma, past, participle, role = verb
    a_line, a_text = _np(agent)
    p_line, p_text = _np(patient)
    if voice is Voice.ACTIVE:
        lines = [a_line, "time.n.08 TPR now", f"{lemma}.v.01 {AGENT} -2 Time -1 {role} +1", p_line]
        text = f"{a_text} {past} {p_text}."
    else:
        lines = [p_line, "time.n.08 TPR now", f"{lemma}.v.01 {role} -2 Time -1 {AGENT} +1", a_line]
        text = f"{p_text} was {participle} by {a_text}."
    return TemplateItem(source_id, "\n".join(lines) + "\n", text[0].upper() + text[1:], voice, role)


def template_corpus(n: int, seed: int = 0, name_rate: float = 0.2, prefix: str = "t") -> list[TemplateItem]:
    """``n`` items, alternating active and passive.

    No (agent, verb, patient) triple repeats, and the two arguments differ.
    """
    rng = random.Random(seed)
    items = []
    seen = set()
    for k in range(n):
        while True:
            verb = VERBS[rng.randrange(len(VERBS))]
            args = []
            while len(args) < 2:
                pool = NAMES if rng.random() < name_rate else NOUNS
                cand = pool[rng.randrange(len(pool))]
                if cand not in args:
                    args.append(cand)
            if (args[0], verb, args[1]) not in seen:
                seen.add((args[0], verb, args[1]))
                break
        voice = Voice.ACTIVE if k % 2 == 0 else Voice.PASSIVE
        items.append(make_item(f"{prefix}{k:04d}", args[0], verb, args[1], voice))
    return items


def write_corpus(items, directory) -> Path:
    """Write one ``.sbn`` file per item plus ``manifest.tsv`` with inline references."""
    directory = Path(directory)
    (directory / "sbn").mkdir(parents=True, exist_ok=True)
    rows = []
    for item in items:
        rel = f"sbn/{item.source_id}.sbn"
        (directory / rel).write_text(item.sbn, encoding="utf-8")
        rows.append(f"{rel}\t{item.reference}")
    manifest = directory / "manifest.tsv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest

"""Sequential box notation (SBN) reader and writer.

Supported grammar, one DRS condition per line::

    line     := head (label target)*        concept or constant line
              | RELATION ['<' k]            discourse relation, opens a new box
    target   := ('+' | '-') k               relative line reference, k > 0
              | atom                        constant (quoted string, number, token)

``%`` starts a comment, both as a full line and after the last token of a
line. Quoted strings may contain spaces. Relation lines take an optional
``<k`` box reference naming the box they attach to (``k`` boxes back,
default 1).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

__all__ = [
    "SbnError",
    "UnresolvableReference",
    "MalformedSynset",
    "EmptyDocument",
    "MissingFile",
    "RelativeIndex",
    "Constant",
    "SlotTarget",
    "SbnLine",
    "SbnDocument",
    "RELATIONS",
    "parse_sbn",
    "serialize_sbn",
    "load_corpus",
    "split_synset",
    "is_interrogative",
]

logger = logging.getLogger(__name__)

RELATIONS = frozenset(
    {
        "ALTERNATION",
        "ATTRIBUTION",
        "CONDITION",
        "CONSEQUENCE",
        "CONTINUATION",
        "CONTRAST",
        "EXPLANATION",
        "NECESSITY",
        "NEGATION",
        "POSSIBILITY",
        "PRECONDITION",
        "RESULT",
        "SOURCE",
    }
)

_TOKEN = re.compile(r'"(?:[^"\\]|\\.)*"|\S+')
_SYNSET = re.compile(r"^(?P<lemma>.+)\.(?P<pos>[nvar])\.(?P<sense>\d+)$")
_OFFSET = re.compile(r"^[+-]\d+$")
_BOX_REF = re.compile(r"^<(\d+)$")
_NUMBER = re.compile(r"^[+-]?\d+(?:[.,]\d+)*$")
_RELATION_LIKE = re.compile(r"^[A-Z][A-Z-]{2,}$")


class SbnError(ValueError):
    pass


class UnresolvableReference(SbnError):
    def __init__(self, line: int, offset: int):
        super().__init__(f"line {line}: reference {offset:+d} points outside the document")
        self.line = line
        self.offset = offset


class MalformedSynset(SbnError):
    def __init__(self, token: str):
        super().__init__(f"malformed synset {token!r}")
        self.token = token


class EmptyDocument(SbnError):
    pass


class MissingFile(SbnError, FileNotFoundError):
    pass


@dataclass(frozen=True)
class RelativeIndex:
    offset: int

    def __post_init__(self):
        if self.offset == 0:
            raise SbnError("relative index must be non-zero")

    def __str__(self) -> str:
        return f"{self.offset:+d}"


@dataclass(frozen=True)
class Constant:
    atom: str

    def __str__(self) -> str:
        return self.atom


SlotTarget = Union[RelativeIndex, Constant]


def split_synset(token: str) -> tuple[str, str, int] | None:
    """Return ``(lemma, pos, sense)`` for a WordNet synset atom, else None."""
    m = _SYNSET.match(token)
    if m is None:
        return None
    return m.group("lemma"), m.group("pos"), int(m.group("sense"))


@dataclass(frozen=True)
class SbnLine:
    head: str
    slots: tuple[tuple[str, SlotTarget], ...] = ()
    box_id: int = 0
    box_ref: int | None = None

    @property
    def is_relation(self) -> bool:
        return _RELATION_LIKE.match(self.head) is not None

    @property
    def is_synset(self) -> bool:
        return _SYNSET.match(self.head) is not None

    @property
    def pos(self) -> str | None:
        parts = split_synset(self.head)
        return parts[1] if parts else None


@dataclass(frozen=True)
class SbnDocument:
    lines: tuple[SbnLine, ...]
    source_id: str = ""

    def __len__(self) -> int:
        return len(self.lines)

    @property
    def n_boxes(self) -> int:
        return (self.lines[-1].box_id + 1) if self.lines else 0

    def resolve(self, index: int, offset: int) -> int:
        target = index + offset
        if not 0 <= target < len(self.lines):
            raise UnresolvableReference(index + 1, offset)
        return target


def _tokenize(line: str) -> list[str]:
    tokens = []
    for tok in _TOKEN.findall(line):
        if tok.startswith("%"):
            break
        tokens.append(tok)
    return tokens


def _check_head(head: str) -> None:
    if head.startswith('"') or _NUMBER.match(head):
        return
    if "." in head and _SYNSET.match(head) is None:
        raise MalformedSynset(head)


def parse_sbn(text: str, source_id: str = "") -> SbnDocument:
    lines: list[SbnLine] = []
    box = 0
    for raw in text.splitlines():
        tokens = _tokenize(raw)
        if not tokens:
            continue
        head, rest = tokens[0], tokens[1:]
        if _RELATION_LIKE.match(head):
            if head not in RELATIONS:
                logger.warning("%s: unknown relation %s treated as box relation", source_id, head)
            box_ref = None
            if rest:
                m = _BOX_REF.match(rest[0])
                if len(rest) != 1 or m is None or int(m.group(1)) == 0:
                    raise SbnError(f"line {len(lines) + 1}: bad box reference {' '.join(rest)!r}")
                box_ref = int(m.group(1))
            box += 1
            lines.append(SbnLine(head, (), box, box_ref))
            continue
        _check_head(head)
        if len(rest) % 2:
            raise SbnError(f"line {len(lines) + 1}: role {rest[-1]!r} has no target")
        slots = []
        for label, target in zip(rest[::2], rest[1::2]):
            if _OFFSET.match(target):
                offset = int(target)
                if offset == 0:
                    raise SbnError(f"line {len(lines) + 1}: zero offset")
                slots.append((label, RelativeIndex(offset)))
            else:
                slots.append((label, Constant(target)))
        lines.append(SbnLine(head, tuple(slots), box))

    if not lines:
        raise EmptyDocument(f"{source_id or '<text>'}: no SBN lines")
    doc = SbnDocument(tuple(lines), source_id)
    for i, line in enumerate(doc.lines):
        for _, target in line.slots:
            if isinstance(target, RelativeIndex):
                doc.resolve(i, target.offset)
        if line.box_ref is not None and line.box_id - line.box_ref < 0:
            raise UnresolvableReference(i + 1, -line.box_ref)
    return doc


def serialize_sbn(doc: SbnDocument) -> str:
    out = []
    for line in doc.lines:
        parts = [line.head]
        if line.box_ref is not None:
            parts.append(f"<{line.box_ref}")
        for label, target in line.slots:
            parts.extend((label, str(target)))
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def is_interrogative(text: str) -> bool:
    return text.rstrip().endswith("?")


def _is_file(path: Path) -> bool:
    try:
        return path.is_file()
    except OSError:
        return False


def load_corpus(manifest_path, errors: list | None = None) -> list[tuple[SbnDocument, str]]:
    """Load ``(document, reference)`` pairs listed in a TSV manifest.

    Each row is ``<sbn_path>\\t<reference>``, where the reference is either a
    path to a text file or the text itself. Relative paths resolve against
    the manifest's directory. Rows that fail are logged, appended to
    ``errors`` as ``(row_number, message)`` and skipped.
    """
    manifest = Path(manifest_path)
    if not manifest.is_file():
        raise MissingFile(f"manifest not found: {manifest}")
    base = manifest.parent
    pairs = []
    for row_no, row in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not row.strip() or row.startswith("#"):
            continue
        sbn_field, _, ref_field = row.partition("\t")
        try:
            sbn_path = base / sbn_field.strip()
            if not sbn_path.is_file():
                raise MissingFile(f"SBN file not found: {sbn_path}")
            doc = parse_sbn(sbn_path.read_text(encoding="utf-8"), sbn_field.strip())
            ref_path = base / ref_field.strip() if ref_field.strip() else None
            if ref_path is not None and _is_file(ref_path):
                reference = ref_path.read_text(encoding="utf-8").strip()
            else:
                reference = ref_field.strip()
        except (SbnError, OSError) as exc:
            logger.error("manifest row %d skipped: %s", row_no, exc)
            if errors is not None:
                errors.append((row_no, str(exc)))
            continue
        pairs.append((doc, reference))
    return pairs

"""Discourse treebank data model, bracketed serialization, and synthesis.

A treebank is a list of (document, tree) pairs.  Documents are sequences of
EDUs (elementary discourse units); trees are strictly binary, with a
nuclearity tag (NN / NS / SN) and a relation label at every internal node.

File format (one record per block, blocks separated by a blank line)::

    #relations attribution cause elaboration
    #doc wsj_0601 news
    (NS elaboration (leaf "it rained") (leaf "so we left"))

The optional ``#relations`` header declares inventory labels that may not be
used by any record; the loaded inventory is the sorted union of declared and
used labels.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from random import Random
from typing import Iterator, Union

from .errors import InvalidConfig, InvalidTree, MalformedSyntax

NUCLEARITIES = ("NN", "NS", "SN")

_RELATION_RE = re.compile(r"[a-z_-]+\Z")


def tokenize_text(text: str) -> tuple[str, ...]:
    """Lowercase + whitespace-split; the only tokenizer used anywhere."""
    return tuple(text.lower().split())


@dataclass(frozen=True)
class EDU:
    id: int
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Leaf:
    edu_id: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.edu_id, self.edu_id)


@dataclass(frozen=True)
class Internal:
    nuclearity: str
    relation: str
    left: "DiscourseNode"
    right: "DiscourseNode"

    @cached_property
    def span(self) -> tuple[int, int]:
        return (self.left.span[0], self.right.span[1])


DiscourseNode = Union[Leaf, Internal]


@dataclass(frozen=True)
class Document:
    doc_id: str
    edus: tuple[EDU, ...]

    @property
    def n_edus(self) -> int:
        return len(self.edus)


@dataclass(frozen=True)
class Treebank:
    name: str
    domain_tag: str
    relation_inventory: tuple[str, ...]
    entries: tuple[tuple[Document, DiscourseNode], ...]

    def __len__(self) -> int:
        return len(self.entries)


def iter_leaves(node: DiscourseNode) -> Iterator[Leaf]:
    if isinstance(node, Leaf):
        yield node
    else:
        yield from iter_leaves(node.left)
        yield from iter_leaves(node.right)


def iter_internal(node: DiscourseNode) -> Iterator[Internal]:
    if isinstance(node, Internal):
        yield node
        yield from iter_internal(node.left)
        yield from iter_internal(node.right)


# ---------------------------------------------------------------------------
# Bracketed format
# ---------------------------------------------------------------------------

_TOK_OPEN = "("
_TOK_CLOSE = ")"


def _lex(text: str) -> list[tuple[str, str]]:
    """Tokenize into (kind, value) pairs; kind in {open, close, symbol, string}."""
    out = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == "(":
            out.append(("open", c))
            i += 1
        elif c == ")":
            out.append(("close", c))
            i += 1
        elif c == '"':
            i += 1
            buf = []
            while True:
                if i >= n:
                    raise MalformedSyntax("unterminated string literal")
                c = text[i]
                if c == "\\":
                    if i + 1 >= n:
                        raise MalformedSyntax("dangling escape at end of input")
                    nxt = text[i + 1]
                    if nxt not in ('"', "\\"):
                        raise MalformedSyntax(f"unsupported escape \\{nxt}")
                    buf.append(nxt)
                    i += 2
                elif c == '"':
                    i += 1
                    break
                else:
                    buf.append(c)
                    i += 1
            out.append(("string", "".join(buf)))
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '()"':
                j += 1
            out.append(("symbol", text[i:j]))
            i = j
    return out


class _TokenStream:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def next(self) -> tuple[str, str]:
        if self.pos >= len(self.tokens):
            raise MalformedSyntax("unexpected end of input (unbalanced parentheses?)")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _parse_node(stream: _TokenStream, leaf_texts: list[str]) -> DiscourseNode:
    kind, value = stream.next()
    if kind != "open":
        raise MalformedSyntax(f"expected '(' but found {value!r}")
    kind, head = stream.next()
    if kind != "symbol":
        raise MalformedSyntax(f"expected a node keyword after '(' but found {head!r}")

    if head == "leaf":
        kind, text = stream.next()
        if kind != "string":
            raise MalformedSyntax('leaf node must contain exactly one quoted string')
        kind, value = stream.next()
        if kind != "close":
            raise MalformedSyntax("leaf node must contain exactly one quoted string")
        if not tokenize_text(text):
            raise InvalidTree("leaf with empty text (EDUs must have at least one token)")
        leaf_texts.append(text)
        return Leaf(edu_id=len(leaf_texts))

    if head not in NUCLEARITIES:
        raise InvalidTree(f"unknown nuclearity tag {head!r} (expected NN, NS, or SN)")
    kind, relation = stream.next()
    if kind != "symbol" or not _RELATION_RE.match(relation):
        raise MalformedSyntax(f"bad relation label {relation!r} (expected [a-z_-]+)")

    children = []
    while True:
        if stream.done():
            raise MalformedSyntax("unexpected end of input (unbalanced parentheses?)")
        if stream.tokens[stream.pos][0] == "close":
            stream.next()
            break
        children.append(_parse_node(stream, leaf_texts))
    if len(children) != 2:
        raise InvalidTree(
            f"internal node has {len(children)} children; trees must be strictly binary"
        )
    return Internal(head, relation, children[0], children[1])


def parse_bracketed(text: str, doc_id: str = "doc") -> tuple[Document, DiscourseNode]:
    """Parse one bracketed tree; leaf texts become EDUs numbered 1..n."""
    stream = _TokenStream(_lex(text))
    leaf_texts: list[str] = []
    tree = _parse_node(stream, leaf_texts)
    if not stream.done():
        raise MalformedSyntax("trailing input after the closing parenthesis")
    edus = tuple(EDU(i + 1, tokenize_text(t)) for i, t in enumerate(leaf_texts))
    return Document(doc_id, edus), tree


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def serialize_bracketed(doc: Document, tree: DiscourseNode) -> str:
    """Canonical single-line rendering; inverse of :func:`parse_bracketed`."""
    if isinstance(tree, Leaf):
        text = " ".join(doc.edus[tree.edu_id - 1].tokens)
        return f'(leaf "{_escape(text)}")'
    left = serialize_bracketed(doc, tree.left)
    right = serialize_bracketed(doc, tree.right)
    return f"({tree.nuclearity} {tree.relation} {left} {right})"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(
    doc: Document,
    tree: DiscourseNode,
    relation_inventory: tuple[str, ...] | None = None,
) -> list[str]:
    """Return a list of invariant violations (empty list = valid).

    Each message names the offending node path (root, root.left, ...).
    """
    violations: list[str] = []
    n = doc.n_edus
    if n < 1:
        violations.append("doc: document has no EDUs")
    for i, edu in enumerate(doc.edus):
        if edu.id != i + 1:
            violations.append(f"doc.edus[{i}]: id {edu.id} breaks the 1..n numbering")
        if not edu.tokens:
            violations.append(f"doc.edus[{i}]: empty token list")

    leaf_ids: list[tuple[str, int]] = []

    def walk(node: DiscourseNode, path: str) -> None:
        if isinstance(node, Leaf):
            leaf_ids.append((path, node.edu_id))
            return
        if node.nuclearity not in NUCLEARITIES:
            violations.append(f"{path}: unknown nuclearity {node.nuclearity!r}")
        if not _RELATION_RE.match(node.relation):
            violations.append(f"{path}: malformed relation label {node.relation!r}")
        elif relation_inventory is not None and node.relation not in relation_inventory:
            violations.append(
                f"{path}: relation {node.relation!r} not in the declared inventory"
            )
        walk(node.left, path + ".left")
        walk(node.right, path + ".right")

    walk(tree, "root")

    in_range = True
    for path, edu_id in leaf_ids:
        if not 1 <= edu_id <= n:
            violations.append(f"{path}: leaf edu_id {edu_id} outside 1..{n}")
            in_range = False
    ids = [i for _, i in leaf_ids]
    if in_range:
        if ids != sorted(ids):
            violations.append("root: leaf edu_ids are not in left-to-right order")
        elif ids != list(range(1, n + 1)):
            violations.append(f"root: leaves cover {ids} instead of 1..{n}")
    return violations


def validate_treebank(tb: Treebank) -> list[str]:
    """Validate every entry; messages are prefixed with the doc_id."""
    out = []
    for doc, tree in tb.entries:
        for v in validate(doc, tree, tb.relation_inventory):
            out.append(f"{doc.doc_id}: {v}")
    return out


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_treebank(path: str | Path) -> Treebank:
    """Load a treebank file; raises MalformedSyntax/InvalidTree naming the record."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    declared: list[str] = []
    entries: list[tuple[Document, DiscourseNode]] = []
    domain_tags: list[str] = []

    blocks = [b for b in re.split(r"\n\s*\n", text) if b.strip()]
    record_no = 0
    for block in blocks:
        lines = block.strip().splitlines()
        if lines[0].startswith("#relations"):
            declared.extend(lines[0].split()[1:])
            lines = lines[1:]
            if not lines:
                continue
        record_no += 1
        header = lines[0].split()
        if len(header) != 3 or header[0] != "#doc":
            raise MalformedSyntax(
                f"record {record_no}: expected '#doc <doc_id> <domain_tag>' header, "
                f"got {lines[0]!r}"
            )
        doc_id, domain_tag = header[1], header[2]
        body = "\n".join(lines[1:])
        try:
            doc, tree = parse_bracketed(body, doc_id=doc_id)
        except (MalformedSyntax, InvalidTree) as exc:
            raise type(exc)(f"record {record_no} ({doc_id}): {exc}") from exc
        problems = validate(doc, tree)
        if problems:
            raise InvalidTree(f"record {record_no} ({doc_id}): {problems[0]}")
        entries.append((doc, tree))
        domain_tags.append(domain_tag)

    used = {node.relation for _, tree in entries for node in iter_internal(tree)}
    inventory = tuple(sorted(used.union(declared)))
    unique_tags = sorted(set(domain_tags))
    if len(unique_tags) == 1:
        tag = unique_tags[0]
    elif unique_tags:
        tag = "mixed"
    else:
        tag = ""
    return Treebank(path.stem, tag, inventory, tuple(entries))


def save_treebank(tb: Treebank, path: str | Path) -> None:
    path = Path(path)
    parts = []
    if tb.relation_inventory:
        parts.append("#relations " + " ".join(tb.relation_inventory))
    for doc, tree in tb.entries:
        parts.append(
            f"#doc {doc.doc_id} {tb.domain_tag}\n{serialize_bracketed(doc, tree)}"
        )
    path.write_text("\n\n".join(parts) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic treebank generator.

    ``p_domain`` is the probability that a domain-specific generation rule
    fires: per internal node it switches the relation draw to the
    domain-specific relation set, and per filler token it switches the
    lexicon to the domain-specific one.
    """

    n_docs: int = 100
    edu_range: tuple[int, int] = (2, 10)
    shared_vocab: int = 120
    domain_vocab: int = 40
    domain_tag: str = "news"
    shared_relations: tuple[str, ...] = ()
    domain_relations: tuple[str, ...] = ()
    p_domain: float = 0.25
    name: str = "synth"


def nuclearity_for_relation(relation: str) -> str:
    """Fixed relation -> nuclearity coupling used by the generator.

    Derived from the relation string so that the same label behaves
    identically across treebanks and seeds.
    """
    h = hashlib.blake2b(relation.encode("utf-8"), digest_size=8).digest()
    return ("NS", "SN", "NN")[int.from_bytes(h, "little") % 3]


def _check_synth_config(cfg: SynthConfig) -> None:
    if cfg.n_docs < 0:
        raise InvalidConfig("n_docs must be >= 0")
    lo, hi = cfg.edu_range
    if lo < 1 or hi < lo:
        raise InvalidConfig(f"bad EDU range {cfg.edu_range}; need 1 <= min <= max")
    if not cfg.shared_relations:
        raise InvalidConfig("shared relation set must be non-empty")
    if not 0.0 <= cfg.p_domain <= 1.0:
        raise InvalidConfig("p_domain must lie in [0, 1]")
    if cfg.p_domain > 0 and not cfg.domain_relations:
        raise InvalidConfig("domain relation set empty but p_domain > 0")
    if cfg.shared_vocab < 1:
        raise InvalidConfig("shared_vocab must be >= 1")
    if cfg.p_domain > 0 and cfg.domain_vocab < 1:
        raise InvalidConfig("domain_vocab must be >= 1 when p_domain > 0")
    for rel in cfg.shared_relations + cfg.domain_relations:
        if not _RELATION_RE.match(rel):
            raise InvalidConfig(f"relation label {rel!r} must match [a-z_-]+")


def _gen_structure(rng: Random, lo: int, hi: int, cfg: SynthConfig) -> DiscourseNode:
    """Recursive end-splitting of [lo, hi]; the relation draw fixes the split side.

    Relations whose nuclearity is NS or NN peel the leftmost EDU as the
    nucleus leaf; SN relations peel the rightmost.  This keeps every node's
    head nucleus a direct leaf child, which is what makes the surface cues
    injected by :func:`_inject_cues` visible to a stack encoder.
    """
    if lo == hi:
        return Leaf(lo)
    if rng.random() < cfg.p_domain:
        active = cfg.domain_relations
    else:
        active = cfg.shared_relations
    relation = active[rng.randrange(len(active))]
    nuc = nuclearity_for_relation(relation)
    if nuc == "SN":
        right = Leaf(hi)
        left = _gen_structure(rng, lo, hi - 1, cfg)
    else:
        left = Leaf(lo)
        right = _gen_structure(rng, lo + 1, hi, cfg)
    return Internal(nuc, relation, left, right)


def _head_leaf(node: DiscourseNode) -> int:
    """EDU id of the nucleus-path leaf (NN heads left, matching the encoder)."""
    while isinstance(node, Internal):
        node = node.right if node.nuclearity == "SN" else node.left
    return node.edu_id

# Surface cue tokens, two redundant tokens per cue so that a single hash
# collision with a lexicon word cannot erase the signal.
#
# * hold/link mark EDUs by attachment direction: "hold" EDUs wait on the
#   stack (left children), "link" EDUs merge immediately after being
#   shifted (right children).
# * more/done mark the head EDU of every non-root constituent by the same
#   direction one level up: "more" constituents are right children (another
#   merge follows), "done" constituents are left children (a shift follows).
# * relation markers land in the satellite / second-nucleus constituent's
#   head EDU.
CUE_HOLD = ("c_hold", "q_hold")
CUE_LINK = ("c_link", "q_link")
CUE_MORE = ("c_more", "q_more")
CUE_DONE = ("c_done", "q_done")


def relation_markers(relation: str) -> tuple[str, str]:
    """The marker token pair owned by a relation."""
    return (f"m_{relation}", f"z_{relation}")


def _inject_cues(tree: DiscourseNode, cues: dict[int, dict]) -> None:
    for node in iter_internal(tree):
        for child, kind, cont in (
            (node.left, CUE_HOLD, CUE_DONE),
            (node.right, CUE_LINK, CUE_MORE),
        ):
            if isinstance(child, Leaf):
                cues[child.edu_id]["kind"] = kind
            else:
                cues[_head_leaf(child)]["cont"] = cont
        satellite = node.left if node.nuclearity == "SN" else node.right
        cues[_head_leaf(satellite)]["marker"] = relation_markers(node.relation)


def _fillers(rng: Random, cfg: SynthConfig) -> list[str]:
    out = []
    for _ in range(rng.randint(1, 2)):
        if rng.random() < cfg.p_domain:
            out.append(f"d{cfg.domain_tag}{rng.randrange(cfg.domain_vocab)}")
        else:
            out.append(f"w{rng.randrange(cfg.shared_vocab)}")
    return out


def _gen_document(rng: Random, doc_id: str, cfg: SynthConfig) -> tuple[Document, DiscourseNode]:
    n = rng.randint(*cfg.edu_range)
    tree = _gen_structure(rng, 1, n, cfg)
    cues: dict[int, dict] = {
        i: {"kind": None, "cont": None, "marker": None} for i in range(1, n + 1)
    }
    if isinstance(tree, Internal):
        _inject_cues(tree, cues)
    edus = []
    for i in range(1, n + 1):
        # Cues at the edges, fillers in the middle: the cues survive center
        # truncation as well.
        tokens = _fillers(rng, cfg)
        if cues[i]["cont"] is not None:
            tokens = list(cues[i]["cont"]) + tokens
        if cues[i]["kind"] is not None:
            tokens = list(cues[i]["kind"]) + tokens
        if cues[i]["marker"] is not None:
            tokens = tokens + list(cues[i]["marker"])
        edus.append(EDU(i, tuple(tokens)))
    return Document(doc_id, tuple(edus)), tree


def synthesize_treebank(cfg: SynthConfig, seed: int) -> Treebank:
    """Deterministically generate a treebank whose labels are cued in the text.

    Every relation owns a marker token injected into the head EDU of its
    satellite (or second-nucleus) constituent, and every EDU carries an
    attachment cue, so both tree shape and labels are recoverable from
    bag-of-words features over parser states.
    """
    _check_synth_config(cfg)
    entries = []
    for d in range(cfg.n_docs):
        rng = Random(seed * 1_000_003 + d)
        doc_id = f"{cfg.name}-{d:04d}"
        entries.append(_gen_document(rng, doc_id, cfg))  # one stream per doc
    inventory = tuple(sorted(set(cfg.shared_relations) | set(cfg.domain_relations)))
    return Treebank(cfg.name, cfg.domain_tag, inventory, tuple(entries))

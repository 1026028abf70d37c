"""Parseval-style scoring over labeled discourse constituents.

One constituent per internal node (the root included), so a binary tree
over n EDUs yields exactly n-1 constituents and micro precision equals
recall for same-document comparisons.  Matching levels:

* span match: identical (start, end) EDU interval;
* nuclearity match: span match plus identical nuclearity;
* relation match: span match plus identical relation (nuclearity is NOT
  required, keeping the two label diagnostics independent).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .boosting import BoostedEnsemble, parse
from .errors import DocumentMismatch, EmptyTreebank, InvalidPrefix, RelationInventoryMismatch
from .treebank import DiscourseNode, Treebank, iter_internal, iter_leaves

CSV_HEADER = "m,domain,docs,span_p,span_r,span_f1,nuc_p,nuc_r,nuc_f1,rel_p,rel_r,rel_f1"


@dataclass(frozen=True)
class LabeledConstituent:
    start_edu: int
    end_edu: int
    nuclearity: str
    relation: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start_edu, self.end_edu)


def constituents(tree: DiscourseNode) -> frozenset[LabeledConstituent]:
    """Labeled constituents of all internal nodes; empty for a leaf tree."""
    return frozenset(
        LabeledConstituent(node.span[0], node.span[1], node.nuclearity, node.relation)
        for node in iter_internal(tree)
    )


@dataclass(frozen=True)
class ParsevalScores:
    gold_count: int
    pred_count: int
    span_matches: int
    nuc_matches: int
    rel_matches: int

    @staticmethod
    def _prf(matches: int, pred: int, gold: int) -> tuple[float, float, float]:
        p = matches / pred if pred else 0.0
        r = matches / gold if gold else 0.0
        f1 = 2 * p * r / (p + r) if (p + r) else 0.0
        return p, r, f1

    @property
    def span_prf(self) -> tuple[float, float, float]:
        return self._prf(self.span_matches, self.pred_count, self.gold_count)

    @property
    def nuc_prf(self) -> tuple[float, float, float]:
        return self._prf(self.nuc_matches, self.pred_count, self.gold_count)

    @property
    def rel_prf(self) -> tuple[float, float, float]:
        return self._prf(self.rel_matches, self.pred_count, self.gold_count)

    @property
    def span_f1(self) -> float:
        return self.span_prf[2]

    @property
    def nuc_f1(self) -> float:
        return self.nuc_prf[2]

    @property
    def rel_f1(self) -> float:
        return self.rel_prf[2]

    def __add__(self, other: "ParsevalScores") -> "ParsevalScores":
        return ParsevalScores(
            self.gold_count + other.gold_count,
            self.pred_count + other.pred_count,
            self.span_matches + other.span_matches,
            self.nuc_matches + other.nuc_matches,
            self.rel_matches + other.rel_matches,
        )

    def to_dict(self) -> dict:
        sp, sr, sf = self.span_prf
        np_, nr, nf = self.nuc_prf
        rp, rr, rf = self.rel_prf
        return {
            "support": {"gold": self.gold_count, "pred": self.pred_count},
            "span": {"p": sp, "r": sr, "f1": sf},
            "nuclearity": {"p": np_, "r": nr, "f1": nf},
            "relation": {"p": rp, "r": rr, "f1": rf},
        }


ZERO_SCORES = ParsevalScores(0, 0, 0, 0, 0)


def score(gold: DiscourseNode, pred: DiscourseNode) -> ParsevalScores:
    """Micro counts for one document pair; trees must cover the same EDUs."""
    n_gold = sum(1 for _ in iter_leaves(gold))
    n_pred = sum(1 for _ in iter_leaves(pred))
    if n_gold != n_pred:
        raise DocumentMismatch(
            f"gold tree covers {n_gold} EDUs but predicted tree covers {n_pred}"
        )
    g = constituents(gold)
    p = constituents(pred)
    g_spans = {c.span: c for c in g}
    span_m = nuc_m = rel_m = 0
    for c in p:
        gc = g_spans.get(c.span)
        if gc is None:
            continue
        span_m += 1
        if gc.nuclearity == c.nuclearity:
            nuc_m += 1
        if gc.relation == c.relation:
            rel_m += 1
    return ParsevalScores(len(g), len(p), span_m, nuc_m, rel_m)


def score_entries(pairs) -> ParsevalScores:
    """Micro-aggregate (gold, pred) tree pairs by summing counts."""
    total = ZERO_SCORES
    for gold, pred in pairs:
        total = total + score(gold, pred)
    return total


def evaluate_treebank(ensemble: BoostedEnsemble, m: int, tb: Treebank) -> ParsevalScores:
    """Parse every document with prefix m and micro-score against gold."""
    if not 1 <= m <= len(ensemble.steps):
        raise InvalidPrefix(f"prefix {m} outside 1..{len(ensemble.steps)}")
    if len(tb.entries) == 0:
        raise EmptyTreebank(f"treebank {tb.name!r} has no entries to evaluate")
    unknown = set(tb.relation_inventory) - set(ensemble.relation_inventory)
    if unknown:
        raise RelationInventoryMismatch(
            f"treebank {tb.name!r} uses relations unknown to the model: "
            f"{sorted(unknown)}"
        )
    return score_entries((tree, parse(ensemble, m, doc)) for doc, tree in tb.entries)


@dataclass(frozen=True)
class CurveRow:
    m: int
    domain: str
    docs: int
    scores: ParsevalScores


@dataclass(frozen=True)
class CurveTable:
    rows: tuple[CurveRow, ...]
    # per-prefix span-F1 gap (in-domain minus mean out-of-domain); None when
    # the in/out partition is not uniquely determined by the training tag
    gaps: dict[int, float] | None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for row in self.rows:
            sp, sr, sf = row.scores.span_prf
            np_, nr, nf = row.scores.nuc_prf
            rp, rr, rf = row.scores.rel_prf
            cells = [str(row.m), row.domain, str(row.docs)] + [
                f"{v:.4f}" for v in (sp, sr, sf, np_, nr, nf, rp, rr, rf)
            ]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def boost_curve(ensemble: BoostedEnsemble, treebanks: list[Treebank]) -> CurveTable:
    """Evaluate every (prefix m, treebank) cell for m = 1..n_steps."""
    if not treebanks:
        raise EmptyTreebank("boost_curve needs at least one treebank")
    n = len(ensemble.steps)
    rows = []
    span_f1: list[dict[int, float]] = []
    for tb in treebanks:
        f1s = {}
        for m in range(1, n + 1):
            s = evaluate_treebank(ensemble, m, tb)
            rows.append(CurveRow(m, tb.domain_tag, len(tb.entries), s))
            f1s[m] = s.span_f1
        span_f1.append(f1s)

    gaps = None
    in_idx = [i for i, tb in enumerate(treebanks)
              if tb.domain_tag == ensemble.train_domain_tag]
    out_idx = [i for i in range(len(treebanks)) if i not in in_idx]
    if len(in_idx) == 1 and out_idx:
        gaps = {
            m: span_f1[in_idx[0]][m]
            - sum(span_f1[i][m] for i in out_idx) / len(out_idx)
            for m in range(1, n + 1)
        }
    return CurveTable(tuple(rows), gaps)

"""Fixed-width feature vectors for parser states.

Layout: three hashed bag-of-words blocks of ``hash_dim`` buckets each
(stack top span, stack second span, front-of-queue EDU), followed by four
structural scalars.  Token hashing uses BLAKE2b truncated to 64 bits and
keyed with ``hash_seed``, so vectors are identical across runs, processes,
and platforms.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .treebank import DiscourseNode, Document, Internal
from .transition import ParserState

N_STRUCTURAL = 4
SPAN_CLIP = 8  # clip for the stack-depth and span-length scalars

CENTER = "center"
NUCLEUS = "nucleus"


@dataclass(frozen=True)
class EncoderConfig:
    max_span_tokens: int = 8
    hash_dim: int = 1024
    truncation_strategy: str = NUCLEUS
    hash_seed: int = 0

    def __post_init__(self) -> None:
        if self.max_span_tokens < 1:
            raise InvalidConfig("max_span_tokens must be >= 1")
        if self.hash_dim < 8:
            raise InvalidConfig("hash_dim must be >= 8")
        if self.truncation_strategy not in (CENTER, NUCLEUS):
            raise InvalidConfig(
                f"unknown truncation strategy {self.truncation_strategy!r}"
            )

    @property
    def width(self) -> int:
        return 3 * self.hash_dim + N_STRUCTURAL


def truncate_center(tokens: list[str] | tuple[str, ...], max_len: int) -> list[str]:
    """Drop tokens from the middle, keeping ceil(L/2) head + floor(L/2) tail."""
    tokens = list(tokens)
    if len(tokens) <= max_len:
        return tokens
    head = math.ceil(max_len / 2)
    tail = max_len - head
    return tokens[:head] + (tokens[len(tokens) - tail:] if tail else [])


def head_nucleus_edu(node: DiscourseNode) -> int:
    """Follow the nucleus child down to a leaf (NN ties break to the left)."""
    while isinstance(node, Internal):
        node = node.right if node.nuclearity == "SN" else node.left
    return node.edu_id


def represent_span(node: DiscourseNode, doc: Document, cfg: EncoderConfig) -> list[str]:
    """Token window for a stack item under the configured truncation strategy."""
    if cfg.truncation_strategy == CENTER:
        lo, hi = node.span
        tokens: list[str] = []
        for edu_id in range(lo, hi + 1):
            tokens.extend(doc.edus[edu_id - 1].tokens)
        return truncate_center(tokens, cfg.max_span_tokens)
    head = head_nucleus_edu(node)
    return truncate_center(doc.edus[head - 1].tokens, cfg.max_span_tokens)


def hash_token(token: str, hash_seed: int) -> int:
    """Stable 64-bit token hash: BLAKE2b over '<seed>:<token>' bytes."""
    digest = hashlib.blake2b(
        f"{hash_seed}:{token}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def _fill_bag(vec: np.ndarray, offset: int, tokens: list[str] | tuple[str, ...],
              cfg: EncoderConfig) -> None:
    for token in tokens:
        vec[offset + hash_token(token, cfg.hash_seed) % cfg.hash_dim] += 1.0
    vec[offset:offset + cfg.hash_dim] /= max(1, len(tokens))


def encode_state(state: ParserState, doc: Document, cfg: EncoderConfig) -> np.ndarray:
    """Encode a parser state as a dense float64 vector of width 3*hash_dim + 4."""
    vec = np.zeros(cfg.width, dtype=np.float64)
    d = cfg.hash_dim
    top = state.stack[-1] if len(state.stack) >= 1 else None
    second = state.stack[-2] if len(state.stack) >= 2 else None
    if top is not None:
        _fill_bag(vec, 0, represent_span(top, doc, cfg), cfg)
    if second is not None:
        _fill_bag(vec, d, represent_span(second, doc, cfg), cfg)
    if state.queue_cursor <= state.n_edus:
        _fill_bag(vec, 2 * d, doc.edus[state.queue_cursor - 1].tokens, cfg)

    def span_len(node: DiscourseNode | None) -> float:
        if node is None:
            return 0.0
        lo, hi = node.span
        return min(hi - lo + 1, SPAN_CLIP) / SPAN_CLIP

    vec[3 * d + 0] = min(len(state.stack), SPAN_CLIP) / SPAN_CLIP
    vec[3 * d + 1] = (state.n_edus - state.queue_cursor + 1) / state.n_edus
    vec[3 * d + 2] = span_len(top)
    vec[3 * d + 3] = span_len(second)
    return vec

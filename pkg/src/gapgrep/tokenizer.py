"""Greedy longest-match subword tokenizer with byte fallback.

The vocabulary reserves ids for padding, the three mention tags, and the
256 raw bytes; learned entries come from character seeds plus pair merges
over a word-frequency table. Angle brackets never appear in learned tokens
(they are reserved for the tag sentinels), so tags always tokenize to their
single reserved id. Token char spans tile the input exactly: whitespace is
absorbed into the following token's span, trailing whitespace into the last.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .data import A_TAG, B_TAG, PRONOUN_TAG, Label, TaggedSample, derive_label

PAD_TOKEN = "<pad>"
SPECIAL_TOKENS = [PAD_TOKEN, PRONOUN_TAG, A_TAG, B_TAG]
BYTE_OFFSET = len(SPECIAL_TOKENS)
FIRST_LEARNED_ID = BYTE_OFFSET + 256
PAD_ID = 0


class VocabError(ValueError):
    pass


class TokenizationError(ValueError):
    pass


class TruncationError(ValueError):
    """A labeled mention would be cut by the length limit."""


def _byte_token(b: int) -> str:
    return f"<0x{b:02X}>"


@dataclass
class Vocab:
    """Id table plus the longest-match index used for segmentation."""

    learned: list[str]
    _token_to_id: dict[str, int] = field(default_factory=dict, repr=False)
    _max_match: int = 0

    def __post_init__(self):
        self._token_to_id = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
        for b in range(256):
            self._token_to_id[_byte_token(b)] = BYTE_OFFSET + b
        for i, tok in enumerate(self.learned):
            self._token_to_id.setdefault(tok, FIRST_LEARNED_ID + i)
        # Tags are matchable in running text; byte tokens are not (they only
        # appear through fallback).
        self._matchable = {t: self._token_to_id[t] for t in self.learned}
        for t in (PRONOUN_TAG, A_TAG, B_TAG):
            self._matchable[t] = self._token_to_id[t]
        self._max_match = max((len(t) for t in self._matchable), default=0)

    @property
    def size(self) -> int:
        return FIRST_LEARNED_ID + len(self.learned)

    def id_of(self, token: str) -> int:
        return self._token_to_id[token]

    def token_of(self, idx: int) -> str:
        if idx < BYTE_OFFSET:
            return SPECIAL_TOKENS[idx]
        if idx < FIRST_LEARNED_ID:
            return _byte_token(idx - BYTE_OFFSET)
        return self.learned[idx - FIRST_LEARNED_ID]

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"learned": self.learned}, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls(learned=json.loads(Path(path).read_text(encoding="utf-8"))["learned"])


def build_vocab(texts: list[str], size: int) -> Vocab:
    """Frequency-based subword vocabulary: character seeds + pair merges.

    Merges are learned per-word (whitespace pre-split), weighted by word
    frequency, with deterministic (count, lexicographic) tie-breaking.
    """
    if size < FIRST_LEARNED_ID:
        raise VocabError(f"vocab size must be at least {FIRST_LEARNED_ID} (bytes + specials), got {size}")
    words = Counter()
    for text in texts:
        words.update(text.split())
    if not words:
        raise VocabError("cannot build a vocabulary from an empty corpus")

    # Angle brackets are reserved so tag sentinels can never be split or
    # swallowed by a learned token.
    def ok(sym: str) -> bool:
        return "<" not in sym and ">" not in sym

    char_counts = Counter()
    for word, n in words.items():
        for ch in word:
            if ok(ch):
                char_counts[ch] += n
    learned = [ch for ch, _ in sorted(char_counts.items(), key=lambda kv: (-kv[1], kv[0]))]
    budget = size - FIRST_LEARNED_ID

    pieces = {word: tuple(word) for word in words}
    vocab_set = set(learned)
    while len(learned) < budget:
        pairs = Counter()
        for word, parts in pieces.items():
            n = words[word]
            for x, y in zip(parts, parts[1:]):
                if ok(x) and ok(y):
                    pairs[(x, y)] += n
        if not pairs:
            break
        (x, y), count = max(pairs.items(), key=lambda kv: (kv[1], kv[0]))
        if count < 1:
            break
        merged = x + y
        if merged not in vocab_set:
            learned.append(merged)
            vocab_set.add(merged)
        new_pieces = {}
        for word, parts in pieces.items():
            out = []
            i = 0
            while i < len(parts):
                if i + 1 < len(parts) and parts[i] == x and parts[i + 1] == y:
                    out.append(merged)
                    i += 2
                else:
                    out.append(parts[i])
                    i += 1
            new_pieces[word] = tuple(out)
        pieces = new_pieces
    return Vocab(learned=learned[:budget])


@dataclass
class TokenizedExample:
    """Token ids with tiling char spans and the three mention token ranges."""

    token_ids: list[int]
    spans: list[tuple[int, int]]
    pronoun_range: tuple[int, int]
    a_range: tuple[int, int]
    b_range: tuple[int, int]
    tag_positions: dict[str, tuple[int, int]]
    label: Label
    tagged: TaggedSample

    @property
    def id(self) -> str:
        return self.tagged.id

    @property
    def gender(self) -> str:
        return self.tagged.original.gender

    def __len__(self) -> int:
        return len(self.token_ids)

    def char_span_to_token_range(self, start: int, end: int) -> tuple[int, int] | None:
        """Minimal covering token range for a char span, None if outside."""
        first = last = None
        for i, (s, e) in enumerate(self.spans):
            if s < end and e > start:
                if first is None:
                    first = i
                last = i
        if first is None:
            return None
        return first, last + 1


def segment(text: str, vocab: Vocab) -> tuple[list[int], list[tuple[int, int]]]:
    """Tokenize raw text: ids plus tiling (start, end) char spans."""
    ids: list[int] = []
    content: list[tuple[int, int]] = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        end = pos
        while end < n and not text[end].isspace():
            end += 1
        i = pos
        while i < end:
            match = None
            top = min(vocab._max_match, end - i)
            for length in range(top, 0, -1):
                cand = text[i:i + length]
                if cand in vocab._matchable:
                    match = (vocab._matchable[cand], length)
                    break
            if match is not None:
                ids.append(match[0])
                content.append((i, i + match[1]))
                i += match[1]
            else:
                # Byte fallback: one token per UTF-8 byte; the char's span
                # goes to the first byte token, the rest get empty spans.
                for j, byte in enumerate(text[i].encode("utf-8")):
                    ids.append(BYTE_OFFSET + byte)
                    content.append((i, i + 1) if j == 0 else (i + 1, i + 1))
                i += 1
        pos = end
    # Stretch content spans into a tiling of the whole string.
    spans: list[tuple[int, int]] = []
    prev_end = 0
    for k, (s, e) in enumerate(content):
        spans.append((prev_end, e if k < len(content) - 1 else n))
        prev_end = e
    return ids, spans


def tokenize(tagged: TaggedSample, vocab: Vocab) -> TokenizedExample:
    """Tokenize a tagged sample and locate the mention token ranges."""
    ids, spans = segment(tagged.text, vocab)
    tok = TokenizedExample(
        token_ids=ids,
        spans=spans,
        pronoun_range=(0, 0),
        a_range=(0, 0),
        b_range=(0, 0),
        tag_positions={},
        label=derive_label(tagged.original.a_coref, tagged.original.b_coref),
        tagged=tagged,
    )
    for attr, tag, span in (
        ("pronoun_range", PRONOUN_TAG, tagged.pronoun_span),
        ("a_range", A_TAG, tagged.a_span),
        ("b_range", B_TAG, tagged.b_span),
    ):
        rng = tok.char_span_to_token_range(*span)
        if rng is None:
            raise TokenizationError(f"sample {tagged.id}: mention span {span} not covered by tokens")
        setattr(tok, attr, rng)
        open_idx, close_idx = rng[0] - 1, rng[1]
        tag_id = vocab.id_of(tag)
        if open_idx < 0 or ids[open_idx] != tag_id or close_idx >= len(ids) or ids[close_idx] != tag_id:
            raise TokenizationError(f"sample {tagged.id}: mention for {tag} is not enclosed by its tag pair")
        tok.tag_positions[tag] = (open_idx, close_idx)
    return tok


def fit_window(tok: TokenizedExample, max_len: int) -> TokenizedExample:
    """Trim an over-long example to max_len tokens, keeping all tag pairs.

    Raises TruncationError when the mentions cannot fit in one window.
    """
    if len(tok) <= max_len:
        return tok
    lo = min(p[0] for p in tok.tag_positions.values())
    hi = max(p[1] for p in tok.tag_positions.values()) + 1
    if hi - lo > max_len:
        raise TruncationError(f"sample {tok.id}: mentions span {hi - lo} tokens, over the {max_len} limit")
    slack = max_len - (hi - lo)
    start = max(0, min(lo - slack // 2, len(tok) - max_len))
    end = start + max_len

    def shift(rng: tuple[int, int]) -> tuple[int, int]:
        return rng[0] - start, rng[1] - start

    return TokenizedExample(
        token_ids=tok.token_ids[start:end],
        spans=tok.spans[start:end],
        pronoun_range=shift(tok.pronoun_range),
        a_range=shift(tok.a_range),
        b_range=shift(tok.b_range),
        tag_positions={t: shift(p) for t, p in tok.tag_positions.items()},
        label=tok.label,
        tagged=tok.tagged,
    )

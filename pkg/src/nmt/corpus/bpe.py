"""Byte pair encoding: learning a joint merge list, applying it, undoing it.

Words are split into characters followed by a separate end-of-word symbol
``</w>``. Segmented output marks every non-final subword with ``@@``.
"""

from __future__ import annotations

import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

END_OF_WORD = "</w>"
CONTINUATION = "@@"
CODES_HEADER = "#version: nmt-bpe 1"

Pair = tuple[str, str]


@dataclass
class BpeCodes:
    merges: list[Pair]
    counts: list[int] = field(default_factory=list)  # pair frequency when selected; not stored on disk

    def __post_init__(self):
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}

    def __len__(self) -> int:
        return len(self.merges)

    def dumps(self) -> str:
        return "".join(f"{a} {b}\n" for a, b in self.merges)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(CODES_HEADER + "\n")
            fh.write(self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "BpeCodes":
        merges = []
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if n == 1 and line.startswith("#version"):
                    continue
                parts = line.split(" ")
                if len(parts) != 2 or not all(parts):
                    raise ValueError(f"{path}:{n}: expected 'symbol1 symbol2', got {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(merges)


def word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word) + (END_OF_WORD,)


def _pairs(symbols: Sequence[str]) -> Iterable[Pair]:
    return zip(symbols, symbols[1:])


def _merge_word(symbols: tuple[str, ...], pair: Pair) -> tuple[str, ...]:
    out, i, joined = [], 0, pair[0] + pair[1]
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(joined)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def count_words(lines: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for line in lines:
        counts.update(line.split())
    return counts


def learn_bpe(tokenized_corpus: Iterable[str], n_merges: int, min_frequency: int = 2) -> BpeCodes:
    """Learn up to ``n_merges`` merges from whitespace-tokenized lines.

    Each step merges the most frequent adjacent pair inside words, ties
    going to the lexicographically smallest pair. Learning stops early once
    no pair occurs ``min_frequency`` times.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be >= 0")
    word_counts = count_words(tokenized_corpus)
    words = [word_symbols(w) for w in sorted(word_counts)]
    freqs = [word_counts[w] for w in sorted(word_counts)]

    stats: Counter = Counter()
    where: dict[Pair, set[int]] = defaultdict(set)
    for idx, symbols in enumerate(words):
        for pair in _pairs(symbols):
            stats[pair] += freqs[idx]
            where[pair].add(idx)

    merges: list[Pair] = []
    counts: list[int] = []
    while len(merges) < n_merges and stats:
        best = min(stats.items(), key=lambda kv: (-kv[1], kv[0]))
        pair, count = best
        if count < min_frequency:
            break
        merges.append(pair)
        counts.append(count)
        for idx in sorted(where.pop(pair, ())):
            old = words[idx]
            if pair not in set(_pairs(old)):
                continue
            for p in _pairs(old):
                stats[p] -= freqs[idx]
                if stats[p] <= 0:
                    del stats[p]
            new = _merge_word(old, pair)
            words[idx] = new
            for p in _pairs(new):
                stats[p] += freqs[idx]
                where[p].add(idx)
        stats.pop(pair, None)
    return BpeCodes(merges, counts)


def segment_word(word: str, codes: BpeCodes) -> tuple[str, ...]:
    """Apply merges by rank until none applies; returns symbols including ``</w>`` forms."""
    symbols = word_symbols(word)
    ranks = codes.ranks
    while len(symbols) > 1:
        ranked = [(ranks[p], p) for p in _pairs(symbols) if p in ranks]
        if not ranked:
            break
        symbols = _merge_word(symbols, min(ranked)[1])
    return symbols


def _surface(symbols: tuple[str, ...]) -> list[str]:
    symbols = list(symbols)
    if symbols[-1] == END_OF_WORD:
        symbols.pop()
    else:
        symbols[-1] = symbols[-1][: -len(END_OF_WORD)]
    return [s + CONTINUATION for s in symbols[:-1]] + [symbols[-1]]


class BpeEncoder:
    """Applies codes to lines, caching segmentations per word."""

    def __init__(self, codes: BpeCodes):
        self.codes = codes
        self._cache: dict[str, list[str]] = {}

    def word(self, word: str) -> list[str]:
        seg = self._cache.get(word)
        if seg is None:
            seg = _surface(segment_word(word, self.codes))
            self._cache[word] = seg
        return seg

    def __call__(self, line: str) -> str:
        return " ".join(sub for w in line.split() for sub in self.word(w))


def apply_bpe(line: str, codes: BpeCodes) -> str:
    """Segment a whitespace-tokenized line; ``"lowest"`` may become ``"low@@ e@@ s@@ t"``."""
    return BpeEncoder(codes)(line)


def decode_bpe(line: str) -> str:
    """Join continuation subwords back into words."""
    text = line.rstrip("\n").replace(CONTINUATION + " ", "")
    if text.endswith(CONTINUATION):
        text = text[: -len(CONTINUATION)]
    return text


def decode_subwords(tokens: Sequence[str]) -> str:
    return decode_bpe(" ".join(tokens))

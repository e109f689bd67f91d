"""Shared subword vocabulary with fixed reserved ids."""

from __future__ import annotations

import os
from collections import Counter
from typing import Iterable, Sequence

from ..models.base import RESERVED, UNK
from .bpe import CONTINUATION


class SubwordVocabulary:
    """Token to id mapping; ids 0..3 are pad, start, end and unknown.

    Every character seen at build time is present both as a final subword
    and with the continuation marker, and :meth:`encode` splits a subword
    that is not in the table into characters, so words built from seen
    characters never map to the unknown id.
    """

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"vocabulary must start with the reserved tokens {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @classmethod
    def build(cls, subword_lines: Iterable[str], max_size: int | None = None) -> "SubwordVocabulary":
        """Tokens by descending frequency (ties alphabetical), then any missing character forms."""
        counts: Counter = Counter()
        chars: set[str] = set()
        for line in subword_lines:
            for tok in line.split():
                counts[tok] += 1
                chars.update(_strip(tok))
        ranked = [t for t, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])) if t not in RESERVED]
        char_forms = sorted({c for c in chars} | {c + CONTINUATION for c in chars})
        if max_size is not None:
            # character forms are always kept, so only the other tokens compete for room
            forms = set(char_forms)
            room = max_size - len(RESERVED) - len(forms)
            kept = []
            for tok in ranked:
                if tok not in forms:
                    if room <= 0:
                        continue
                    room -= 1
                kept.append(tok)
            ranked = kept
        seen = set(ranked)
        extra = [t for t in char_forms if t not in seen and t not in RESERVED]
        return cls(list(RESERVED) + ranked + extra)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(t + "\n" for t in self.tokens)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SubwordVocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh])

    def _ids_for(self, token: str) -> list[int]:
        idx = self.index.get(token)
        if idx is not None:
            return [idx]
        cont = token.endswith(CONTINUATION)
        body = _strip(token)
        if not body:
            return [UNK]
        pieces = [c + CONTINUATION for c in body[:-1]] + [body[-1] + (CONTINUATION if cont else "")]
        return [self.index.get(p, UNK) for p in pieces]

    def encode(self, subword_line: str | Sequence[str]) -> list[int]:
        tokens = subword_line.split() if isinstance(subword_line, str) else subword_line
        return [i for tok in tokens for i in self._ids_for(tok)]

    def decode(self, ids: Iterable[int], strip_reserved: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip_reserved and i < len(RESERVED) and i != UNK:
                continue
            out.append(self.tokens[i] if 0 <= i < len(self.tokens) else RESERVED[UNK])
        return out


def _strip(token: str) -> str:
    return token[: -len(CONTINUATION)] if token.endswith(CONTINUATION) else token

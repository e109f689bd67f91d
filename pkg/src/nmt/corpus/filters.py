"""Line-pair cleaning filters and an alignment-preserving pipeline."""

from __future__ import annotations

import os
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from multiprocessing.pool import ThreadPool
from typing import Callable, Iterable, Sequence

UNTRANSLATED_THRESHOLD = 0.5
WORDLIST_VERSION = "english-words v1"

# letters that only occur with Vietnamese orthography (precomposed, lowercase)
_VI_BASE = "ăâđêôơư"
_VI_TONED = (
    "àáảãạ" "ằắẳẵặ" "ầấẩẫậ" "èéẻẽẹ" "ềếểễệ" "ìíỉĩị"
    "òóỏõọ" "ồốổỗộ" "ờớởỡợ" "ùúủũụ" "ừứửữự" "ỳýỷỹỵ"
)
VIETNAMESE_LETTERS = frozenset(_VI_BASE + _VI_TONED)

# frequent function words written without diacritics
VIETNAMESE_STOPWORDS = frozenset(
    "anh em con cho co nhu nhung voi va la khi thi nay kia ai gi sao nao roi chi ong ba toi minh".split()
)

PairFilter = Callable[[str, str], bool]  # True keeps the pair


def load_english_vocab(path: str | os.PathLike | None = None) -> frozenset[str]:
    """Lowercase English word set; the shipped WordNet-derived list by default."""
    if path is None:
        return _shipped_vocab()
    with open(path, encoding="utf-8") as fh:
        return _parse_wordlist(fh)


@lru_cache(maxsize=1)
def _shipped_vocab() -> frozenset[str]:
    ref = resources.files("nmt.corpus") / "data" / "english_words.txt"
    with ref.open(encoding="utf-8") as fh:
        return _parse_wordlist(fh)


def _parse_wordlist(lines: Iterable[str]) -> frozenset[str]:
    return frozenset(w.strip().lower() for w in lines if w.strip() and not w.startswith("#"))


def detect_untranslated(segment_tokens: Sequence[str], english_vocab, threshold: float = UNTRANSLATED_THRESHOLD) -> bool:
    """True when at least ``threshold`` of the tokens are English words.

    An empty segment is never flagged.
    """
    if not segment_tokens:
        return False
    hits = sum(1 for tok in segment_tokens if tok.lower() in english_vocab)
    return hits / len(segment_tokens) >= threshold


def vietnamese_signal(line: str) -> float:
    """Fraction of words carrying a Vietnamese letter or being a Vietnamese function word."""
    words = [w for w in unicodedata.normalize("NFC", line).lower().split() if any(c.isalpha() for c in w)]
    if not words:
        return 0.0
    marked = sum(1 for w in words if w in VIETNAMESE_STOPWORDS or any(c in VIETNAMESE_LETTERS for c in w))
    return marked / len(words)


def detect_language(line: str, threshold: float = 0.3) -> str:
    """``"vi"`` if the Vietnamese signal reaches ``threshold``, else ``"non-vi"``."""
    return "vi" if vietnamese_signal(line) >= threshold else "non-vi"


# -- pair filters ------------------------------------------------------------------


def non_empty(src: str, tgt: str) -> bool:
    return bool(src.strip()) and bool(tgt.strip())


def translated_filter(english_vocab, threshold: float = UNTRANSLATED_THRESHOLD) -> PairFilter:
    """Drop pairs whose Vietnamese side is mostly English words."""

    def keep(src: str, tgt: str) -> bool:
        return not detect_untranslated(tgt.split(), english_vocab, threshold)

    return keep


def language_filter(threshold: float = 0.3) -> PairFilter:
    """Drop pairs whose Vietnamese side does not look Vietnamese."""

    def keep(src: str, tgt: str) -> bool:
        return detect_language(tgt, threshold) == "vi"

    return keep


def length_ratio_filter(max_ratio: float = 3.0) -> PairFilter:
    def keep(src: str, tgt: str) -> bool:
        a, b = len(src.split()), len(tgt.split())
        return max(a, b) <= max_ratio * max(1, min(a, b))

    return keep


def read_exclusion_list(path: str | os.PathLike) -> frozenset[int]:
    """0-based line indices to drop, one per line; ``#`` starts a comment."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                out.add(int(line))
            except ValueError:
                raise ValueError(f"{path}:{n}: not a line index: {line!r}") from None
    return frozenset(out)


@dataclass
class FilterPipeline:
    """Applies pair filters in order; the exclusion list is checked first."""

    filters: list[PairFilter] = field(default_factory=list)
    exclude: frozenset[int] = frozenset()

    def keep(self, index: int, src: str, tgt: str) -> bool:
        if index in self.exclude:
            return False
        return all(f(src, tgt) for f in self.filters)

    def _run_range(self, sources, targets, start: int, stop: int) -> list[int]:
        return [i for i in range(start, stop) if self.keep(i, sources[i], targets[i])]

    def run(self, sources: Sequence[str], targets: Sequence[str], shards: int = 1):
        """Returns ``(kept_indices, kept_sources, kept_targets)``.

        Sharding splits the lines into contiguous ranges; the result is
        identical to a sequential run.
        """
        if len(sources) != len(targets):
            raise ValueError(f"unaligned corpus: {len(sources)} source lines vs {len(targets)} target lines")
        n = len(sources)
        if shards <= 1 or n < 2:
            kept = self._run_range(sources, targets, 0, n)
        else:
            bounds = [n * k // shards for k in range(shards + 1)]
            with ThreadPool(shards) as pool:
                parts = pool.starmap(self._run_range, [(sources, targets, a, b) for a, b in zip(bounds, bounds[1:])])
            kept = [i for part in parts for i in part]
        return kept, [sources[i] for i in kept], [targets[i] for i in kept]

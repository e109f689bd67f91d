"""Parallel text files, corpus statistics and extraction from saved HTML pages."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence


@dataclass
class ParallelCorpus:
    sources: list[str]
    targets: list[str]
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.sources) != len(self.targets):
            raise ValueError(f"unaligned corpus: {len(self.sources)} vs {len(self.targets)} lines")
        if not self.provenance:
            self.provenance = [""] * len(self.sources)
        elif len(self.provenance) != len(self.sources):
            raise ValueError("one provenance tag per pair required")

    def __len__(self) -> int:
        return len(self.sources)

    def pairs(self) -> list[tuple[str, str]]:
        return list(zip(self.sources, self.targets))


def read_lines(path: str | os.PathLike) -> list[str]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return [line.rstrip("\r\n") for line in fh]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def write_lines(path: str | os.PathLike, lines: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(line + "\n" for line in lines)


def read_parallel(directory: str | os.PathLike, split: str, src_lang: str, tgt_lang: str) -> ParallelCorpus:
    """Read ``<split>.<src_lang>`` and ``<split>.<tgt_lang>`` from ``directory``."""
    d = Path(directory)
    src = read_lines(d / f"{split}.{src_lang}")
    tgt = read_lines(d / f"{split}.{tgt_lang}")
    return ParallelCorpus(src, tgt, [split] * len(src) if len(src) == len(tgt) else [])


def corpus_stats(files: Sequence[str | os.PathLike]) -> dict[str, tuple[int, int]]:
    """Line count and whitespace-token count of each file."""
    out = {}
    for path in files:
        lines = read_lines(path)
        out[str(path)] = (len(lines), sum(len(line.split()) for line in lines))
    return out


def extract_pairs(html: str, source_selector: str, target_selector: str) -> list[tuple[str, str]]:
    """Pair up the text of elements matched by two CSS selectors, in document order.

    Raises:
        ValueError: if the selectors match different numbers of elements.
    """
    from bs4 import BeautifulSoup

    soup = BeautifulSoup(html, "html.parser")
    src = [" ".join(el.get_text(" ").split()) for el in soup.select(source_selector)]
    tgt = [" ".join(el.get_text(" ").split()) for el in soup.select(target_selector)]
    if len(src) != len(tgt):
        raise ValueError(f"selector mismatch: {len(src)} source vs {len(tgt)} target elements")
    return list(zip(src, tgt))


def extract_directory(directory: str | os.PathLike, source_selector: str, target_selector: str) -> ParallelCorpus:
    """Extract pairs from every ``*.html`` file, tagging each pair with its file name."""
    sources, targets, tags = [], [], []
    for path in sorted(Path(directory).glob("*.html")):
        for s, t in extract_pairs(path.read_text(encoding="utf-8"), source_selector, target_selector):
            sources.append(s)
            targets.append(t)
            tags.append(path.name)
    return ParallelCorpus(sources, targets, tags)

"""Case-insensitive corpus BLEU over mteval-13a tokenization.

Tokenization rules, applied in order after lowercasing:

1. drop ``<skipped>``, join ``-`` line breaks, turn newlines into spaces;
2. unescape ``&quot; &amp; &lt; &gt;``;
3. put spaces around the symbols ``{|}~[\\]^_`` and backquote, the ASCII
   range from space to ``&``, ``(`` to ``+``, ``:`` to ``@`` and ``/``;
4. split ``.`` and ``,`` from a neighbour unless that neighbour is a digit;
5. split ``-`` that follows a digit;
6. collapse whitespace.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import ContractError

MAX_ORDER = 4

_RULES = [
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
]


def bleu_tokenize(line: str, lowercase: bool = True) -> list[str]:
    if lowercase:
        line = line.lower()
    line = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in line:
        line = line.replace("&quot;", '"').replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">")
    line = f" {line} "
    for pattern, repl in _RULES:
        line = pattern.sub(repl, line)
    return line.split()


def ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, ...]  # percentages
    bp: float
    hyp_len: int
    ref_len: int

    @property
    def ratio(self) -> float:
        return self.hyp_len / self.ref_len if self.ref_len else 0.0

    def format(self) -> str:
        p = "/".join(f"{x:.1f}" for x in self.precisions)
        return f"BLEU = {self.bleu:.2f} ({p}, BP={self.bp:.3f}, ratio={self.ratio:.3f})"

    def __str__(self) -> str:
        return self.format()


def corpus_bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    smooth: bool = False,
    lowercase: bool = True,
    tokenize: bool = True,
) -> BleuReport:
    """Corpus BLEU (0-100) from clipped n-gram counts summed over all sentences.

    ``smooth`` adds one to numerator and denominator of every order above 1.
    Without it, any order with no match gives a score of 0.

    Raises:
        ContractError: if the two lists differ in length.
    """
    if len(hypotheses) != len(references):
        raise ContractError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        if tokenize:
            h, r = bleu_tokenize(hyp, lowercase), bleu_tokenize(ref, lowercase)
        else:
            h = (hyp.lower() if lowercase else hyp).split()
            r = (ref.lower() if lowercase else ref).split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            hc, rc = ngram_counts(h, n), ngram_counts(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    return bleu_from_counts(matches, totals, hyp_len, ref_len, smooth)


def bleu_from_counts(matches, totals, hyp_len: int, ref_len: int, smooth: bool = False) -> BleuReport:
    precisions = []
    for n, (m, t) in enumerate(zip(matches, totals), 1):
        if smooth and n > 1:
            m, t = m + 1, t + 1
        precisions.append(m / t if t else 0.0)
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if min(precisions) <= 0.0:
        bleu = 0.0
    elif all(m == t for m, t in zip(matches, totals)) and bp == 1.0:
        bleu = 100.0  # exact, avoiding exp/log rounding
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(bleu, tuple(100.0 * p for p in precisions), bp, hyp_len, ref_len)


def token_accuracy(predicted: Sequence[Sequence[int]], gold: Sequence[Sequence[int]]) -> float:
    """Fraction of gold positions whose predicted id matches (teacher-forced argmax)."""
    right = total = 0
    for p, g in zip(predicted, gold):
        total += len(g)
        right += sum(1 for a, b in zip(p, g) if a == b)
    return right / total if total else 0.0

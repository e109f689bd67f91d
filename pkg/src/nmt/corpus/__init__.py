"""Corpus cleaning, shared BPE, vocabulary and statistics."""

from .bpe import (
    BpeCodes, BpeEncoder, apply_bpe, decode_bpe, decode_subwords, learn_bpe, segment_word,
)
from .filters import (
    FilterPipeline, detect_language, detect_untranslated, language_filter, length_ratio_filter,
    load_english_vocab, non_empty, read_exclusion_list, translated_filter, vietnamese_signal,
)
from .text import (
    ParallelCorpus, corpus_stats, extract_directory, extract_pairs, read_lines, read_parallel, write_lines,
)
from .vocab import SubwordVocabulary

__all__ = [
    "BpeCodes", "BpeEncoder", "apply_bpe", "decode_bpe", "decode_subwords", "learn_bpe", "segment_word",
    "FilterPipeline", "detect_language", "detect_untranslated", "language_filter", "length_ratio_filter",
    "load_english_vocab", "non_empty", "read_exclusion_list", "translated_filter", "vietnamese_signal",
    "ParallelCorpus", "corpus_stats", "extract_directory", "extract_pairs", "read_lines", "read_parallel",
    "write_lines", "SubwordVocabulary",
]

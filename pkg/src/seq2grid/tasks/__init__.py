"""Task generators, evaluators, splits, and dataset IO."""

from .base import Example, SplitRanges
from .vocab import Vocabulary, build_vocab, char_tokens
from .splits import fnv1a64, hash_split, worker_seed

__all__ = [
    "Example",
    "SplitRanges",
    "Vocabulary",
    "build_vocab",
    "char_tokens",
    "fnv1a64",
    "hash_split",
    "worker_seed",
]

"""Length-instructed benchmarks, LIFT preference augmentation and gated evaluation."""

__version__ = "0.1.0"

from .wordcount import count_words, tokenize  # noqa: E402

__all__ = ["__version__", "count_words", "tokenize"]

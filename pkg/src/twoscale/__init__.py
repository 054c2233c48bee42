"""Two-scale micro-macro pressure solver and Robin coefficient identification."""

__version__ = "0.1.0"

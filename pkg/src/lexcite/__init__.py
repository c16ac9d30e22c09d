"""Citation-treatment classification of case-law text with a multi-kernel 1D CNN."""

__version__ = "0.1.0"

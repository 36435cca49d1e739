"""Open-vocabulary language modeling of source code."""

__version__ = "0.1.0"

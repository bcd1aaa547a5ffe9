"""Explanation regularization test bench: a toy text classifier trained with
rationale supervision and evaluated on out-of-distribution probes."""

__version__ = "0.1.0"

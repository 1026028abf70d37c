"""Gradient-boosted ensembles of weak shift-reduce classifiers for
RST-style discourse parsing, plus a desk-scale evaluation harness."""

__version__ = "0.1.0"

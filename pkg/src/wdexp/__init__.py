"""Numerical laboratory for the equivalence between SGD with weight
decay (and momentum) on scale-invariant objectives and weight-decay-free
SGD with exponentially growing learning rates."""

__version__ = "0.1.0"

"""Guided graph compression: autoencoders that shrink graphs in node count
and feature dimensionality, trained standalone or jointly with a downstream
classical or simulated-quantum graph classifier."""

__version__ = "0.1.0"

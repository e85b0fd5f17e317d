"""Zero-shot sketch-based image retrieval through cycle-consistent mappings into a side-information space."""

__version__ = "0.1.0"

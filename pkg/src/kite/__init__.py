"""Kernel entropies, quantum divergences and variational log-partition bounds."""
__version__ = "0.1.0"

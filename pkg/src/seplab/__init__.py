"""Executable information-flow security laboratory for partitioned kernels."""

__version__ = "0.1.0"

"""Parallel sub-chain proof-of-work protocol: reference implementation,
network simulator and analysis toolkit."""

__version__ = "0.1.0"

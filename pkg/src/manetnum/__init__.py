"""Goodput-based network utility maximization for wireless multihop networks with outages and ARQ."""

__version__ = "0.1.0"

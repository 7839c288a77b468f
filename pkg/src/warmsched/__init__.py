"""Warm-started MILP solving for multi-agent task allocation and scheduling."""

__version__ = "0.1.0"

"""Game-theoretic self-organization toolkit for cognitive small-cell networks."""

__version__ = "0.1.0"

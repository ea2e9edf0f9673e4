"""Agent-driven network control loops on a deterministic simulator."""

__version__ = "0.1.0"

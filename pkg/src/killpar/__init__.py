"""Parabolicity of surfaces invariant under a Killing field."""

__version__ = "0.1.0"

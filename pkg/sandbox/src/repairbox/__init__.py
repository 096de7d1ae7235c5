"""Sandbox agent: patch, test, and trace subject projects over a JSON line protocol."""

__version__ = "0.1.0"

"""Sandboxed WASI host with a protected file store and boundary-cost simulator."""

__version__ = "0.1.0"

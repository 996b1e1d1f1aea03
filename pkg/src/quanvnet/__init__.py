"""Hybrid quantum-classical multitask network over an exact statevector simulator."""

__version__ = "0.1.0"

"""Energy-aware potential-based reward shaping laboratory."""

__version__ = "0.1.0"

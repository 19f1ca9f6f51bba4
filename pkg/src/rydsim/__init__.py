"""Few-atom Rydberg pulse-sequence simulator with single-site addressing."""

__version__ = "0.1.0"

"""Risk-sensitive asset allocation in a regime-switching market whose price
jumps coincide with regime changes."""

__version__ = "0.1.0"

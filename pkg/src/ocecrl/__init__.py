"""Risk-aware constrained RL with optimized certainty equivalents."""

__version__ = "0.1.0"

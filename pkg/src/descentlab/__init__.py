"""First-order optimization lab with per-iteration convergence certificates."""

__version__ = "0.1.0"

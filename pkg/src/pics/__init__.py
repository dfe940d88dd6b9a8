"""Phase imaging reconstruction, learned staining, and dry-mass analytics."""

__version__ = "0.1.0"

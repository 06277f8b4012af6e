"""GlickFormer: chess puzzle difficulty from position sequences."""

__version__ = "0.1.0"

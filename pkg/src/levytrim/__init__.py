"""Small-time behaviour of trimmed Lévy processes."""

__version__ = "0.1.0"

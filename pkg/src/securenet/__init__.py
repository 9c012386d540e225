"""Three-party secure neural-network inference."""

__version__ = "0.1.0"

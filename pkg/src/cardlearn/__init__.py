"""cardlearn: joint perception + cardinality-constraint learning with exact inference."""

__version__ = "0.1.0"

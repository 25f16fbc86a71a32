"""Knowledge-graph completion with indivisible entity/relation tokens."""

__version__ = "0.1.0"

"""Association-rule candidate filtering in front of a factorization machine."""

__version__ = "0.1.0"

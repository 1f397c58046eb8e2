"""Grammar-constrained synthesis of probabilistic programs with NUTS-based
reliability scoring and elpd-driven search."""

__version__ = "0.1.0"

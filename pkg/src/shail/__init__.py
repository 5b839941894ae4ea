"""Safety-aware hierarchical adversarial imitation learning for
path-constrained driving scenarios."""

__version__ = "0.1.0"

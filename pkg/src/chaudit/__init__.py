"""chaudit: a desk-scale Lustre-style changelog audit pipeline."""

__version__ = "0.1.0"

"""Neural approximations of parametric generalized Nash equilibrium maps."""

__version__ = "0.1.0"

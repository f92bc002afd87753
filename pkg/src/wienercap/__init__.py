"""Monte Carlo and analytic tools for small-ball events of the path-valued OU process."""

__version__ = "0.1.0"

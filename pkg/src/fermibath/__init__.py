"""Free-fermion simulations of a lattice coupled to local baths."""

__version__ = "0.1.0"

"""Vector-valued Plateau problems for planar 1-currents with l^p coefficient norms."""

__version__ = "0.1.0"

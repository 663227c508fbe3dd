"""Mixed Gaussian-impulsive noise simulation, separation and parameter estimation."""

__version__ = "0.1.0"

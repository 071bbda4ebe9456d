"""Physics-informed neural networks for the radiative transfer equation."""

__version__ = "0.1.0"

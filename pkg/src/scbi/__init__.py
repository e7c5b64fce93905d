"""Sequential cooperative Bayesian inference (SCBI) and its Bayesian baseline."""

__version__ = "0.1.0"

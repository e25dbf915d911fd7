"""Berwald and metrizability analysis for m-Kropina Finsler metrics."""

__version__ = "0.1.0"

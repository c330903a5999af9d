"""Synthesis and verification of control closure certificates for polynomial systems."""

__version__ = "0.1.0"

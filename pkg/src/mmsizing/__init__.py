"""Inverse sizing of 28 GHz transceiver circuits with regression models."""

__version__ = "0.1.0"

"""Spacecraft inspection simulator with a barrier-function run-time assurance filter."""

__version__ = "0.1.0"

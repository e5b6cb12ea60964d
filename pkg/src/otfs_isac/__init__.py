"""MIMO-OTFS integrated sensing and communication toolkit."""

__version__ = "0.1.0"

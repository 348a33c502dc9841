"""Flow-rate control toolkit for a district heating station."""

__version__ = "0.1.0"

"""Crime hotspot classification on a proximity-weighted grid-cell graph."""

__version__ = "0.1.0"

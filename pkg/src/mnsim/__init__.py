"""Mobile network data simulator and ground-truth aggregation toolkit."""

__version__ = "0.1.0"

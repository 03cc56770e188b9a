"""pcq: heatmap-based object counting and count queries over frame streams."""

__version__ = "0.1.0"

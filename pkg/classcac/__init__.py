"""ClassCac: admission control experiments for adaptive multimedia cells."""

__version__ = "0.3.0"

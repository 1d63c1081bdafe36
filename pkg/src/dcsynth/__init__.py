"""On-the-fly directed controller synthesis with learned exploration policies."""

__version__ = "0.1.0"

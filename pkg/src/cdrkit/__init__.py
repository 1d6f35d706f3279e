"""Next-location prediction from call detail records with recurrent networks."""

__version__ = "0.1.0"

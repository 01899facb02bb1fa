"""Edge representations, excess spin and loop estimators for quantum spin chains."""

__version__ = "0.1.0"

"""Near-RT RIC conflict mitigation on top of a deterministic RAN simulator."""

__version__ = "0.1.0"

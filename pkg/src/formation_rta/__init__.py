"""Two-ship formation rejoin simulator with a barrier-function safety filter."""

__version__ = "0.1.0"

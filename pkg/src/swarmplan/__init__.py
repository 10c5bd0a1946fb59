"""Communication-free asynchronous multi-agent trajectory planning simulator."""

__version__ = "0.1.0"

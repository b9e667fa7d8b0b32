"""hChain: blockchain-backed smart-healthcare pipeline simulator."""

__version__ = "0.1.0"

"""Low-complexity linear precoding for MIMO channels with finite-alphabet
inputs and statistical channel knowledge."""

__version__ = "0.1.0"

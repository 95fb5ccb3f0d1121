"""Error-floor workbench for LDPC codes: absorption sets, linearized set
dynamics, clipped/quantized decoders and biased importance sampling."""

__version__ = "0.1.0"

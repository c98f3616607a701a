"""CAD toolkit for a dual-rail asynchronous FPGA fabric."""

__version__ = "0.1.0"

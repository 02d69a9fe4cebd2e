"""Wavelet-variation estimation of the Hurst index of Hermite processes."""

__version__ = "0.1.0"

"""
densmat: density estimation, classification and ordinal regression with
random Fourier features and density matrices
"""

__version__ = "1.0.0"

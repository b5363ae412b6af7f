"""
patchnorm - Patch-aware Batch Normalization toolkit
Normalization layers, a small autodiff tensor engine, and a desk-scale domain-shift harness.
"""

__version__ = "0.1.0"

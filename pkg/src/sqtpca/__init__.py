"""Desk-scale laboratory for Tensor PCA in the statistical query model."""

__version__ = "0.1.0"

"""Imbalanced-learning toolkit: bias-corrected evaluation (UIC), IPIP ensembles,
baseline resamplers and concordance analysis."""

__version__ = "0.1.0"

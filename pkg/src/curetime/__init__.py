"""Cure time model: estimation of the time after which cancer patients are statistically cured."""

__version__ = "0.1.0"

"""Camera-calibrated social distancing and mask compliance monitoring."""

__version__ = "0.1.0"

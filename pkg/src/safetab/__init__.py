"""SafeTab: differentially private detailed race and ethnicity tabulations."""

__version__ = "0.1.0"

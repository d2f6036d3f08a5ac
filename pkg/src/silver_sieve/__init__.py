"""Clean-subset detection for noisy silver-standard relation data."""
__version__ = "0.1.0"

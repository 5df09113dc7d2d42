"""Progressive guided multi-task denoising for small wet fingerprint images."""

__version__ = "0.1.0"

"""Joint transceiver design and Monte-Carlo evaluation for Cloud-RAN edge inference."""
__version__ = "0.1.0"

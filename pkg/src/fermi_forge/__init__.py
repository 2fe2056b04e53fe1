"""Classical and quantum dynamics of the atom-optics Fermi accelerator."""

__version__ = "0.1.0"

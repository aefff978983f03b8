"""Ground states and linearized spectra for Choquard / pseudo-relativistic Hartree equations."""
__version__ = "0.1.0"

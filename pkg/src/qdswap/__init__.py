"""Entanglement swapping between remote quantum-dot photon-pair sources."""
__version__ = "0.1.0"

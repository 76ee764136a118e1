"""Event-driven sEMG micro-gesture recognition with spiking networks."""

__version__ = "0.1.0"

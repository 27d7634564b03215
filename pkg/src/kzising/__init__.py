"""Kibble-Zurek quench circuits for the transverse-field Ising chain: noisy
statevector simulation and critical-scaling analysis."""

__version__ = "0.1.0"

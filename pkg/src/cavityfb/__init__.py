"""Quantum-trajectory simulation of a leaky cavity inside an instantaneous
feedback loop, with a Lindblad master-equation oracle, photon-correlation
metrology, and an exact sequential-Kraus/entangled-state equivalence check.
"""

__version__ = "0.1.0"

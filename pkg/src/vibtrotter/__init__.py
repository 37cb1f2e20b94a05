"""Vibrational Hamiltonian fragmentation, Trotter planning, resource counts
and statevector verification."""

__version__ = "0.1.0"

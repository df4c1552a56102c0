"""Finite-lattice numerics for bulk and edge Hall conductances of disordered
magnetic Schroedinger operators (Hofstadter discretization)."""

__version__ = "0.1.0"

SCHEMA_VERSION = "1"

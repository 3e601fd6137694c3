"""Bloch-band matterwave interferometry: lattice bands, shaken-lattice gate
synthesis, circuit stitching and inertial sensing simulations."""

__version__ = "0.1.0"

from .lattice import LatticeConfig, solve_bands, momentum_composition  # noqa: E402,F401

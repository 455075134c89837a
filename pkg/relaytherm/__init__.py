"""Relay-hysteresis thermocontrol: spectral simulation, periodic orbits, bifurcations, stability."""

__version__ = "1.0.0"

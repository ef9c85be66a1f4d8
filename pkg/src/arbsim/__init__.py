"""Simulation and evaluation toolkit for smart-speaker device arbitration.

Generates acoustically simulated multi-device scenarios with spatial ground
truth, renders per-device audio, and compares an energy-based arbitration
baseline against an end-to-end neural arbitrator.
"""

__version__ = "0.1.0"

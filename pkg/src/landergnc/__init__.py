"""Lunar lander GNC simulation library.

Deterministic closed-loop simulation of a small lunar lander: 6-DOF
truth dynamics with slosh and thruster transients, emulated sensors,
flight-style estimation/guidance/control, the mission mode machine,
four-phase powered descent, and a Monte Carlo dispersion harness.
"""

__version__ = "0.1.0"

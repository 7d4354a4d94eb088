"""Simulation of continuous-variable QKD coexisting with classical WDM traffic.

Modules follow the signal path: :mod:`snu` (shot-noise units and receiver
calibration), :mod:`alice` (shaped constellations, pilots, pulse shaping),
:mod:`channel` (loss, ASE/Raman leakage, laser impairments), :mod:`dsp`
(Bob's receiver chain), :mod:`security` (parameter estimation and key rate)
and :mod:`harness` (scenarios, sweeps, calibration, CLI).
"""
from .errors import ConfigError, CvqkdError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigError", "CvqkdError", "NumericalError", "__version__"]

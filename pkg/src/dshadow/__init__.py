"""Shadowing and hyperbolicity toolkit for linear delay difference equations.

Subpackages and modules:

* :mod:`dshadow.phase_space` -- segments, histories and their norms;
* :mod:`dshadow.finite_delay` -- finite-delay systems, simulation, defects;
* :mod:`dshadow.dichotomy` -- detection and verification of exponential dichotomies;
* :mod:`dshadow.shadowing` -- bounded solutions of forced equations and shadowing;
* :mod:`dshadow.volterra` -- convolution kernels, characteristic roots, spectral projections;
* :mod:`dshadow.suites`, :mod:`dshadow.scenario`, :mod:`dshadow.cli` -- property suites and the command line.
"""

__version__ = "0.1.0"

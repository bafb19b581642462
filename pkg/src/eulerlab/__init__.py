"""Numerical laboratory for the complete compressible Euler system.

Perfect-gas thermodynamics, a well-balanced finite-volume solver for the
scaled stratified system, weak/measure-valued solution checkers, relative
energy evaluation, an oscillatory-field builder and the low Mach/Froude
limit experiment.
"""

from eulerlab.thermo import GasParams, CutoffSpec

__version__ = "0.1.0"

__all__ = ["GasParams", "CutoffSpec", "__version__"]

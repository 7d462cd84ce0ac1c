"""Adiabatic and shortcut-to-adiabatic directional coupler simulation.

A two-waveguide coupler whose mismatch and coupling follow the Allen-Eberly
tanh/sech profiles, optionally dressed with a counterdiabatic coupling term.
"""

from sta_coupler.errors import (
    CouplerError,
    DegenerateField,
    Indeterminate,
    NonUnitary,
    NormDrift,
    NotReached,
    PurityDrift,
    TraceDrift,
)
from sta_coupler.profiles import (
    AllenEberlyScheme,
    ExactCounterdiabatic,
    GaussianCounterdiabatic,
    NoCounterdiabatic,
)

__version__ = "0.1.0"

__all__ = [
    "AllenEberlyScheme",
    "CouplerError",
    "DegenerateField",
    "ExactCounterdiabatic",
    "GaussianCounterdiabatic",
    "Indeterminate",
    "NoCounterdiabatic",
    "NonUnitary",
    "NormDrift",
    "NotReached",
    "PurityDrift",
    "TraceDrift",
    "__version__",
]

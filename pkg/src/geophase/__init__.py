"""Berry connection, curvature, geometric phases and monopole charges of
two-level Hamiltonians H(r) = s(r) + e(r).sigma."""

__version__ = "0.1.0"

from .errors import GeophaseError, NumericalError, UsageError
from .expr import parse, evaluate, value_and_derivatives
from .model import EFieldModel, from_strings, make_builtin, rotate_gauge, classify_contact
from .spectral import berry_connection, berry_curvature, berry_curvature_me, energies, eigenvector
from .integrate import QuadratureSettings, circulation, circle_loop, flux_sphere, charge_from_flux
from .strings import locate_piercings, winding_number, charge_from_windings, full_report

__all__ = [
    "GeophaseError", "NumericalError", "UsageError",
    "parse", "evaluate", "value_and_derivatives",
    "EFieldModel", "from_strings", "make_builtin", "rotate_gauge", "classify_contact",
    "berry_connection", "berry_curvature", "berry_curvature_me", "energies", "eigenvector",
    "QuadratureSettings", "circulation", "circle_loop", "flux_sphere", "charge_from_flux",
    "locate_piercings", "winding_number", "charge_from_windings", "full_report",
]

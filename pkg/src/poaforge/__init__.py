"""Price of Anarchy analysis for first-price auctions.

Modules:

* :mod:`poaforge.instance_model`: piecewise bid-to-value instances, validation, classes.
* :mod:`poaforge.welfare_engine`: exact auction and optimal welfare of piecewise instances.
* :mod:`poaforge.reduction_pipeline`: welfare-decreasing reductions down to a twin ceiling.
* :mod:`poaforge.worst_case_analysis`: the closed-form worst-case family and its optimum.
* :mod:`poaforge.equilibrium_lab`: explicit finite auctions, best-response checks, simulation.
* :mod:`poaforge.cli`: the ``poaforge`` command.
"""

from .errors import (DomainError, InvariantError, OracleFailure, ParseError, PoaForgeError,
                     StructuralError, UnsupportedClassError, ValidationError)
from .instance_model import (AnalyticInstance, InstanceClass, PiecewiseInstance, classify,
                             make_instance, potential, validate)
from .welfare_engine import WelfareReport, fpa, opt, poa
from .reduction_pipeline import reduce_to_twin, run_main
from .worst_case_analysis import optimize, poa_integral, poa_objective

__version__ = "0.1.0"

__all__ = [
    "AnalyticInstance", "DomainError", "InstanceClass", "InvariantError", "OracleFailure",
    "ParseError", "PiecewiseInstance", "PoaForgeError", "StructuralError",
    "UnsupportedClassError", "ValidationError", "WelfareReport", "classify", "fpa",
    "make_instance", "opt", "optimize", "poa", "poa_integral", "poa_objective", "potential",
    "reduce_to_twin", "run_main", "validate",
]

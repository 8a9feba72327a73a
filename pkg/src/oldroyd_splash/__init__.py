"""Free-boundary Oldroyd-B flow in conformal-Lagrangian coordinates.

Picard iteration around a linear Stokes-type solve, with the elastic stress
and the Lagrangian flux carried by ODEs at fixed labels, plus tools for
near-splash experiments and Sobolev-norm diagnostics.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .params import Params, InterfaceCurve, FieldSet, Snapshot, RunRecord  # noqa: E402
from .conformal import BranchMap, IdentityMap, DomainState, classify_physical  # noqa: E402
from .grid import Grid, build_reference_grid  # noqa: E402
from .scenario import Scenario, load_scenario, simulate  # noqa: E402

"""Thermodynamics of diffusion processes on grids, ensembles and closed forms.

Submodules
----------
numerics   grids, fields, Lyapunov solver, random streams
model      diffusion models and the named catalog
ou         closed-form stationary theory of Ornstein-Uhlenbeck processes
fpe        finite-volume Fokker-Planck generator, stationary solve, evolution
sde        Euler-Maruyama ensembles and the driven pendulum ledger
thermo     free energy, entropy production and the balance ledger
decomp     drift decomposition, MB classification, conservative flows
helmholtz  Boltzmann entropy, temperature, generalized force, Carnot curves
cli        config-driven batch runner
"""

__version__ = "0.1.0"

from . import decomp, errors, fpe, helmholtz, model, numerics, ou, sde, thermo  # noqa: E402
from .decomp import Classification, decompose  # noqa: E402
from .model import CATALOG, DiffusionModel, build_model  # noqa: E402
from .numerics import CurrentField, Grid, GridField  # noqa: E402

__all__ = [
    "__version__",
    "numerics",
    "model",
    "ou",
    "fpe",
    "sde",
    "thermo",
    "decomp",
    "helmholtz",
    "errors",
    "Grid",
    "GridField",
    "CurrentField",
    "DiffusionModel",
    "build_model",
    "CATALOG",
    "Classification",
    "decompose",
]

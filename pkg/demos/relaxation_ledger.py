"""Free-energy ledger for relaxation in a double well.

A narrow Gaussian placed in the left well relaxes under the Fokker-Planck
dynamics. Along the way the relative free energy F decreases monotonically and
its rate matches minus the entropy production, since a gradient drift has no
housekeeping input.

Run with ``python demos/relaxation_ledger.py``.
"""

import numpy as np

from diffthermo import fpe, thermo
from diffthermo.model import double_well_potential, make_gradient_model
from diffthermo.numerics import Grid

model = make_gradient_model(double_well_potential(), 1.0, 1.0)
grid = Grid(((-4.0, 4.0),), (401,))
op = fpe.assemble_operator(model, grid)
fss, J = fpe.stationary_density(op)

f0 = fpe.density_from_function(grid, lambda x: np.exp(-((x[..., 0] + 1.0) ** 2) / 0.2))
ev = fpe.evolve(op, f0, 1e-3, 2000, record_every=2)
L = thermo.ledger(ev, model, fss, circulation=J.vectors / fss.values[..., None])

print(f"{'t':>6} {'F':>10} {'e_p':>10} {'E_in':>10} {'dF/dt':>10}")
for i in range(0, len(L), 100):
    print(f"{L.t[i]:6.2f} {L.F[i]:10.5f} {L.ep_overdamped[i]:10.5f} {L.E_in[i]:10.2e} {L.dF_dt_numeric[i]:10.5f}")
print("F strictly decreasing:", bool(np.all(np.diff(L.F) < 0)))
print(f"max relative balance error: {np.max(L.relative_balance_error()):.2e}")

"""Sweep the additive part of the fitness and locate the condensation threshold.

With f(k, w) = w*k + c and weight density 2(1-w), the quantity
m* = E[c/(1-W)] equals 2c, so the model condenses for c < 1/2 and the
limiting share of edges sitting at the top of the support is 1 - 2c.

    python demos/phase_diagram.py
"""
import numpy as np

from rif import fitness as F
from rif import weights as W
from rif.expressions import const, identity
from rif.limits import degree_law, edge_law
from rif.malthus import solve_malthusian

dist = W.polynomial_density([2.0, -2.0])
print(f"{'c':>5} {'regime':>13} {'m*':>8} {'alpha':>8} {'atom':>8} {'p_0':>8}")
for c in np.round(np.linspace(0.05, 1.5, 30), 3):
    fm = F.gpaf(identity(), const(float(c)))
    rep = solve_malthusian(dist, fm)
    atom = edge_law(dist, fm, rep).atom_at_wstar
    p0 = degree_law(dist, fm, rep, k_max=0).marginal[0]
    alpha = "-" if rep.alpha is None else f"{rep.alpha:8.4f}"
    print(f"{c:5.2f} {rep.regime:>13} {rep.m_star if rep.m_star is not None else float('nan'):8.4f}"
          f" {alpha:>8} {atom:8.4f} {p0:8.4f}")

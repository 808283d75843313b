"""Watch a condensing model approach (slowly) its limit.

Weights have density 2(1-w) on [0, 1] and f(k, w) = w*k + 0.25. The solver
classifies the model as condensing: half of all edges end up attached to
vertices whose weight is arbitrarily close to 1. This script grows trees of
increasing size and prints how far the finite system still is from that
picture.

    python demos/condensation_walkthrough.py [t_max]
"""
import sys

from rif import fitness as F
from rif import weights as W
from rif.engine import run_replicas
from rif.expressions import const, identity
from rif.limits import edge_law
from rif.malthus import solve_malthusian


def main(t_max=10**6):
    dist = W.polynomial_density([2.0, -2.0])
    fm = F.gpaf(identity(), const(0.25))
    rep = solve_malthusian(dist, fm)
    atom = edge_law(dist, fm, rep).atom_at_wstar
    print(f"regime {rep.regime}: m* = {rep.m_star:.6f}, Z_t/t -> {rep.z_limit}, "
          f"edge atom at w*=1 -> {atom:.6f}")

    emp = run_replicas(dist, fm, t_max, 4, 1, k_max=10, epsilons=(0.01, 0.05, 0.2))
    zt = emp.z_over_t()
    print(f"{'t':>10} {'Z_t/t':>8} {'eps=.01':>8} {'eps=.05':>8} {'eps=.2':>8}")
    shown = set()
    for i, t in enumerate(emp.checkpoints):
        decade = len(str(int(t)))
        if decade in shown and t != emp.checkpoints[-1]:
            continue
        shown.add(decade)
        cells = [emp.window_mass(e)[i] for e in (0.01, 0.05, 0.2)]
        print(f"{t:>10} {zt[i]:8.4f} " + " ".join(f"{c:8.4f}" for c in cells))
    # Z_t/t creeps upward and the top windows keep filling, but the 10x
    # increases in t buy only small steps: the approach is logarithmic.


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 10**6)

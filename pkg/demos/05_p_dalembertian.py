"""The p-d'Alembertian, its energy and the comparison inequality.

Run: python demos/05_p_dalembertian.py   (about a minute)
"""

import numpy as np

from lorlab.busemann import busemann_field, vertical_line
from lorlab.causal import CausalGraph
from lorlab.cone import PExponent
from lorlab.grid import Grid, ScalarField
from lorlab.models import flrw, minkowski
from lorlab.pde import boundary_mask, energy_functional, p_dalembertian, p_harmonic_solve, weak_comparison_check

pq = PExponent(0.5)

# For b = r - rho with rho the distance to g(r), box_p b = 1/rho exactly.
grid = Grid(minkowski(2), (41, 41), [[-0.5, 0.5], [-0.5, 0.5]])
rho = np.sqrt((10 - grid.points()[..., 0]) ** 2 - grid.points()[..., 1] ** 2)
op = p_dalembertian(ScalarField(grid, 10 - rho, np.ones(grid.shape, bool)), pq)
print("max |rho * box_p(r - rho) - 1|:", float(np.nanmax(np.abs(op.field.values * rho - 1))))

# The operator is the gradient of a convex energy; Newton on that energy
# recovers p-harmonic functions from their boundary values.
exact = grid.points()[..., 0] - 0.2 * grid.points()[..., 1]
sol = p_harmonic_solve(ScalarField(grid, exact, boundary_mask(grid)), pq)
print(f"solver: converged={sol.converged} in {sol.iterations} steps, error {np.max(np.abs(sol.field.values - exact)):.1e}")
print("energy of t on the window:", energy_functional(ScalarField.from_function(grid, lambda p: p[..., 0]), pq).value)


def compare(chart, origin, dp_shape, window):
    cg = CausalGraph(Grid(chart, dp_shape), 3)
    b = busemann_field(cg, vertical_line(chart, origin), 1.0, "+", Grid(chart, (31, 31), window))
    return weak_comparison_check(b, pq)


# Weakly, box_p b_r^+ <= (n-1)/l(., g(r)) whenever the strong energy
# condition holds.  Minkowski saturates it, matter FLRW satisfies it and
# exponential expansion breaks it.
for name, chart, origin, shape, window in (
    ("minkowski", minkowski(2, box=[[-0.5, 1.1], [-0.5, 0.5]]), [0, 0], (81, 51), [[-0.4, 0.4], [-0.4, 0.4]]),
    ("flrw t^(2/3)", flrw(2, box=[[0.6, 2.1], [-0.4, 0.4]]), [1, 0], (76, 41), [[0.7, 1.3], [-0.3, 0.3]]),
    ("flrw exp(t)", flrw(2, "exp(t)", box=[[-0.4, 1.1], [-0.4, 0.4]]), [0, 0], (76, 41), [[-0.3, 0.3], [-0.3, 0.3]]),
):
    rep = compare(chart, origin, shape, window)
    ratio = np.array(rep.lhs) / np.array(rep.rhs)
    print(f"{name:13s}: {rep.verdict}  lhs/rhs in [{ratio.min():.3f}, {ratio.max():.3f}] over {rep.test_function_count} bumps")

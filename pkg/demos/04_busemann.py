"""Busemann functions of a timelike line and their limit.

Run: python demos/04_busemann.py   (about a minute)
"""

import numpy as np

from lorlab.busemann import busemann_limit, eikonal_check, steepness_ordering_check, vertical_line
from lorlab.causal import CausalGraph
from lorlab.grid import Grid
from lorlab.models import minkowski

# The t-axis of Minkowski space is a line.  b_r^+(x) = l(g(0), g(r)) - l(x, g(r))
# is evaluated on a unit window for r = 5, 10, 20, 40.
chart = minkowski(2, box=[[-41, 41], [-0.6, 0.6]])
cg = CausalGraph(Grid(chart, (821, 61)), 3)
line = vertical_line(chart, [0.0, 0.0])
window = Grid(chart, (21, 21), [[-0.5, 0.5], [-0.5, 0.5]])

bp = busemann_limit(cg, line, "+", [5, 10, 20, 40], window)
bm = busemann_limit(cg, line, "-", [-5, -10, -20, -40], window)

# The limit is coordinate time; the ladder gaps shrink roughly like 1/r.
t = window.points()[..., 0]
print("Cauchy gaps along the ladder:", np.round(bp.cauchy_gaps, 5))
print("max |b^+ - t| at r = 40:", float(np.nanmax(np.abs(bp.values.values - t))))
print("max |b^- - t| at r = 40:", float(np.nanmax(np.abs(bm.values.values - t))))

# b_r^+ >= b^+ >= b^- >= b_{-r}^- pointwise, all vanish on g(0), and every
# member is 1-steep: b(y) - b(x) >= l(x, y) for causal pairs.
rep = steepness_ordering_check(bp, bm, cg, sample_pairs=50)
print("ordering chain violation:", rep.chain_max_violation, " steepness violation:", rep.steepness_max_violation)

# The limit is eikonal: |db| = 1.
print("eikonal deviation:", eikonal_check(bp.values).max_deviation)

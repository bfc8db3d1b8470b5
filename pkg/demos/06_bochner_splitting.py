"""Hessians, the Bochner identity, Killing fields and the splitting detector.

Run: python demos/06_bochner_splitting.py   (about half a minute)
"""

import math

import numpy as np

from lorlab.busemann import busemann_limit, vertical_line
from lorlab.causal import CausalGraph
from lorlab.cone import PExponent
from lorlab.grid import Grid, ScalarField
from lorlab.models import flrw, minkowski, product
from lorlab.splitting import bochner_residual, killing_check, split_metric

pq = PExponent(0.5)

# For an eikonal b the two sides of the Bochner identity agree node by node.
# With b = r - rho both sides equal 1/rho^2.
grid = Grid(minkowski(2), (41, 41), [[-0.4, 0.4], [-0.4, 0.4]])
b = ScalarField.from_function(grid, lambda p: 10 - np.sqrt((10 - p[..., 0]) ** 2 - p[..., 1] ** 2))
res = bochner_residual(b, pq)
print("Bochner: max |lhs - rhs| =", float(np.nanmax(res.residual1.values)),
      " typical side =", float(np.nanmedian(res.lhs.values)))

# grad t is Killing on a product but not on an expanding universe.
fl = Grid(flrw(2), (11, 11), [[0.9, 1.1], [-0.1, 0.1]])
print("Killing defect of grad t on FLRW:", killing_check(ScalarField.from_function(fl, lambda p: p[..., 0])).max_norm)

# The splitting detector combines Hess b = 0, the Killing test, the level set
# {b = 0} and the flow of grad b.  On R x S^1(1.5) the DP-built Busemann
# function splits off the circle with induced metric rho^2 = 2.25.
circ = product("circle", 1.5, box=[[-41, 41], [0, 2 * math.pi]])
cg = CausalGraph(Grid(circ, (821, 120)), 3)
window = Grid(circ, (21, 21), [[-0.5, 0.5], [math.pi - 0.5, math.pi + 0.5]])
bc = busemann_limit(cg, vertical_line(circ, [0.0, math.pi]), "+", [5, 10, 20, 40], window)
rep = split_metric(bc)
print(f"R x S^1: {rep.verdict}, induced metric {float(np.ravel(rep.induced_metric_mean)[0]):.4f}, "
      f"hess residual {rep.hess_residual:.4f} (tolerance {rep.tolerances['hess']:.4f})")

# Coordinate time on matter FLRW is not a splitting function.
fg = Grid(flrw(2), (21, 21), [[0.5, 1.5], [-0.5, 0.5]])
rep = split_metric(ScalarField.from_function(fg, lambda p: p[..., 0] - 1.0))
print(f"FLRW: {rep.verdict}, hess residual {rep.hess_residual:.3f} (tolerance {rep.tolerances['hess']:.1e})")

# On R x S^2 the level set carries the round metric with curvature 1/4.
sg = Grid(product("sphere", 2.0), (11, 21, 21), [[-0.5, 0.5], [1.0, 2.0], [2.5, 3.5]])
rep = split_metric(ScalarField.from_function(sg, lambda p: p[..., 0]))
print(f"R x S^2: {rep.verdict}, induced Gaussian curvature {rep.induced_ricci_min:.4f}")

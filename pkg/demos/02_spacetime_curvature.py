"""Curvature of model spacetimes and energy conditions.

Run: python demos/02_spacetime_curvature.py
"""

import numpy as np

from lorlab.models import flrw, minkowski, product
from lorlab.spacetime import curvature_pack, energy_condition_check, sec_from_timesep, slice_mean_curvature

# Matter-dominated FLRW, a(t) = t^(2/3).  Finite differences of the metric
# give Christoffels, Riemann and Ricci; Ric_00 = -3 a''/a = 2/(3 t^2).
matter = flrw(4, "t^(2/3)")
rec = curvature_pack(matter, [1.0, 0.0, 0.0, 0.0])
print("FLRW t^(2/3): Ric_00 at t = 1 is", round(rec.ricci[0, 0], 6), "(closed form 2/3)")

# Energy conditions are sampled over random points and boosted observers.
for name, chart in (("minkowski", minkowski(4)), ("matter", matter),
                    ("de Sitter", flrw(4, "exp(t)", box=[[0.0, 2.0]] + [[-1.0, 1.0]] * 3))):
    rep = energy_condition_check(chart, "SEC", 10, seed=0)
    print(f"SEC on {name:9s}: {rep.verdict}  min Ric(v,v) = {rep.min_value:.4f}")

# Mean curvature of the slice t = 1 sets the Hawking bound sup l <= 3/h.
print("\nmean curvature of {t = 1}:", round(slice_mean_curvature(matter, 1.0, [0, 0, 0]), 6))

# R(u,v,u,v) can also be read off from time separations of short geodesics.
two = flrw(2, "t^(2/3)")
u, v = np.array([1.0, 0.0]), np.array([1.0, 0.3])
est = sec_from_timesep(two, [1.0, 0.0], u, v)
exact = np.einsum("abcd,a,b,c,d->", curvature_pack(two, [1.0, 0.0]).riemann, u, v, u, v)
print(f"R(u,v,u,v) from time separations: {est.value:.5f}   from curvature_pack: {exact:.5f}")

# Product R x S^2 has a round spatial factor with Gaussian curvature 1/rho^2.
print("R x S^2(2) scalar curvature:", round(curvature_pack(product("sphere", 2.0), [0, 1.2, 0.5]).scalar, 5))

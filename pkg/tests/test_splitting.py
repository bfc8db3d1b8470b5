import math

import numpy as np
import pytest
import sympy as sp

from lorlab.busemann import busemann_limit, vertical_line
from lorlab.causal import CausalGraph
from lorlab.cone import PExponent
from lorlab.errors import DomainError, UsageError
from lorlab.grid import Grid, ScalarField
from lorlab.models import flrw, minkowski, product
from lorlab.splitting import (
    bochner_residual,
    covariant_hessian,
    extract_level_set,
    killing_check,
    split_metric,
)

PQ = PExponent(0.5)


def eikonal_rho(grid, r):
    pts = grid.points()
    return r - np.sqrt((r - pts[..., 0]) ** 2 - pts[..., 1] ** 2)


def test_hessian_of_time_vanishes_on_minkowski():
    grid = Grid(minkowski(2), (11, 11), [[0, 1], [0, 1]])
    h = covariant_hessian(ScalarField.from_function(grid, lambda p: p[..., 0]))
    assert np.abs(h.values[h.mask]).max() < 1e-10


def test_hessian_matches_symbolic_closed_form():
    t, x, r = sp.symbols("t x r", real=True)
    u = r - sp.sqrt((r - t) ** 2 - x**2)
    hs = sp.hessian(u, (t, x))
    grid = Grid(minkowski(2), (41, 41), [[-0.4, 0.4], [-0.4, 0.4]])
    field = ScalarField(grid, eikonal_rho(grid, 10.0), np.ones(grid.shape, bool))
    h = covariant_hessian(field)
    for idx in [(20, 20), (10, 30), (33, 5)]:
        p = grid.point(idx)
        exact = np.array(hs.subs({t: p[0], x: p[1], r: 10.0}), dtype=float)
        np.testing.assert_allclose(h.values[idx], exact, atol=1e-6)
    # on the x-axis through t = 0 the xx entry is +(r - t)^2 / rho^3
    mid = grid.point((20, 30))
    rho = math.sqrt((10 - mid[0]) ** 2 - mid[1] ** 2)
    assert h.values[20, 30][1, 1] == pytest.approx((10 - mid[0]) ** 2 / rho**3, rel=1e-4)


def test_hessian_of_time_on_flrw():
    chart = flrw(2)
    grid = Grid(chart, (11, 11), [[0.9, 1.1], [-0.1, 0.1]])
    h = covariant_hessian(ScalarField.from_function(grid, lambda p: p[..., 0]))
    t = grid.points()[..., 0][h.mask]
    a, ad = t ** (2 / 3), (2 / 3) * t ** (-1 / 3)
    np.testing.assert_allclose(h.values[h.mask][:, 1, 1], -a * ad, rtol=1e-6)
    np.testing.assert_allclose(h.values[h.mask][:, 0, 0], 0.0, atol=1e-8)


def test_bochner_on_minkowski_busemann_closed_form():
    errs = []
    for shape in (41, 81):
        grid = Grid(minkowski(2), (shape, shape), [[-0.4, 0.4], [-0.4, 0.4]])
        field = ScalarField(grid, eikonal_rho(grid, 10.0), np.ones(grid.shape, bool))
        res = bochner_residual(field, PQ)
        rho = 10.0 - field.values
        m = res.lhs.mask
        np.testing.assert_allclose(res.lhs.values[m] * rho[m] ** 2, 1.0, rtol=0.05)
        np.testing.assert_allclose(res.rhs.values[m] * rho[m] ** 2, 1.0, rtol=0.05)
        scale = np.nanmax(np.abs(res.lhs.values))
        errs.append(np.nanmax(res.residual1.values))
        assert errs[-1] < 0.05 * scale
    assert errs[1] < 0.5 * errs[0]


def test_bochner_exact_for_affine_eikonal():
    grid = Grid(minkowski(2), (21, 21), [[0, 1], [0, 1]])
    c = 1 / math.sqrt(0.96)
    field = ScalarField.from_function(grid, lambda p: c * (p[..., 0] - 0.2 * p[..., 1]))
    res = bochner_residual(field, PQ)
    assert np.nanmax(res.residual1.values) < 1e-10
    assert res.residual2.mask.any()
    assert np.nanmax(res.residual2.values) < 1e-10


def test_bochner_rejects_non_eikonal():
    grid = Grid(minkowski(2), (11, 11), [[0, 1], [0, 1]])
    with pytest.raises(DomainError, match="node"):
        bochner_residual(ScalarField.from_function(grid, lambda p: 2 * p[..., 0]), PQ)


def test_killing():
    grid = Grid(minkowski(2), (11, 11), [[0, 1], [0, 1]])
    assert killing_check(ScalarField.from_function(grid, lambda p: p[..., 0])).max_norm < 1e-10
    circ = product("circle", 1.5, box=[[0, 1], [0, 2 * math.pi]])
    g2 = Grid(circ, (11, 11), [[0, 1], [2.5, 3.5]])
    assert killing_check(ScalarField.from_function(g2, lambda p: p[..., 0])).max_norm < 1e-10
    fl = flrw(2)
    g3 = Grid(fl, (11, 11), [[0.9, 1.1], [-0.1, 0.1]])
    res = killing_check(ScalarField.from_function(g3, lambda p: p[..., 0]), norm="frobenius")
    t = g3.points()[..., 0][res.mask]
    expected = 2 * t ** (2 / 3) * (2 / 3) * t ** (-1 / 3)
    np.testing.assert_allclose(np.abs(res.lie[res.mask][:, 1, 1]), expected, rtol=1e-5)
    with pytest.raises(UsageError):
        killing_check(ScalarField.from_function(g3, lambda p: p[..., 0]), norm="max")


def test_level_set_extraction():
    grid = Grid(minkowski(2), (11, 5), [[-1, 1], [0, 1]])
    sigma = extract_level_set(ScalarField.from_function(grid, lambda p: p[..., 0] - 0.1 * p[..., 1]))
    assert sigma.complete
    np.testing.assert_allclose(sigma.tau, 0.1 * grid.axis(1), atol=1e-12)
    partial = extract_level_set(ScalarField.from_function(grid, lambda p: p[..., 0] + 2 * p[..., 1]))
    assert not partial.complete


def test_split_verdicts_for_closed_form_fields():
    mk = Grid(minkowski(2), (21, 21), [[-0.5, 0.5], [-0.5, 0.5]])
    rep = split_metric(ScalarField.from_function(mk, lambda p: p[..., 0]))
    assert rep.verdict == "splits"
    np.testing.assert_allclose(rep.induced_metric_mean, [[1.0]], rtol=1e-9)
    assert rep.induced_ricci_min == 0.0
    fl = Grid(flrw(2), (21, 21), [[0.5, 1.5], [-0.5, 0.5]])
    rep = split_metric(ScalarField.from_function(fl, lambda p: p[..., 0] - 1.0))
    assert rep.verdict == "no-split"
    assert rep.hess_residual > 100 * rep.tolerances["hess"]


def test_split_sphere_product_induced_curvature():
    chart = product("sphere", 2.0)
    grid = Grid(chart, (11, 21, 21), [[-0.5, 0.5], [1.0, 2.0], [2.5, 3.5]])
    rep = split_metric(ScalarField.from_function(grid, lambda p: p[..., 0]))
    assert rep.verdict == "splits"
    assert rep.induced_ricci_min == pytest.approx(0.25, rel=0.02)


def test_split_rejects_wrapped_grid():
    grid = Grid(product("circle", 1.0, box=[[0, 1], [0, 2 * math.pi]]), (5, 8))
    with pytest.raises(UsageError):
        split_metric(ScalarField.from_function(grid, lambda p: p[..., 0]))


def test_split_minkowski_busemann_limit():
    chart = minkowski(2, box=[[-11, 11], [-0.6, 0.6]])
    cg = CausalGraph(Grid(chart, (221, 61)), 3)
    ev = Grid(chart, (11, 11), [[-0.5, 0.5], [-0.5, 0.5]])
    b = busemann_limit(cg, vertical_line(chart, [0, 0]), "+", [2.5, 5, 10], ev, segments=12)
    rep = split_metric(b)
    assert rep.verdict == "splits"
    np.testing.assert_allclose(rep.induced_metric_mean, [[1.0]], rtol=0.02)

import math
import warnings

import numpy as np
import pytest

from lorlab.busemann import (
    busemann_field,
    busemann_limit,
    check_line,
    eikonal_check,
    regularity_diagnostics,
    steepness_ordering_check,
    vertical_line,
)
from lorlab.causal import CausalGraph
from lorlab.errors import DomainError, TruncationWarning, UsageError
from lorlab.grid import Grid, ScalarField
from lorlab.models import flrw, minkowski


@pytest.fixture(scope="module")
def setup():
    chart = minkowski(2, box=[[-11, 11], [-0.6, 0.6]])
    grid = Grid(chart, (221, 61))
    cg = CausalGraph(grid, 3)
    line = vertical_line(chart, [0.0, 0.0])
    ev = Grid(chart, (9, 9), [[-0.4, 0.4], [-0.4, 0.4]])
    return chart, cg, line, ev


@pytest.fixture(scope="module")
def limits(setup):
    _, cg, line, ev = setup
    bp = busemann_limit(cg, line, "+", [2.5, 5, 10], ev, segments=12)
    bm = busemann_limit(cg, line, "-", [-2.5, -5, -10], ev, segments=12)
    return bp, bm


def test_line_checks(setup):
    chart, cg, line, _ = setup
    assert check_line(cg, line, [-5, 0, 5]) < 1e-9
    with pytest.raises(DomainError):
        line(100.0)
    scaled = minkowski(2)
    scaled.metric = lambda x: np.broadcast_to(np.diag([4.0, -1.0]), np.shape(x)[:-1] + (2, 2))
    with pytest.raises(UsageError):
        vertical_line(scaled, [0.0, 0.0])


def test_finite_r_field_matches_closed_form(setup):
    _, cg, line, ev = setup
    f = busemann_field(cg, line, 5.0, "+", ev, segments=12)
    pts = ev.points()
    exact = 5.0 - np.sqrt((5.0 - pts[..., 0]) ** 2 - pts[..., 1] ** 2)
    assert np.nanmax(np.abs(f.values.values - exact)) < 1e-6
    assert f.origin_value == pytest.approx(0.0, abs=1e-9)


def test_sign_and_range_errors(setup):
    _, cg, line, ev = setup
    with pytest.raises(UsageError):
        busemann_field(cg, line, -1.0, "+", ev)
    with pytest.raises(UsageError):
        busemann_field(cg, line, 1.0, "x", ev)
    with pytest.raises(DomainError):
        busemann_field(cg, line, 11.5, "+", ev)


def test_ladder_truncation_warns(setup):
    _, cg, line, ev = setup
    with pytest.warns(TruncationWarning):
        f = busemann_limit(cg, line, "+", [2.5, 50.0], ev, segments=8)
    assert f.r == 2.5


def test_limit_approaches_time_with_shrinking_gaps(setup, limits):
    _, _, _, ev = setup
    bp, bm = limits
    t = ev.points()[..., 0]
    for f in (bp, bm):
        assert np.nanmax(np.abs(f.values.values - t)) < 0.02
        gaps = f.cauchy_gaps
        assert all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
        assert f.monotone_excess <= 1e-9


def test_ordering_and_steepness(setup, limits):
    _, cg, _, _ = setup
    bp, bm = limits
    rep = steepness_ordering_check(bp, bm, cg, sample_pairs=60, seed=1)
    assert rep.verdict == "pass"
    assert rep.chain_max_violation <= 1e-6
    assert max(abs(v) for v in rep.origin_values.values()) <= 1e-6
    assert rep.plus_minus_gap < 0.02


def test_regularity_and_eikonal(limits):
    bp, bm = limits
    reg = regularity_diagnostics(bp.ladder + bm.ladder)
    assert reg.lipschitz == pytest.approx(1.0, abs=0.02)
    eik = eikonal_check(bp.values)
    assert eik.verdict == "pass"


def test_eikonal_rejects_non_unit_field():
    chart = minkowski(2)
    ev = Grid(chart, (9, 9), [[-0.4, 0.4], [-0.4, 0.4]])
    f = ScalarField.from_function(ev, lambda p: 2 * p[..., 0])
    assert eikonal_check(f).verdict == "fail"

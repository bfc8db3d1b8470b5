"""Acceptance criteria 1-13, one test each.

Every test prints and records a single ``criterion N: PASS|FAIL`` line with
the measured values; the lines are repeated in the terminal summary.
"""

import itertools
import json
import math
import warnings

import numpy as np
import pytest
import sympy as sp

from conftest import ACCEPTANCE_LINES
from lorlab.busemann import busemann_field, busemann_limit, steepness_ordering_check, vertical_line
from lorlab.causal import CausalGraph, longest_from, longest_to, q_independence_check, time_separation_points
from lorlab.cli import main
from lorlab.cone import PExponent, hamiltonian_hessian, legendre_check, momentum
from lorlab.errors import ConditioningWarning
from lorlab.experiments import reverse_triangle_sample
from lorlab.grid import Grid, ScalarField
from lorlab.models import flrw, minkowski, product
from lorlab.pde import p_dalembertian, weak_comparison_check
from lorlab.spacetime import energy_condition_check, slice_mean_curvature
from lorlab.splitting import bochner_residual, split_metric
from test_causal import brute_force_longest

PQ = PExponent(0.5)


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared Minkowski Busemann fields on the unit window, ladder r = 5, 10, 20, 40


@pytest.fixture(scope="module")
def minkowski_busemann():
    chart = minkowski(2, box=[[-41, 41], [-0.6, 0.6]])
    cg = CausalGraph(Grid(chart, (821, 61)), 3)
    line = vertical_line(chart, [0.0, 0.0])
    ev = Grid(chart, (21, 21), [[-0.5, 0.5], [-0.5, 0.5]])
    bp = busemann_limit(cg, line, "+", [5, 10, 20, 40], ev, segments=16)
    bm = busemann_limit(cg, line, "-", [-5, -10, -20, -40], ev, segments=16)
    return cg, ev, bp, bm


def test_criterion_01_minkowski_time_separation():
    cg = CausalGraph(Grid(minkowski(2), (200, 200), [[0, 2], [-1, 1]]), 3)
    res = time_separation_points(cg, [0, 0], [2, 1], q=0.5)
    rel = abs(res.refined_value - math.sqrt(3)) / math.sqrt(3)
    dev = q_independence_check(cg, [0, 0], [2, 1], [0.5, -1.0, 0.9])
    ok = rel < 0.01 and dev < 1e-3 * res.refined_value
    verdict(1, ok, f"rel error {rel:.2e} < 1e-2, q-deviation {dev:.2e} < {1e-3 * res.refined_value:.2e}")


def test_criterion_02_reverse_triangle():
    details = []
    ok = True
    for name, chart, box in (
        ("minkowski", minkowski(2), [[0, 2], [-1, 1]]),
        ("flrw", flrw(2), [[0.5, 2.5], [-1, 1]]),
    ):
        cg = CausalGraph(Grid(chart, (101, 101), box), 3)
        worst, count = reverse_triangle_sample(cg, 10_000, seed=11, sources=50)
        ok &= count == 10_000 and worst <= 1e-6
        details.append(f"{name}: {count} triples, worst excess {worst:.2e}")
    verdict(2, ok, "; ".join(details) + " (tolerance 1e-6)")


def test_criterion_03_busemann_limit(minkowski_busemann):
    cg, ev, bp, bm = minkowski_busemann
    t = ev.points()[..., 0]
    err = max(float(np.nanmax(np.abs(f.values.values - t))) for f in (bp, bm))
    gaps_ok = all(
        all(b < a for a, b in zip(f.cauchy_gaps[:-1], f.cauchy_gaps[1:])) for f in (bp, bm)
    )
    rep = steepness_ordering_check(bp, bm, cg, sample_pairs=100, seed=5)
    origin = max(abs(v) for v in rep.origin_values.values())
    ok = err < 0.02 and gaps_ok and rep.chain_max_violation <= 1e-6 and origin <= 1e-6
    verdict(3, ok, f"max |b - t| = {err:.4f} < 0.02, gaps {['%.4f' % g for g in bp.cauchy_gaps]} decreasing={gaps_ok}, "
               f"chain violation {rep.chain_max_violation:.1e}, origin {origin:.1e}")


def test_criterion_04_hamiltonian_hessian():
    eta = np.diag([1.0, -1.0])
    _, lam = hamiltonian_hessian([1.0, 0.0], PQ, eta)
    exact = np.max(np.abs(np.sort(lam) - [0.5, 1.0])) < 1e-12
    rng = np.random.default_rng(4)
    eta4 = np.diag([1.0, -1.0, -1.0, -1.0])
    worst = math.inf
    for _ in range(10_000):
        space = rng.normal(size=3)
        w = np.concatenate([[np.linalg.norm(space) * (1 + rng.uniform(0.01, 2))], space])
        p = rng.uniform(-5, 0.999)
        if abs(p) < 1e-3:
            continue
        worst = min(worst, float(hamiltonian_hessian(w, PExponent(p), eta4)[1].min()))
    onset = [float(hamiltonian_hessian([1.0, 0.0], PExponent(p), eta)[1].min()) for p in (0.9, 0.99, 0.999, 0.9999)]
    degenerate = all(b < a for a, b in zip(onset[:-1], onset[1:])) and onset[-1] < 1e-3
    ok = exact and worst > 0 and degenerate
    verdict(4, ok, f"eigenvalues {np.sort(lam).tolist()}, min over 1e4 samples {worst:.2e} > 0, "
               f"min eigenvalue as p->1 {['%.0e' % v for v in onset]}")


def test_criterion_05_legendre():
    t, x, p = sp.symbols("t x p", real=True)
    L = -sp.sqrt(t**2 - x**2) ** (p / (p - 1)) / (p / (p - 1))
    grad = [sp.lambdify((t, x, p), -sp.diff(L, s)) for s in (t, x)]
    eta = np.diag([1.0, -1.0])
    rng = np.random.default_rng(5)
    worst_formula = 0.0
    worst_round = 0.0
    for _ in range(2000):
        xv = rng.uniform(-2, 2)
        v = np.array([abs(xv) * (1 + rng.uniform(0.05, 2)), xv])
        pv = rng.uniform(-4, 0.95)
        if abs(pv) < 1e-2:
            continue
        pq = PExponent(pv)
        sym = np.array([g(v[0], v[1], pv) for g in grad])
        worst_formula = max(worst_formula, float(np.max(np.abs(momentum(v, pq, eta) - sym) / np.abs(sym).max())))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConditioningWarning)
            worst_round = max(worst_round, legendre_check(v, pq, eta) / np.linalg.norm(v))
    ok = worst_round < 1e-8 and worst_formula < 1e-10
    verdict(5, ok, f"round-trip residual {worst_round:.1e} < 1e-8, closed form vs symbolic {worst_formula:.1e}")


def _bfield(chart, origin, dp_box, dp_shape, window, r=1.0, shape=31):
    cg = CausalGraph(Grid(chart, dp_shape, dp_box), 3)
    ev = Grid(chart, (shape, shape), window)
    return busemann_field(cg, vertical_line(chart, origin), r, "+", ev, segments=16)


@pytest.fixture(scope="module")
def minkowski_compare_field():
    chart = minkowski(2, box=[[-0.5, 1.1], [-0.5, 0.5]])
    return _bfield(chart, [0, 0], None, (81, 51), [[-0.4, 0.4], [-0.4, 0.4]])


def test_criterion_06_weak_comparison(minkowski_compare_field):
    mk = weak_comparison_check(minkowski_compare_field, PQ)
    mk_gap = max(abs(a - b) / b for a, b in zip(mk.lhs, mk.rhs))
    matter = flrw(2, "t^(2/3)", box=[[0.6, 2.1], [-0.4, 0.4]])
    fl = weak_comparison_check(_bfield(matter, [1, 0], None, (76, 41), [[0.7, 1.3], [-0.3, 0.3]]), PQ)
    ds = flrw(2, "exp(t)", box=[[-0.4, 1.1], [-0.4, 0.4]])
    neg = weak_comparison_check(_bfield(ds, [0, 0], None, (76, 41), [[-0.3, 0.3], [-0.3, 0.3]]), PQ)
    ok = (
        mk.test_function_count == 25 and mk_gap < 0.02
        and fl.test_function_count == 25 and fl.verdict == "pass"
        and neg.test_function_count > 0 and neg.verdict == "fail"
    )
    verdict(6, ok, f"minkowski max |lhs-rhs|/rhs {mk_gap:.1e} < 0.02 over {mk.test_function_count} bumps; "
               f"flrw t^(2/3) {fl.verdict} on {fl.test_function_count} bumps (max violation {fl.max_violation:.3f}); "
               f"flrw exp(t) {neg.verdict} (violation {neg.max_violation:.3f}, negative control)")


def test_criterion_07_pointwise_comparison(minkowski_compare_field):
    b = minkowski_compare_field
    op = p_dalembertian(b.values, PQ).field
    ell = b.ell.values
    pts = b.grid.points()
    rho = np.sqrt((1 - pts[..., 0]) ** 2 - pts[..., 1] ** 2)
    m = op.mask & np.isfinite(ell)
    rel = np.abs(op.values[m] - 1 / ell[m]) * ell[m]
    closed = np.max(np.abs(ell[m] - rho[m]))
    ok = m.sum() > 0 and rel.max() < 0.02 and closed < 1e-6
    verdict(7, ok, f"max relative gap {rel.max():.2e} < 0.02 over {m.sum()} interior nodes; |l - rho| <= {closed:.1e}")


def test_criterion_08_bochner():
    chart = minkowski(2, box=[[-0.6, 10.4], [-0.6, 0.6]])
    b = _bfield(chart, [0, 0], None, (221, 61), [[-0.5, 0.5], [-0.5, 0.5]], r=10.0, shape=21)
    res = bochner_residual(b, PQ)
    scale = float(np.nanmax(np.abs(res.lhs.values)))
    rel = float(np.nanmax(res.residual1.values)) / scale
    rho = b.ell.values
    m = res.lhs.mask
    sides = max(float(np.max(np.abs(res.lhs.values[m] * rho[m] ** 2 - 1))),
                float(np.max(np.abs(res.rhs.values[m] * rho[m] ** 2 - 1))))
    g = Grid(minkowski(2), (21, 21), [[0, 1], [0, 1]])
    affine = bochner_residual(
        ScalarField.from_function(g, lambda p: (p[..., 0] - 0.2 * p[..., 1]) / math.sqrt(0.96)), PQ)
    aff = float(np.nanmax(affine.residual1.values))
    errs = []
    for n in (41, 81):
        gh = Grid(minkowski(2), (n, n), [[-0.4, 0.4], [-0.4, 0.4]])
        field = ScalarField.from_function(gh, lambda p: 10 - np.sqrt((10 - p[..., 0]) ** 2 - p[..., 1] ** 2))
        errs.append(float(np.nanmax(bochner_residual(field, PQ).residual1.values)))
    ok = rel < 0.05 and sides < 0.05 and aff < 1e-10 and errs[1] <= 0.5 * errs[0]
    verdict(8, ok, f"residual1/term {rel:.1e} < 5%, sides vs 1/rho^2 within {sides:.1e}, affine {aff:.1e} < 1e-10, "
               f"halving {errs[0]:.2e} -> {errs[1]:.2e}")


def test_criterion_09_splitting(minkowski_busemann):
    rho0 = 1.5
    circ = product("circle", rho0, box=[[-41, 41], [0, 2 * math.pi]])
    cg = CausalGraph(Grid(circ, (821, 120)), 3)
    ev = Grid(circ, (21, 21), [[-0.5, 0.5], [math.pi - 0.5, math.pi + 0.5]])
    b = busemann_limit(cg, vertical_line(circ, [0.0, math.pi]), "+", [5, 10, 20, 40], ev, segments=16)
    rc = split_metric(b)
    h = float(np.asarray(rc.induced_metric_mean).reshape(-1)[0])
    circle_ok = rc.verdict == "splits" and abs(h - rho0**2) / rho0**2 < 0.02 and rc.induced_ricci_min >= -rc.tolerances["hess"]

    fl = flrw(2)
    g = Grid(fl, (21, 21), [[0.5, 1.5], [-0.5, 0.5]])
    rf = split_metric(ScalarField.from_function(g, lambda p: p[..., 0] - 1.0))
    t = g.points()[..., 0][1:-1, 1:-1]
    oracle = float(np.max((2 / 3) / t))  # |Hess t| = a'/a in the reference norm
    flrw_ok = rf.verdict == "no-split" and abs(rf.hess_residual - oracle) / oracle < 0.05

    _, _, bp, bm = minkowski_busemann
    rp, rm = split_metric(bp), split_metric(bm)
    diff = float(np.nanmax(np.abs(bp.values.values - bm.values.values)))
    mk_ok = rp.verdict == rm.verdict == "splits" and diff < 0.02
    ok = circle_ok and flrw_ok and mk_ok
    verdict(9, ok, f"circle {rc.verdict} h = {h:.4f} vs {rho0**2} (ricci {rc.induced_ricci_min}); flrw {rf.verdict} "
               f"hess {rf.hess_residual:.3f} vs oracle {oracle:.3f}; minkowski b+ {rp.verdict}, b- {rm.verdict}, "
               f"max|b+ - b-| = {diff:.4f}")


def test_criterion_10_hawking():
    chart = flrw(4, "t^(2/3)")
    h = slice_mean_curvature(chart, 1.0, [0.0, 0.0, 0.0])
    grid = Grid(chart, (50, 9, 9, 9), [[0.02, 1.0]] + [[-2.0, 2.0]] * 3)
    cg = CausalGraph(grid, 1)
    targets = [(49,) + idx for idx in itertools.product(range(9), repeat=3)]
    vals = longest_to(cg, targets).values
    sup = float(np.max(vals[np.isfinite(vals)]))
    ok = abs(h - 2) / 2 < 0.01 and 0.97 <= sup <= 1.0 and sup <= 3 / h
    verdict(10, ok, f"h = {h:.6f} (2 +- 1%), sup l = {sup:.4f} in [0.97, 1.0], bound 3/h = {3 / h:.4f}")


def test_criterion_11_energy_conditions():
    flat = [energy_condition_check(minkowski(4), c, 20, seed=1).verdict for c in ("SEC", "NEC", "WEC")]
    ds = flrw(4, "exp(t)", box=[[0.0, 2.0]] + [[-1.0, 1.0]] * 3)
    rep = energy_condition_check(ds, "SEC", 50, seed=2)
    como = np.asarray(rep.comoving_values)
    ok = flat == ["pass"] * 3 and rep.verdict == "fail" and np.all(como < 0) and np.max(np.abs(como / -3 - 1)) < 0.02
    verdict(11, ok, f"minkowski SEC/NEC/WEC {flat}; de Sitter SEC {rep.verdict}, comoving Ric(e0,e0) in "
                f"[{como.min():.4f}, {como.max():.4f}] (-3 +- 2%), all {len(como)} negative")


def test_criterion_12_small_dp_optimality():
    cases = [
        (minkowski(2), (12, 12), [[0, 1], [0, 1]], 1),
        (minkowski(2), (8, 8), [[0, 1], [0, 1]], 2),
        (minkowski(2), (6, 6), [[0, 1], [0, 1.5]], 3),
        (flrw(2), (12, 12), [[0.5, 1.5], [0, 1]], 1),
        (flrw(2, "exp(t)"), (8, 8), [[0.5, 1.5], [0, 1]], 2),
        (product("circle", 0.6), (10, 8), [[0, 1.5], [0, 2 * math.pi]], 1),
        (minkowski(3), (5, 5, 5), [[0, 1], [0, 1], [0, 1]], 1),
    ]
    checked = 0
    ok = True
    for chart, shape, box, radius in cases:
        cg = CausalGraph(Grid(chart, shape, box), radius)
        for src in [(0,) * len(shape), (0,) + tuple(s // 2 for s in shape[1:]), (2,) + (1,) * (len(shape) - 1)]:
            ok &= bool(np.array_equal(longest_from(cg, src).values, brute_force_longest(cg, src)))
            checked += 1
    verdict(12, ok, f"DP equals exhaustive enumeration exactly on {checked} (grid, source) cases")


DETERMINISM_CONFIGS = {
    "timesep": "model.name = minkowski\ngrid.shape = 60,60\ngrid.box = 0,2; -1,1\npoints.x = 0,0\npoints.y = 2,1\n"
               "q = 0.5,-1\nrti.samples = 500\nseed = 4\n",
    "busemann": "model.name = minkowski\nmodel.box = -11,11; -0.6,0.6\ngrid.shape = 221,61\nline.origin = 0,0\n"
                "eval.shape = 7,7\neval.box = -0.3,0.3; -0.3,0.3\nr = 2.5,5,10\nsteepness.samples = 20\n"
                "refine.segments = 8\nseed = 4\n",
    "compare": "model.name = minkowski\nmodel.box = -0.5,1.1; -0.5,0.5\np = 0.5\nr = 1\ngrid.shape = 41,26\n"
               "line.origin = 0,0\neval.shape = 15,15\neval.box = -0.4,0.4; -0.4,0.4\nrefine.segments = 8\n",
    "bochner": "model.name = minkowski\nmodel.box = -0.6,10.4; -0.6,0.6\np = 0.5\nr = 10\ngrid.shape = 111,31\n"
               "line.origin = 0,0\neval.shape = 11,11\neval.box = -0.5,0.5; -0.5,0.5\nrefine.segments = 8\n",
    "split": "model.name = flrw\nmodel.n = 2\nfield.kind = time\nline.origin = 1,0\nexpect.negative = true\n",
    "energycond": "model.name = flrw\nmodel.n = 4\nmodel.a = t^(2/3)\nenergy.samples = 10\nseed = 8\n",
    "hawking": "model.name = flrw\nmodel.n = 3\nslice.t0 = 1\ngrid.shape = 30,7,7\n",
    "seccheck": "model.name = flrw\nmodel.n = 2\nsec.point = 1,0\n",
}


def test_criterion_13_determinism(tmp_path):
    identical = []
    for name, text in DETERMINISM_CONFIGS.items():
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(f"experiment = {name}\n" + text)
        outputs = []
        for threads in ("1", "3", "3"):
            out = tmp_path / f"{name}-{threads}-{len(outputs)}"
            code = main([name, "--config", str(cfg), "--out", str(out), "--threads", threads])
            files = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "timings.json"}
            outputs.append((code, files))
        same = all(o == outputs[0] for o in outputs[1:])
        ran = json.loads(outputs[0][1]["report.json"])["verdict"] != "error"
        identical.append((name, same and ran))
    ok = all(flag for _, flag in identical)
    verdict(13, ok, "byte-identical reports and fields across threads 1/3/3: "
                + ", ".join(f"{n}={'yes' if f else 'NO'}" for n, f in identical))

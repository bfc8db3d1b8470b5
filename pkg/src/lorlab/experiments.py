"""Named experiment pipelines used by the ``lorlab`` command.

Each runner takes a validated :class:`~lorlab.config.ExperimentConfig` and
returns an :class:`Outcome`: a list of checks (measured value, tolerance,
pass flag), a results dictionary and scalar fields to be written as CSV.
Exactly one check per experiment is marked primary; ``--expect-negative``
inverts that one only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .busemann import (
    busemann_field,
    busemann_limit,
    eikonal_check,
    regularity_diagnostics,
    steepness_ordering_check,
    vertical_line,
)
from .causal import CausalGraph, longest_from, longest_to, time_separation_points
from .cone import NEG_INF, PExponent
from .config import ExperimentConfig
from .errors import UsageError
from .grid import Grid, ScalarField
from .models import make_model
from .pde import p_dalembertian, weak_comparison_check
from .spacetime import curvature_pack, energy_condition_check, sec_from_timesep, slice_mean_curvature
from .splitting import bochner_residual, killing_check, split_metric


@dataclass
class Check:
    name: str
    measured: Any
    tolerance: Any
    relation: str
    passed: bool
    primary: bool = False
    negative_passed: Optional[bool] = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "relation": self.relation,
            "passed": bool(self.passed),
            "primary": self.primary,
        }


@dataclass
class Outcome:
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)


def _check_le(name, measured, tol, primary=False) -> Check:
    return Check(name, measured, tol, "<=", bool(measured <= tol), primary)


# ---------------------------------------------------------------------------
# shared setup


def _chart(cfg: ExperimentConfig):
    return make_model(cfg.model_name, **cfg.model_params)


def _grid(cfg: ExperimentConfig, chart, default_shape=None) -> Grid:
    shape = cfg.get("grid.shape", default_shape)
    if shape is None:
        raise UsageError("grid.shape is required for this experiment")
    return Grid(chart, shape, cfg.get("grid.box"))


def _graph(cfg: ExperimentConfig, grid: Grid, default_radius: int = 3) -> CausalGraph:
    return CausalGraph(grid, cfg.get("grid.radius", default_radius))


def _origin(cfg: ExperimentConfig, chart) -> np.ndarray:
    origin = cfg.get("line.origin")
    return chart.box.mean(axis=1) if origin is None else np.asarray(origin, dtype=float)


def _eval_grid(cfg: ExperimentConfig, chart, origin) -> Grid:
    shape = cfg.get("eval.shape", [21] * chart.n)
    box = cfg.get("eval.box")
    if box is None:
        box = [[o - 0.5, o + 0.5] for o in origin]
    return Grid(chart, shape, box)


def _is_static_product(cfg: ExperimentConfig) -> bool:
    name = cfg.model_name.lower()
    return name == "minkowski" or name.startswith("product")


def _p(cfg: ExperimentConfig) -> PExponent:
    return PExponent(cfg.p if cfg.p is not None else 0.5)


def _ladder(cfg: ExperimentConfig):
    r = cfg.get("r")
    return None if r is None else [abs(x) for x in r]


def _segments(cfg: ExperimentConfig) -> int:
    return cfg.get("refine.segments", 16)


# ---------------------------------------------------------------------------
# experiments


def run_timesep(cfg: ExperimentConfig, threads=None) -> Outcome:
    chart = _chart(cfg)
    grid = _grid(cfg, chart)
    cg = _graph(cfg, grid)
    x = cfg.get("points.x")
    y = cfg.get("points.y")
    if x is None or y is None:
        raise UsageError("timesep needs points.x and points.y")
    qs = cfg.get("q", [0.5])
    per_q = {}
    value = NEG_INF
    for q in qs:
        res = time_separation_points(cg, x, y, q, _segments(cfg))
        per_q[f"{q:g}"] = res.refined_value
        value = res.value
    refined = list(per_q.values())
    ell = refined[0]
    out = Outcome()
    out.results = {"dp_value": value, "refined": per_q, "ell": ell}
    finite = [v for v in refined if np.isfinite(v)]
    if len(finite) == len(refined) and finite:
        dev = max(refined) - min(refined)
    elif not finite:
        dev = 0.0
    else:
        dev = math.inf
    out.results["q_deviation"] = dev
    expect = cfg.get("expect.ell")
    qtol = cfg.tolerances["tol.qdev"] * (abs(ell) if np.isfinite(ell) else 1.0)
    out.checks.append(_check_le("q_independence", dev, qtol, primary=expect is None))
    if expect is not None:
        if np.isfinite(expect):
            rel = abs(ell - expect) / abs(expect) if np.isfinite(ell) else math.inf
            out.checks.append(_check_le("time_separation_rel_error", rel, cfg.tolerances["tol.rel"], True))
        else:
            out.checks.append(Check("time_separation_sentinel", ell, expect, "==", ell == expect, True))

    samples = cfg.get("rti.samples", 0)
    if samples:
        worst, count = reverse_triangle_sample(cg, samples, cfg.seed)
        out.results["rti_triples"] = count
        out.checks.append(_check_le("reverse_triangle_violation", worst, cfg.tolerances["tol.rti"]))

    if cfg.get("output.fields", True):
        tree = longest_from(cg, grid.nearest_node(x))
        vals = tree.values
        out.fields["ell_from_x"] = ScalarField(grid, np.where(np.isfinite(vals), vals, np.nan), np.isfinite(vals))
    return out


def reverse_triangle_sample(cg: CausalGraph, triples: int, seed: int = 0, sources: int = 50):
    """Worst ``l(x,y) + l(y,z) - l(x,z)`` over random causal node triples.

    DP trees from ``sources`` random nodes give ``l(x, .)``; middle nodes
    ``y`` are drawn among nodes reachable from ``x`` and then serve as DP
    sources themselves.  Returns ``(worst_excess, triples_checked)``.
    """
    grid = cg.grid
    rng = np.random.default_rng(seed)
    per_source = max(1, math.ceil(triples / sources))
    worst = -math.inf
    count = 0
    lower_half = grid.shape[0] // 2
    while count < triples:
        x = tuple(int(rng.integers(0, lower_half if k == 0 else s)) for k, s in enumerate(grid.shape))
        from_x = longest_from(cg, x).values
        reach = np.argwhere(np.isfinite(from_x))
        reach = reach[reach[:, 0] > x[0]]
        if len(reach) == 0:
            continue
        y = tuple(int(i) for i in reach[rng.integers(len(reach))])
        from_y = longest_from(cg, y).values
        zs = np.argwhere(np.isfinite(from_y))
        if len(zs) == 0:
            continue
        take = zs[rng.integers(len(zs), size=min(per_source, triples - count))]
        for z in take:
            z = tuple(int(i) for i in z)
            excess = from_x[y] + from_y[z] - from_x[z]
            worst = max(worst, float(excess))
            count += 1
    return worst, count


def run_busemann(cfg: ExperimentConfig, threads=None) -> Outcome:
    chart = _chart(cfg)
    grid = _grid(cfg, chart)
    cg = _graph(cfg, grid)
    origin = _origin(cfg, chart)
    line = vertical_line(chart, origin)
    ev = _eval_grid(cfg, chart, origin)
    ladder = _ladder(cfg)
    segs = _segments(cfg)
    bp = busemann_limit(cg, line, "+", ladder, ev, segments=segs, threads=threads)
    bm = busemann_limit(cg, line, "-", None if ladder is None else [-r for r in ladder], ev,
                        segments=segs, threads=threads)
    tol = cfg.tolerances
    order = steepness_ordering_check(bp, bm, cg, cfg.get("steepness.samples", 50), cfg.seed, tol["tol.order"])
    reg = regularity_diagnostics(bp.ladder + bm.ladder)
    eik = eikonal_check(bp.values, tol["tol.eikonal"])
    out = Outcome()
    out.results = {
        "ladder_plus": [f.r for f in bp.ladder],
        "ladder_minus": [f.r for f in bm.ladder],
        "cauchy_gaps_plus": bp.cauchy_gaps,
        "cauchy_gaps_minus": bm.cauchy_gaps,
        "lipschitz": reg.lipschitz,
        "semiconcavity": reg.semiconcavity,
        "regularity_per_field": reg.per_field,
        "origin_values": order.origin_values,
        "steepness_pairs": order.steepness_pairs,
        "plus_minus_gap": order.plus_minus_gap,
        "eikonal": {"checked": eik.checked, "nonsmooth": eik.nonsmooth, "mean_deviation": eik.mean_deviation},
    }
    out.checks.append(_check_le("ordering_chain", order.chain_max_violation, tol["tol.order"], primary=True))
    out.checks.append(_check_le("steepness", order.steepness_max_violation, tol["tol.order"]))
    out.checks.append(_check_le("origin_normalisation",
                                max(abs(v) for v in order.origin_values.values()), tol["tol.order"]))
    out.checks.append(_check_le("monotone_in_r_plus", bp.monotone_excess, tol["tol.order"]))
    out.checks.append(_check_le("monotone_in_r_minus", bm.monotone_excess, tol["tol.order"]))
    for label, gaps in (("plus", bp.cauchy_gaps), ("minus", bm.cauchy_gaps)):
        dec = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
        out.checks.append(Check(f"cauchy_gap_decreasing_{label}", gaps, None, "decreasing", dec))
    if _is_static_product(cfg):
        t = ev.points()[..., 0] - origin[0]
        for label, f in (("plus", bp), ("minus", bm)):
            err = float(np.nanmax(np.abs(f.values.values - t)))
            out.checks.append(_check_le(f"limit_vs_time_{label}", err, tol["tol.limit"]))
        out.checks.append(_check_le("plus_equals_minus", order.plus_minus_gap, tol["tol.plus_minus"]))
        out.checks.append(_check_le("eikonal", eik.max_deviation, tol["tol.eikonal"]))
    if cfg.get("output.fields", True):
        out.fields["bplus"] = bp.values
        out.fields["bminus"] = bm.values
    return out


def _bplus(cfg: ExperimentConfig, threads=None):
    chart = _chart(cfg)
    grid = _grid(cfg, chart)
    cg = _graph(cfg, grid)
    origin = _origin(cfg, chart)
    line = vertical_line(chart, origin)
    ev = _eval_grid(cfg, chart, origin)
    r = (cfg.get("r") or [1.0])[0]
    return busemann_field(cg, line, abs(r), "+", ev, segments=_segments(cfg), threads=threads), origin


def run_compare(cfg: ExperimentConfig, threads=None) -> Outcome:
    pq = _p(cfg)
    bfield, _ = _bplus(cfg, threads)
    tol = cfg.tolerances
    rep = weak_comparison_check(bfield, pq, rtol=tol["tol.compare"])
    out = Outcome()
    out.results = {
        "p": pq.p,
        "r": bfield.r,
        "test_functions": rep.test_function_count,
        "skipped": rep.skipped,
        "lhs": rep.lhs,
        "rhs": rep.rhs,
        "max_violation": rep.max_violation,
        "max_relative_gap": rep.max_relative_gap,
        "near_equality": bool(rep.max_relative_gap < tol["tol.near_equality"]),
        "clamp_fraction": rep.clamp_fraction,
    }
    out.checks.append(_check_le("comparison", rep.max_violation, rep.tolerance, primary=True))
    out.checks.append(Check("test_functions_used", rep.test_function_count, 1, ">=", rep.test_function_count >= 1))
    out.checks.append(_check_le("clamp_fraction", rep.clamp_fraction, tol["tol.clamp"]))
    if cfg.get("output.fields", True):
        op = p_dalembertian(bfield.values, pq)
        n = bfield.grid.n
        ell = bfield.ell.values
        good = bfield.ell.mask & (ell > 0)
        out.fields["bplus"] = bfield.values
        out.fields["box_p"] = op.field
        out.fields["comparison_rhs"] = ScalarField(bfield.grid, np.where(good, (n - 1) / np.where(good, ell, 1.0), np.nan), good)
    return out


def _candidate(cfg: ExperimentConfig, threads=None, limit: bool = False):
    kind = cfg.get("field.kind", "busemann")
    if kind == "time":
        chart = _chart(cfg)
        origin = _origin(cfg, chart)
        ev = _eval_grid(cfg, chart, origin)
        vals = ev.points()[..., 0] - origin[0]
        return ScalarField(ev, vals, np.ones(ev.shape, dtype=bool))
    if kind != "busemann":
        raise UsageError(f"field.kind must be 'busemann' or 'time', got {kind!r}")
    if not limit:
        return _bplus(cfg, threads)[0]
    chart = _chart(cfg)
    grid = _grid(cfg, chart)
    cg = _graph(cfg, grid)
    origin = _origin(cfg, chart)
    line = vertical_line(chart, origin)
    ev = _eval_grid(cfg, chart, origin)
    return busemann_limit(cg, line, "+", _ladder(cfg), ev, segments=_segments(cfg), threads=threads)


def run_bochner(cfg: ExperimentConfig, threads=None) -> Outcome:
    pq = _p(cfg)
    b = _candidate(cfg, threads)
    tol = cfg.tolerances
    res = bochner_residual(b, pq, eikonal_tol=tol["tol.eikonal"])
    kill = killing_check(b)
    r1 = res.residual1.values
    scale = max(float(np.nanmax(np.abs(res.lhs.values))), float(np.nanmax(np.abs(res.rhs.values))))
    worst = float(np.nanmax(r1))
    out = Outcome()
    out.results = {
        "residual1_max": worst,
        "term_magnitude": scale,
        "residual2_max": float(np.nanmax(res.residual2.values)) if res.residual2.mask.any() else None,
        "residual2_nodes": int(res.residual2.mask.sum()),
        "eikonal_deviation": res.eikonal_deviation,
        "killing_residual": kill.max_norm,
    }
    out.checks.append(_check_le("bochner_residual1", worst, tol["tol.bochner"] * scale + 1e-10, primary=True))
    if cfg.get("output.fields", True):
        out.fields["residual1"] = res.residual1
        out.fields["bochner_lhs"] = res.lhs
    return out


def run_split(cfg: ExperimentConfig, threads=None) -> Outcome:
    b = _candidate(cfg, threads, limit=True)
    rep = split_metric(b)
    out = Outcome()
    out.results = {
        "verdict": rep.verdict,
        "hess_residual": rep.hess_residual,
        "killing_residual": rep.killing_residual,
        "cross_term_residual": rep.cross_term_residual,
        "factorization_residual": rep.factorization_residual,
        "induced_metric_mean": rep.induced_metric_mean,
        "induced_ricci_min": rep.induced_ricci_min,
        "tolerances": rep.tolerances,
        "level_set_complete": rep.level_set_complete,
        "flow_time": rep.flow_time,
    }
    primary = Check("splits", rep.verdict, "splits", "==", rep.verdict == "splits", True)
    primary.negative_passed = rep.verdict == "no-split"
    out.checks.append(primary)
    if cfg.get("output.fields", True):
        out.fields["b"] = b.values if hasattr(b, "ladder") else b
    return out


def run_energycond(cfg: ExperimentConfig, threads=None) -> Outcome:
    chart = _chart(cfg)
    conds = cfg.get("energy.conditions", ["SEC", "NEC", "WEC"])
    out = Outcome()
    all_ok = True
    for cond in conds:
        rep = energy_condition_check(
            chart, cond, cfg.get("energy.samples", 20), cfg.seed,
            cfg.get("energy.vectors", 8), cfg.tolerances["tol.energy"],
        )
        comoving = np.asarray(rep.comoving_values)
        out.results[rep.condition] = {
            "verdict": rep.verdict,
            "min_value": rep.min_value,
            "violations": len(rep.violations),
            "samples": rep.sample_points * rep.vectors_per_point,
            "comoving_min": float(comoving.min()),
            "comoving_max": float(comoving.max()),
            "comoving_violations": int(np.count_nonzero(comoving < -rep.tolerance)),
        }
        all_ok &= rep.verdict == "pass"
    out.checks.append(Check("energy_conditions", {c.upper(): out.results[c.upper()]["verdict"] for c in conds},
                            "pass", "==", all_ok, True))
    return out


def run_hawking(cfg: ExperimentConfig, threads=None) -> Outcome:
    chart = _chart(cfg)
    t0 = cfg.get("slice.t0", 1.0)
    box = cfg.get("grid.box")
    if box is None:
        box = [[float(chart.box[0, 0]), t0]] + chart.box[1:].tolist()
    shape = cfg.get("grid.shape", [50] + [9] * (chart.n - 1))
    grid = Grid(chart, shape, box)
    if abs(grid.box[0, 1] - t0) > 1e-12:
        raise UsageError("the grid's final time slice must be slice.t0")
    cg = _graph(cfg, grid, default_radius=1)
    point = cfg.get("slice.point")
    spatial = chart.box[1:].mean(axis=1) if point is None else np.asarray(point, dtype=float)
    h = slice_mean_curvature(chart, t0, spatial)
    targets = [tuple(int(i) for i in idx) for idx in np.ndindex(*grid.shape[1:])]
    targets = [(grid.shape[0] - 1,) + t for t in targets]
    tree = longest_to(cg, targets)
    vals = tree.values
    sup = float(np.max(vals[np.isfinite(vals)]))
    bound = (chart.n - 1) / h if h > 0 else math.inf
    out = Outcome()
    out.results = {"mean_curvature": h, "sup_ell": sup, "bound": bound, "t0": t0, "n": chart.n}
    out.checks.append(Check("mean_curvature_positive", h, 0.0, ">", h > 0))
    out.checks.append(_check_le("hawking_bound", sup, bound, primary=True))
    if cfg.get("output.fields", True):
        out.fields["ell_to_slice"] = ScalarField(grid, np.where(np.isfinite(vals), vals, np.nan), np.isfinite(vals))
    return out


def run_seccheck(cfg: ExperimentConfig, threads=None) -> Outcome:
    chart = _chart(cfg)
    x = np.asarray(cfg.get("sec.point", chart.box.mean(axis=1).tolist()), dtype=float)
    n = chart.n
    u = np.asarray(cfg.get("sec.u", np.eye(n)[0].tolist()), dtype=float)
    v_default = np.eye(n)[0] + 0.3 * np.eye(n)[1]
    v = np.asarray(cfg.get("sec.v", v_default.tolist()), dtype=float)
    est = sec_from_timesep(chart, x, u, v)
    R = curvature_pack(chart, x).riemann
    ref = float(np.einsum("abcd,a,b,c,d->", R, u, v, u, v))
    err = abs(est.value - ref)
    tol = cfg.tolerances["tol.sec"] * max(abs(ref), 0.01)
    out = Outcome()
    out.results = {"estimate": est.value, "reference": ref, "fit_residual": est.fit_residual, "scales": est.scales}
    out.checks.append(_check_le("sectional_curvature", err, tol, primary=True))
    return out


RUNNERS = {
    "timesep": run_timesep,
    "busemann": run_busemann,
    "compare": run_compare,
    "bochner": run_bochner,
    "split": run_split,
    "energycond": run_energycond,
    "hawking": run_hawking,
    "seccheck": run_seccheck,
}


def run_experiment(cfg: ExperimentConfig, threads=None) -> Outcome:
    return RUNNERS[cfg.experiment](cfg, threads)

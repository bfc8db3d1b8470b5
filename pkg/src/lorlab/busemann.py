"""Busemann functions along a timelike line and their diagnostics.

For a unit-speed line ``gamma`` and ``r > 0``

    b_r^+(x)  = -l(x, gamma(r)) + l(gamma(0), gamma(r))
    b_-r^-(x) =  l(gamma(-r), x) - l(gamma(-r), gamma(0))

and ``b^+ / b^-`` are their limits as ``r -> +inf / -inf``.  One DP tree
rooted at ``gamma(r)`` gives a node path for every evaluation point; each
path is then refined with the exact endpoints.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .causal import CausalGraph, longest_from, longest_to, refine_between, time_separation_points
from .cone import NEG_INF
from .errors import DomainError, TruncationWarning, UsageError
from .grid import Grid, ScalarField, shift_values
from .parallel import pmap
from .spacetime import riemannian_reference


@dataclass
class Line:
    """Proper-time parametrised timelike curve ``gamma(r)`` for ``r_min <= r <= r_max``."""

    gamma: Callable[[float], np.ndarray]
    r_min: float
    r_max: float

    def __call__(self, r: float) -> np.ndarray:
        if not self.r_min - 1e-12 <= r <= self.r_max + 1e-12:
            raise DomainError(f"line parameter {r} outside [{self.r_min}, {self.r_max}]")
        return np.asarray(self.gamma(r), dtype=float)


def vertical_line(chart, origin=None) -> Line:
    """``gamma(r) = origin + r d/dt``; unit speed wherever ``g_00 = 1``.

    This is a maximising geodesic in the static models and the comoving
    observer in FLRW.  ``origin`` defaults to the centre of the chart box.
    """
    origin = chart.box.mean(axis=1) if origin is None else np.asarray(origin, dtype=float)
    g00 = chart.metric(origin)[0, 0]
    if abs(g00 - 1.0) > 1e-12:
        raise UsageError(f"vertical line needs g_00 = 1 at the origin, got {g00}")
    e0 = np.eye(chart.n)[0]
    return Line(lambda r: origin + r * e0, chart.box[0, 0] - origin[0], chart.box[0, 1] - origin[0])


def check_line(cg: CausalGraph, line: Line, params: Sequence[float], q: float = 0.5) -> float:
    """Largest ``|l(gamma(a), gamma(b)) - (b - a)|`` over consecutive ``params``."""
    params = sorted(params)
    worst = 0.0
    for a, b in zip(params[:-1], params[1:]):
        ell = time_separation_points(cg, line(a), line(b), q).refined_value
        worst = max(worst, abs(ell - (b - a)))
    return worst


@dataclass
class BusemannField:
    """``b_r^+`` (sign ``"+"``) or ``b_r^-`` (sign ``"-"``) on an evaluation grid.

    ``ell`` holds the time separation to (``+``) or from (``-``) ``gamma(r)``,
    which the comparison checks reuse.  Limit fields from
    :func:`busemann_limit` also carry the ladder and its Cauchy gaps.
    """

    values: ScalarField
    r: float
    sign: str
    ell: ScalarField
    anchor: float
    origin_value: float
    ladder: list = field(default_factory=list, repr=False)
    cauchy_gaps: list = field(default_factory=list)
    monotone_excess: float = 0.0

    @property
    def limit_estimate(self) -> ScalarField:
        return self.values

    @property
    def grid(self) -> Grid:
        return self.values.grid


def busemann_field(
    cg: CausalGraph,
    line: Line,
    r: float,
    sign: str = "+",
    eval_grid: Optional[Grid] = None,
    refine: bool = True,
    q: float = 0.5,
    segments: int = 16,
    threads=None,
) -> BusemannField:
    """Evaluate ``b_r^+`` (``r > 0``) or ``b_r^-`` (``r < 0``) on ``eval_grid``.

    Points not causally related to ``gamma(r)`` are masked.  Without
    refinement the evaluation grid must be the DP grid itself and raw node
    values are used.
    """
    if sign not in ("+", "-"):
        raise UsageError(f"sign must be '+' or '-', got {sign!r}")
    r = float(r)
    if (sign == "+" and r <= 0) or (sign == "-" and r >= 0):
        raise UsageError(f"b^{sign} needs r {'>' if sign == '+' else '<'} 0, got {r}")
    grid = cg.grid
    target = line(r)
    if not grid.contains(target):
        raise DomainError(f"gamma({r}) = {target.tolist()} lies outside the grid box")
    origin = line(0.0)
    if not grid.contains(origin):
        raise DomainError(f"gamma(0) = {origin.tolist()} lies outside the grid box")
    eval_grid = grid if eval_grid is None else eval_grid
    if not refine and eval_grid is not grid:
        raise UsageError("unrefined Busemann fields must be evaluated on the DP grid")
    root = grid.nearest_node(target)
    tree = longest_to(cg, root) if sign == "+" else longest_from(cg, root)

    def ell_at(x):
        x = np.asarray(x, dtype=float)
        node = grid.nearest_node(x)
        if not refine:
            return float(tree.values[node])
        path = tree.path(node)
        if sign == "+":
            value, _ = refine_between(cg, path, x, target, q, segments)
        else:
            value, _ = refine_between(cg, path, target, x, q, segments)
        return float(value)

    pts = eval_grid.points().reshape(-1, grid.n)
    ell = np.array(pmap(ell_at, pts, threads)).reshape(eval_grid.shape)
    anchor = ell_at(origin)
    if not np.isfinite(anchor):
        raise DomainError(f"gamma(0) is not causally related to gamma({r})")
    mask = np.isfinite(ell)
    ell = np.where(mask, ell, NEG_INF)
    values = (anchor - ell) if sign == "+" else (ell - anchor)
    at_origin = ell_at(origin)
    origin_value = (anchor - at_origin) if sign == "+" else (at_origin - anchor)
    return BusemannField(
        values=ScalarField(eval_grid, values, mask),
        r=r,
        sign=sign,
        ell=ScalarField(eval_grid, ell, mask),
        anchor=anchor,
        origin_value=float(origin_value),
    )


def default_ladder(cg: CausalGraph, line: Line, sign: str = "+") -> list:
    """``{5, 10, 20, 40} * T / 40`` for the grid's time extent ``T``, within reach."""
    extent = float(cg.grid.box[0, 1] - cg.grid.box[0, 0])
    s = 1.0 if sign == "+" else -1.0
    return [s * k * extent / 40.0 for k in (5, 10, 20, 40)]


def busemann_limit(
    cg: CausalGraph,
    line: Line,
    sign: str = "+",
    ladder: Optional[Sequence[float]] = None,
    eval_grid: Optional[Grid] = None,
    refine: bool = True,
    q: float = 0.5,
    segments: int = 16,
    threads=None,
) -> BusemannField:
    """Field at the farthest usable ladder entry, with Cauchy gaps along the ladder.

    Entries whose ``gamma(r)`` leaves the grid are dropped with a
    :class:`TruncationWarning`.  ``monotone_excess`` is the largest amount by
    which ``b_r^+`` increases (``b_r^-`` decreases) between consecutive
    entries; it is non-positive when the expected monotonicity holds.
    """
    ladder = list(default_ladder(cg, line, sign) if ladder is None else ladder)
    mags = [abs(r) for r in ladder]
    if mags != sorted(mags) or len(set(mags)) != len(mags):
        raise UsageError("r ladder must move strictly away from 0")
    usable = []
    for r in ladder:
        if line.r_min <= r <= line.r_max and cg.grid.contains(line(r)):
            usable.append(r)
        else:
            warnings.warn(f"ladder entry r = {r} leaves the grid; dropped", TruncationWarning, stacklevel=2)
    if not usable:
        raise DomainError("no ladder entry lies inside the grid")
    fields = [
        busemann_field(cg, line, r, sign, eval_grid, refine, q, segments, threads) for r in usable
    ]
    gaps = []
    excess = NEG_INF
    for prev, cur in zip(fields[:-1], fields[1:]):
        both = prev.values.mask & cur.values.mask
        diff = cur.values.values[both] - prev.values.values[both]
        gaps.append(float(np.max(np.abs(diff))) if diff.size else 0.0)
        if diff.size:
            step = np.max(diff) if sign == "+" else np.max(-diff)
            excess = max(excess, float(step))
    last = fields[-1]
    last.ladder = fields
    last.cauchy_gaps = gaps
    last.monotone_excess = 0.0 if excess == NEG_INF else excess
    return last


# ---------------------------------------------------------------------------
# steepness and ordering


@dataclass
class OrderingReport:
    tolerance: float
    steepness_pairs: int
    steepness_max_violation: float
    chain_max_violation: float
    origin_values: dict
    plus_minus_gap: float

    @property
    def verdict(self) -> str:
        ok = (
            self.steepness_max_violation <= self.tolerance
            and self.chain_max_violation <= self.tolerance
            and max(abs(v) for v in self.origin_values.values()) <= self.tolerance
        )
        return "pass" if ok else "fail"


def steepness_ordering_check(
    bplus: BusemannField,
    bminus: BusemannField,
    cg: CausalGraph,
    sample_pairs: int = 200,
    seed: int = 0,
    tol: float = 1e-6,
    q: float = 0.5,
) -> OrderingReport:
    """Check 1-steepness and ``b_r^+ >= b^+ >= b^- >= b_-r^-``.

    ``bplus``/``bminus`` are limit fields; their ladders supply the finite-r
    members of the chain.  Steepness ``b(y) - b(x) >= l(x, y)`` is tested on
    up to ``sample_pairs`` random causal pairs of evaluation points for every
    field in both ladders.
    """
    grid = bplus.grid
    if bminus.grid.shape != grid.shape or not np.allclose(bminus.grid.box, grid.box):
        raise UsageError("b^+ and b^- must live on the same evaluation grid")
    plus_ladder = bplus.ladder or [bplus]
    minus_ladder = bminus.ladder or [bminus]
    common = bplus.values.mask & bminus.values.mask
    for f in plus_ladder + minus_ladder:
        common &= f.values.mask

    chain = NEG_INF
    bp = bplus.values.values[common]
    bm = bminus.values.values[common]
    if bp.size:
        chain = max(chain, float(np.max(bm - bp)))
        for f in plus_ladder:
            chain = max(chain, float(np.max(bp - f.values.values[common])))
        for f in minus_ladder:
            chain = max(chain, float(np.max(f.values.values[common] - bm)))
    chain = 0.0 if chain == NEG_INF else max(chain, 0.0)

    origin_values = {f"b+({f.r:g})": f.origin_value for f in plus_ladder}
    origin_values.update({f"b-({f.r:g})": f.origin_value for f in minus_ladder})

    rng = np.random.default_rng(seed)
    idx = np.argwhere(common)
    pts = grid.points()
    worst = 0.0
    found = 0
    attempts = 0
    while found < sample_pairs and attempts < 20 * sample_pairs and len(idx) > 1:
        attempts += 1
        i, j = rng.choice(len(idx), size=2, replace=False)
        a, b = tuple(idx[i]), tuple(idx[j])
        if pts[a][0] > pts[b][0]:
            a, b = b, a
        ell = time_separation_points(cg, pts[a], pts[b], q).refined_value
        if not np.isfinite(ell):
            continue
        found += 1
        for f in plus_ladder + minus_ladder:
            v = f.values.values
            worst = max(worst, ell - (v[b] - v[a]))
    gap = float(np.max(np.abs(bp - bm))) if bp.size else 0.0
    return OrderingReport(tol, found, worst, chain, origin_values, gap)


# ---------------------------------------------------------------------------
# regularity


def _neighbour_offsets(n: int) -> list:
    offs = []
    for k in range(n):
        e = np.zeros(n, dtype=int)
        e[k] = 1
        offs.append(e)
    for a in range(n):
        for b in range(a + 1, n):
            for s in (1, -1):
                e = np.zeros(n, dtype=int)
                e[a], e[b] = 1, s
                offs.append(e)
    return offs


@dataclass
class RegularityReport:
    lipschitz: float
    semiconcavity: float
    per_field: list


def regularity_diagnostics(fields: Sequence[BusemannField], ref_metric=None) -> RegularityReport:
    """Sup of difference quotients with respect to a Riemannian metric ``g~``.

    ``g~`` defaults to the eigenvalue flip of ``g`` at each node.  Lipschitz
    quotients use nearest neighbours along axes and face diagonals;
    semiconcavity uses the symmetric second difference along the same
    directions divided by ``g~(v, v)``, with straight coordinate segments
    standing in for short ``g~``-geodesics.  Masked nodes are skipped.
    """
    per_field = []
    for f in fields:
        grid = f.grid
        u = f.values.values
        pts = grid.points()
        gt = riemannian_reference(grid.chart.metric(pts)) if ref_metric is None else ref_metric(pts)
        lip = 0.0
        semi = 0.0
        for off in _neighbour_offsets(grid.n):
            v = off * grid.spacing
            len2 = np.einsum("...i,...ij,...j->...", v, gt, v)
            up = shift_values(u, off, grid.wrap)
            down = shift_values(u, -off, grid.wrap)
            with np.errstate(invalid="ignore"):
                dq = np.abs(up - u) / np.sqrt(len2)
                sq = (up + down - 2 * u) / len2
            if np.any(np.isfinite(dq)):
                lip = max(lip, float(np.nanmax(dq)))
            if np.any(np.isfinite(sq)):
                semi = max(semi, float(np.nanmax(sq)))
        per_field.append({"r": f.r, "sign": f.sign, "lipschitz": lip, "semiconcavity": semi})
    lip = max((d["lipschitz"] for d in per_field), default=0.0)
    semi = max((d["semiconcavity"] for d in per_field), default=0.0)
    return RegularityReport(lip, semi, per_field)


# ---------------------------------------------------------------------------
# eikonal


@dataclass
class EikonalReport:
    tolerance: float
    checked: int
    nonsmooth: int
    max_deviation: float
    mean_deviation: float

    @property
    def verdict(self) -> str:
        return "pass" if self.checked and self.max_deviation < self.tolerance else "fail"


def field_gradient(field: ScalarField, kink_tol: float = 0.01):
    """Central-difference differential ``du`` and a nonsmooth flag per node.

    A node is flagged when one-sided differences along some axis differ by
    more than ``10 * kink_tol``; nodes lacking a full stencil get NaN.
    """
    grid = field.grid
    u = field.values
    du = np.full(grid.shape + (grid.n,), np.nan)
    kink = np.zeros(grid.shape, dtype=bool)
    for k in range(grid.n):
        e = np.zeros(grid.n, dtype=int)
        e[k] = 1
        up = shift_values(u, e, grid.wrap)
        down = shift_values(u, -e, grid.wrap)
        fwd = (up - u) / grid.spacing[k]
        bwd = (u - down) / grid.spacing[k]
        du[..., k] = 0.5 * (fwd + bwd)
        with np.errstate(invalid="ignore"):
            kink |= np.abs(fwd - bwd) > 10 * kink_tol
    return du, kink


def eikonal_check(field: ScalarField, tol: float = 0.05, kink_tol: float = 0.01) -> EikonalReport:
    """Deviation of ``|du|_F*`` from 1 at smooth nodes with a full stencil."""
    grid = field.grid
    du, kink = field_gradient(field, kink_tol)
    ok = np.all(np.isfinite(du), axis=-1)
    smooth = ok & ~kink
    ginv = np.linalg.inv(grid.chart.metric(grid.points()[smooth]))
    w = du[smooth]
    norm2 = np.einsum("ki,kij,kj->k", w, ginv, w)
    with np.errstate(invalid="ignore"):
        dev = np.abs(np.sqrt(np.where(norm2 > 0, norm2, np.nan)) - 1.0)
    dev = np.where(np.isfinite(dev), dev, np.inf)
    return EikonalReport(
        tolerance=tol,
        checked=int(dev.size),
        nonsmooth=int(np.count_nonzero(ok & kink)),
        max_deviation=float(dev.max()) if dev.size else float("inf"),
        mean_deviation=float(dev.mean()) if dev.size else float("inf"),
    )

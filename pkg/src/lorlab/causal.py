"""Time separation by longest paths on a causal lattice.

Edges join a node to the nodes up to ``radius`` time slices later and up to
``radius`` steps away along each spatial axis, kept only when the
displacement is future causal for the metric at the segment midpoint.  The
weight of an edge is its proper time ``|dx|_F`` at that midpoint.  Because
every edge advances coordinate time the graph is acyclic, and a sweep over
time slices computes exact longest paths.

The discrete optimum is then polished: the path is resampled to a few
vertices and the discretised q-action

    J_q = m * mean(a_k^q)^(1/q),   a_k = |P_{k+1} - P_k|_F

(uniform parameter steps) is maximised over the interior vertices.  J_q never
exceeds the polygon length and equals it for equal proper-time steps, so the
maximiser does not depend on q.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .cone import CONE_EPS, NEG_INF, quad
from .errors import UsageError
from .grid import Grid

DEFAULT_RADIUS = 3


class CausalGraph:
    """Implicit causal edges of a grid with per-offset weight arrays.

    ``weights[o][head]`` is the proper time of the edge arriving at ``head``
    from ``head - offsets[o]`` (``-inf`` when the edge is absent).
    """

    def __init__(self, grid: Grid, radius: int = DEFAULT_RADIUS):
        radius = int(radius)
        if radius < 1:
            raise UsageError("stencil radius must be >= 1")
        if any(radius >= s for s in grid.shape):
            raise UsageError(f"stencil radius {radius} exceeds grid shape {grid.shape}")
        self.grid = grid
        self.radius = radius
        n = grid.n
        offs = [
            (dt,) + dx
            for dt in range(1, radius + 1)
            for dx in itertools.product(range(-radius, radius + 1), repeat=n - 1)
        ]
        # iteration order = increasing predecessor index, so strict '>' keeps the
        # lexicographically smallest predecessor on ties
        offs.sort(key=lambda o: (-o[0],) + tuple(-d for d in o[1:]))
        self.offsets = np.array(offs, dtype=int)
        pts = grid.points()
        self.weights = []
        for off in self.offsets:
            delta = off * grid.spacing
            mid = pts - 0.5 * delta
            g = grid.chart.metric(mid)
            gvv = quad(g, np.broadcast_to(delta, mid.shape))
            orient = np.einsum("...ij,j->...i", g, delta)[..., 0]
            tol = CONE_EPS * float(delta @ delta)
            causal = (gvv >= -tol) & (orient > 0)
            w = np.where(causal, np.sqrt(np.maximum(gvv, 0.0)), NEG_INF)
            w[: off[0]] = NEG_INF
            for k in range(1, n):
                if grid.wrap[k]:
                    continue
                sl = [slice(None)] * n
                d = off[k]
                if d > 0:
                    sl[k] = slice(0, d)
                    w[tuple(sl)] = NEG_INF
                elif d < 0:
                    sl[k] = slice(d, None)
                    w[tuple(sl)] = NEG_INF
            self.weights.append(w)

    def out_degree(self, idx) -> int:
        """Number of future edges leaving node ``idx``."""
        idx = np.array(self.grid.check_node(idx))
        count = 0
        for o, off in enumerate(self.offsets):
            head = idx + off
            if head[0] >= self.grid.shape[0]:
                continue
            ok = True
            for k in range(1, self.grid.n):
                if self.grid.wrap[k]:
                    head[k] %= self.grid.shape[k]
                elif not 0 <= head[k] < self.grid.shape[k]:
                    ok = False
            if ok and np.isfinite(self.weights[o][tuple(head)]):
                count += 1
        return count

    def edge_weight(self, tail, head) -> float:
        """Weight of the edge ``tail -> head`` (``-inf`` if absent)."""
        tail = np.array(self.grid.check_node(tail))
        head = np.array(self.grid.check_node(head))
        off = head - tail
        for k in range(1, self.grid.n):
            if self.grid.wrap[k]:
                s = self.grid.shape[k]
                off[k] = (off[k] + s // 2) % s - s // 2
        match = np.nonzero(np.all(self.offsets == off, axis=1))[0]
        if len(match) == 0:
            return NEG_INF
        return float(self.weights[match[0]][tuple(head)])

    def successors(self, idx):
        """``(head, weight)`` pairs of the edges leaving ``idx``."""
        idx = np.array(self.grid.check_node(idx))
        out = []
        for o, off in enumerate(self.offsets):
            head = idx + off
            if head[0] >= self.grid.shape[0]:
                continue
            ok = True
            for k in range(1, self.grid.n):
                if self.grid.wrap[k]:
                    head[k] %= self.grid.shape[k]
                elif not 0 <= head[k] < self.grid.shape[k]:
                    ok = False
            if ok:
                w = self.weights[o][tuple(head)]
                if np.isfinite(w):
                    out.append((tuple(int(h) for h in head), float(w)))
        return out


def _shift(arr: np.ndarray, d: Sequence[int], wrap: Sequence[bool]) -> np.ndarray:
    """``out[j] = arr[j - d]`` over the spatial axes, ``-inf`` where undefined."""
    out = arr
    for ax, (dk, wk) in enumerate(zip(d, wrap)):
        if dk == 0:
            continue
        if wk:
            out = np.roll(out, dk, axis=ax)
            continue
        res = np.full_like(out, NEG_INF)
        src = [slice(None)] * out.ndim
        dst = [slice(None)] * out.ndim
        if dk > 0:
            src[ax], dst[ax] = slice(0, -dk), slice(dk, None)
        else:
            src[ax], dst[ax] = slice(-dk, None), slice(0, dk)
        res[tuple(dst)] = out[tuple(src)]
        out = res
    return out


@dataclass
class DPTree:
    """Longest-path values from (``forward``) or to a set of seed nodes."""

    graph: CausalGraph
    values: np.ndarray
    pointer: np.ndarray
    forward: bool
    seeds: list

    def path(self, idx) -> list:
        """Node sequence in time order between the seed set and ``idx``."""
        idx = self.graph.grid.check_node(idx)
        if not np.isfinite(self.values[idx]):
            return []
        grid = self.graph.grid
        nodes = [idx]
        cur = np.array(idx)
        sign = -1 if self.forward else 1
        while self.pointer[tuple(cur)] >= 0:
            cur = cur + sign * self.graph.offsets[self.pointer[tuple(cur)]]
            for k in range(1, grid.n):
                if grid.wrap[k]:
                    cur[k] %= grid.shape[k]
            nodes.append(tuple(int(c) for c in cur))
        return nodes[::-1] if self.forward else nodes


def _seed_list(grid: Grid, seeds) -> list:
    if isinstance(seeds, tuple) or (hasattr(seeds, "__len__") and len(seeds) == grid.n
                                    and np.isscalar(seeds[0])):
        seeds = [seeds]
    return [grid.check_node(s) for s in seeds]


def longest_from(cg: CausalGraph, sources) -> DPTree:
    """Longest-path values from the source node(s) to every node."""
    grid = cg.grid
    seeds = _seed_list(grid, sources)
    vals = np.full(grid.shape, NEG_INF)
    ptr = np.full(grid.shape, -1, dtype=np.int32)
    for s in seeds:
        vals[s] = 0.0
    spatial_wrap = grid.wrap[1:]
    start = min(s[0] for s in seeds)
    for i in range(start + 1, grid.shape[0]):
        best = vals[i].copy()
        bptr = ptr[i].copy()
        for o, off in enumerate(cg.offsets):
            j = i - off[0]
            if j < start:
                continue
            cand = _shift(vals[j], off[1:], spatial_wrap) + cg.weights[o][i]
            better = cand > best
            best = np.where(better, cand, best)
            bptr = np.where(better, o, bptr)
        vals[i] = best
        ptr[i] = bptr
    return DPTree(cg, vals, ptr, True, seeds)


def longest_to(cg: CausalGraph, targets) -> DPTree:
    """Longest-path values from every node to the target node(s)."""
    grid = cg.grid
    seeds = _seed_list(grid, targets)
    vals = np.full(grid.shape, NEG_INF)
    ptr = np.full(grid.shape, -1, dtype=np.int32)
    for s in seeds:
        vals[s] = 0.0
    spatial_wrap = grid.wrap[1:]
    stop = max(s[0] for s in seeds)
    # successor order: smallest successor index first
    order = sorted(range(len(cg.offsets)), key=lambda o: tuple(cg.offsets[o]))
    for i in range(stop - 1, -1, -1):
        best = vals[i].copy()
        bptr = ptr[i].copy()
        for o in order:
            off = cg.offsets[o]
            j = i + off[0]
            if j > stop:
                continue
            neg = [-d for d in off[1:]]
            w = _shift(cg.weights[o][j], neg, spatial_wrap)
            cand = _shift(vals[j], neg, spatial_wrap) + w
            better = cand > best
            best = np.where(better, cand, best)
            bptr = np.where(better, o, bptr)
        vals[i] = best
        ptr[i] = bptr
    return DPTree(cg, vals, ptr, False, seeds)


# ---------------------------------------------------------------------------
# continuous refinement


def q_action(chart, pts: np.ndarray, q: float) -> float:
    """Discretised q-action of the polygon ``pts`` with uniform parameter steps."""
    a = segment_times(chart, pts)
    if a is None:
        return NEG_INF
    return _power_mean_action(a, q)


def _power_mean_action(a: np.ndarray, q: float) -> float:
    m = len(a)
    amax = a.max()
    if amax <= 0 or (q < 0 and np.any(a <= 0)):
        return 0.0
    return float(m * amax * np.mean((a / amax) ** q) ** (1.0 / q))


def segment_times(chart, pts: np.ndarray) -> Optional[np.ndarray]:
    """Proper times of the polygon segments, or None if one is not future causal."""
    delta = np.diff(pts, axis=0)
    g = chart.metric(0.5 * (pts[1:] + pts[:-1]))
    gvv = quad(g, delta)
    orient = np.einsum("kij,kj->ki", g, delta)[:, 0]
    if np.any(gvv < 0) or np.any(orient <= 0):
        return None
    return np.sqrt(gvv)


def _action_and_grad(chart, pts, q, h):
    n = pts.shape[1]
    delta = np.diff(pts, axis=0)
    mid = 0.5 * (pts[1:] + pts[:-1])
    g = chart.metric(mid)
    gvv = quad(g, delta)
    orient = np.einsum("kij,kj->ki", g, delta)[:, 0]
    if np.any(gvv <= 0) or np.any(orient <= 0):
        return None, None
    a = np.sqrt(gvv)
    m = len(a)
    amax = a.max()
    mean = np.mean((a / amax) ** q)
    J = m * amax * mean ** (1.0 / q)
    dJda = (mean ** (1.0 / q - 1.0)) * (a / amax) ** (q - 1.0)
    # d(a^2)/dM_j = delta^T d_j g delta
    eye = np.eye(n) * h
    dq = np.empty((m, n))
    for j in range(n):
        gp = chart.metric(mid + eye[j])
        gm = chart.metric(mid - eye[j])
        dq[:, j] = (quad(gp, delta) - quad(gm, delta)) / (2 * h[j])
    gd = np.einsum("kij,kj->ki", g, delta)
    da_head = (2 * gd + 0.5 * dq) / (2 * a[:, None])
    da_tail = (-2 * gd + 0.5 * dq) / (2 * a[:, None])
    grad = np.zeros_like(pts)
    grad[1:] += dJda[:, None] * da_head
    grad[:-1] += dJda[:, None] * da_tail
    return J, grad


def refine_polygon(chart, pts: np.ndarray, q: float, step=None, max_iter: int = 200, rtol: float = 1e-10):
    """Maximise the q-action over interior vertices, endpoints pinned.

    Uses L-BFGS with causality as a hard wall: any trial polygon with a
    non-causal segment is rejected by returning a worse value.  Returns the
    refined vertices and their action (never below the starting action).
    """
    pts = np.array(pts, dtype=float)
    if len(pts) < 3:
        return pts, q_action(chart, pts, q)
    h = 1e-6 * np.maximum(chart.extent, 1.0) if step is None else np.broadcast_to(step, (chart.n,))
    J0, _ = _action_and_grad(chart, pts, q, h)
    if J0 is None:
        # a null or degenerate segment has no gradient: start from a polygon
        # pulled towards the evenly spaced chord instead
        chord = np.linspace(pts[0], pts[-1], len(pts))
        for lam in (0.1, 0.3, 0.6, 1.0):
            trial = (1.0 - lam) * pts + lam * chord
            J0, _ = _action_and_grad(chart, trial, q, h)
            if J0 is not None:
                break
        if J0 is None:
            return pts, q_action(chart, pts, q)
        original = (pts, q_action(chart, pts, q))
        pts = trial
    else:
        original = None
    shape = pts[1:-1].shape
    scale = max(abs(J0), 1e-300)
    state = {"best": J0, "x": pts[1:-1].ravel().copy()}

    def fun(z):
        trial = pts.copy()
        trial[1:-1] = z.reshape(shape)
        J, grad = _action_and_grad(chart, trial, q, h)
        if J is None:
            return 10.0 + 10.0 * np.sum((z - state["x"]) ** 2), 20.0 * (z - state["x"])
        if J > state["best"]:
            state["best"], state["x"] = J, z.copy()
        return -J / scale, -grad[1:-1].ravel() / scale

    minimize(
        fun, pts[1:-1].ravel(), jac=True, method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": rtol * 1e-3, "gtol": 1e-12, "maxcor": 20},
    )
    out = pts.copy()
    out[1:-1] = state["x"].reshape(shape)
    if original is not None and original[1] > state["best"]:
        return original
    return out, float(state["best"])


def resample_path(grid: Grid, nodes: list, segments: int, start=None, end=None) -> np.ndarray:
    """Polygon of ``segments`` pieces through a node path, evenly spaced in arc length.

    Arc length blends proper time with a small Euclidean share so that null
    stretches still advance.  Optional exact endpoints replace the first and
    last node.
    """
    pts = np.array([grid.point(nd) for nd in nodes], dtype=float)
    # unwrap periodic coordinates along the path
    for k in range(grid.n):
        if grid.wrap[k]:
            period = grid.box[k, 1] - grid.box[k, 0]
            d = np.diff(pts[:, k])
            d -= period * np.round(d / period)
            pts[1:, k] = pts[0, k] + np.cumsum(d)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    if start is not None:
        pts[0] = _nearest_image(grid, start, pts[0])
    if end is not None:
        pts[-1] = _nearest_image(grid, end, pts[-1])
    delta = np.diff(pts, axis=0)
    g = grid.chart.metric(0.5 * (pts[1:] + pts[:-1]))
    tau = np.sqrt(np.maximum(quad(g, delta), 0.0))
    eucl = np.linalg.norm(delta / grid.spacing, axis=1) * float(np.min(grid.spacing))
    length = tau + 1e-3 * eucl
    cum = np.concatenate([[0.0], np.cumsum(length)])
    if cum[-1] == 0:
        return pts[[0, -1]]
    m = max(1, min(segments, len(pts) - 1))
    targets = np.linspace(0.0, cum[-1], m + 1)
    out = np.stack([np.interp(targets, cum, pts[:, k]) for k in range(grid.n)], axis=1)
    out[0], out[-1] = pts[0], pts[-1]
    return out


def _nearest_image(grid: Grid, x, ref) -> np.ndarray:
    """Periodic image of ``x`` closest to ``ref`` along wrapped axes."""
    x = np.array(x, dtype=float)
    for k in range(grid.n):
        if grid.wrap[k]:
            period = grid.box[k, 1] - grid.box[k, 0]
            x[k] += period * np.round((ref[k] - x[k]) / period)
    return x


@dataclass
class PathResult:
    value: float
    path: list
    refined_value: float
    q: float
    refined_path: Optional[np.ndarray] = field(default=None, repr=False)


def refine_between(cg: CausalGraph, nodes: list, x, y, q: float, segments: int = 16,
                   max_iter: int = 200) -> tuple:
    """Refined time separation from point ``x`` to ``y`` seeded by a node path.

    The straight chord is tried as a second seed; the better start wins.
    Returns ``(value, polygon)``; ``value`` is ``-inf`` when no causal
    polygon could be formed.
    """
    chart = cg.grid.chart
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    seeds = []
    if nodes:
        seeds.append(resample_path(cg.grid, nodes, segments, start=x, end=y))
    y = _nearest_image(cg.grid, y, x)
    seeds.append(x + np.linspace(0.0, 1.0, segments + 1)[:, None] * (y - x))
    best, best_pts = NEG_INF, None
    for pts in seeds:
        J = q_action(chart, pts, q)
        if J > best:
            best, best_pts = J, pts
    if best_pts is None or not np.isfinite(best):
        return NEG_INF, None
    pts, J = refine_polygon(chart, best_pts, q, max_iter=max_iter)
    return J, pts


def time_separation(cg: CausalGraph, x, y, q: float = 0.5, refine: bool = True,
                    segments: int = 16) -> PathResult:
    """Longest-path time separation between nodes ``x`` and ``y``.

    ``value`` is the exact discrete optimum (``-inf`` when ``y`` is not
    reachable); ``refined_value`` is the maximised q-action of the resampled
    path with the node positions as pinned endpoints.
    """
    q = float(q)
    if not (q < 1 and q != 0):
        raise UsageError(f"q must satisfy q < 1 and q != 0, got {q}")
    grid = cg.grid
    x = grid.check_node(x)
    y = grid.check_node(y)
    tree = longest_from(cg, x)
    value = float(tree.values[y])
    if not np.isfinite(value):
        return PathResult(NEG_INF, [], NEG_INF, q)
    path = tree.path(y)
    if not refine or x == y:
        return PathResult(value, path, value, q)
    J, pts = refine_between(cg, path, grid.point(x), _unwrapped_end(grid, path), q, segments)
    return PathResult(value, path, max(J, NEG_INF), q, pts)


def time_separation_points(cg: CausalGraph, x, y, q: float = 0.5, segments: int = 16) -> PathResult:
    """Time separation between arbitrary chart points ``x`` and ``y``.

    The DP runs between the nearest nodes; its path is then refined with the
    endpoints pinned to the exact points.  ``value`` is the nearest-node DP
    value and ``refined_value`` the answer for the exact points.
    """
    grid = cg.grid
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for pt in (x, y):
        if pt.shape != (grid.n,) or not grid.contains(pt):
            raise UsageError(f"point {pt.tolist()} is outside the grid box")
    base = time_separation(cg, grid.nearest_node(x), grid.nearest_node(y), q, refine=False)
    J, pts = refine_between(cg, base.path, x, y, q, segments)
    return PathResult(base.value, base.path, J, float(q), pts)


def _unwrapped_end(grid: Grid, nodes: list) -> np.ndarray:
    pts = resample_path(grid, nodes, len(nodes))
    return pts[-1]


def q_independence_check(cg: CausalGraph, x, y, qs: Sequence[float], segments: int = 16) -> float:
    """Largest pairwise spread of refined time separations across ``qs``."""
    vals = [time_separation(cg, x, y, q, refine=True, segments=segments).refined_value for q in qs]
    if all(v == NEG_INF for v in vals):
        return 0.0
    if any(v == NEG_INF for v in vals):
        return math.inf
    return float(max(vals) - min(vals))

"""The p-d'Alembertian in divergence form, its energy, and comparison checks.

Discretisation
--------------
Node values ``u`` live on a :class:`Grid`; each cell (the box spanned by
``2^n`` neighbouring nodes) carries one differential ``du_c``, the average
of the edge differences along each axis, and the metric at its centre.  The
discrete energy is

    E(u) = sum_c H(du_c) sqrt|g_c| V,     H(w) = -(1/p) |w|_F*^p,

and the operator is defined as its normalised negative gradient,

    (box_p u)_i = -(dE/du_i) / (sqrt|g_i| V).

The cell flux ``X_c = |du_c|^(p-2) grad u_c`` then satisfies summation by
parts exactly: ``sum_c g(grad phi_c, X_c) sqrt|g_c| V = sum_i phi_i (box_p u)_i
sqrt|g_i| V`` for ``phi`` vanishing near the boundary.  This identity is what
makes the weak-form comparison meaningful on the grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .causal import CausalGraph
from .cone import POS_INF, PExponent
from .errors import DomainError, UsageError
from .grid import Grid, ScalarField

CLAMP = 1e-6


def _exponent(pq) -> float:
    return float(pq.p) if isinstance(pq, PExponent) else PExponent(float(pq)).p


# ---------------------------------------------------------------------------
# cell geometry


@dataclass
class CellGeometry:
    """Per-cell metric data and the node <-> cell gradient wiring of a grid."""

    grid: Grid
    cshape: tuple
    centers: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    vol: np.ndarray
    node_vol: np.ndarray
    corners: list

    @classmethod
    def of(cls, grid: Grid) -> "CellGeometry":
        cshape = tuple(s if w else s - 1 for s, w in zip(grid.shape, grid.wrap))
        axes = [grid.box[k, 0] + grid.spacing[k] * (np.arange(cshape[k]) + 0.5) for k in range(grid.n)]
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        g = grid.chart.metric(centers)
        ginv = np.linalg.inv(g)
        V = grid.cell_volume()
        vol = np.sqrt(np.abs(np.linalg.det(g))) * V
        node_vol = np.sqrt(np.abs(np.linalg.det(grid.chart.metric(grid.points())))) * V
        corners = list(itertools.product((0, 1), repeat=grid.n))
        return cls(grid, cshape, centers, g, ginv, vol, node_vol, corners)

    def corner_values(self, u: np.ndarray, s) -> np.ndarray:
        out = u
        for k, (sk, w) in enumerate(zip(s, self.grid.wrap)):
            if w:
                out = np.roll(out, -sk, axis=k)
            else:
                sl = [slice(None)] * out.ndim
                sl[k] = slice(sk, sk + self.cshape[k])
                out = out[tuple(sl)]
        return out

    def scatter(self, cell_values: np.ndarray, s) -> np.ndarray:
        """Node array receiving ``cell_values`` at corner ``s`` of each cell."""
        out = cell_values
        for k, (sk, w) in enumerate(zip(s, self.grid.wrap)):
            if w:
                out = np.roll(out, sk, axis=k)
            else:
                pad = [(0, 0)] * out.ndim
                pad[k] = (sk, 1 - sk)
                out = np.pad(out, pad)
        return out

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Cell differentials ``(..., n)``; NaN where a corner is NaN."""
        n = self.grid.n
        du = np.zeros(self.cshape + (n,))
        scale = 1.0 / (2 ** (n - 1) * self.grid.spacing)
        for s in self.corners:
            cv = self.corner_values(u, s)
            for k in range(n):
                du[..., k] += (2 * s[k] - 1) * scale[k] * cv
        return du

    def divergence_weights(self, flux: np.ndarray) -> np.ndarray:
        """Node sums ``sum_c sum_k flux_ck d(du_ck)/du_i`` (the adjoint of :meth:`gradient`)."""
        n = self.grid.n
        scale = 1.0 / (2 ** (n - 1) * self.grid.spacing)
        out = np.zeros(self.grid.shape)
        for s in self.corners:
            sign = np.array([(2 * sk - 1) for sk in s]) * scale
            out += self.scatter(np.einsum("...k,k->...", flux, sign), s)
        return out

    def gradient_matrix(self) -> sp.csr_matrix:
        """Sparse operator mapping flattened node values to flattened cell differentials."""
        n = self.grid.n
        ncell = int(np.prod(self.cshape))
        node_ids = np.arange(int(np.prod(self.grid.shape))).reshape(self.grid.shape)
        scale = 1.0 / (2 ** (n - 1) * self.grid.spacing)
        rows, cols, vals = [], [], []
        cell_ids = np.arange(ncell)
        for s in self.corners:
            ids = self.corner_values(node_ids, s).reshape(-1)
            for k in range(n):
                rows.append(cell_ids * n + k)
                cols.append(ids)
                vals.append(np.full(ncell, (2 * s[k] - 1) * scale[k]))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(ncell * n, node_ids.size),
        )

    def cell_mask(self, node_mask: np.ndarray) -> np.ndarray:
        m = np.ones(self.cshape, dtype=bool)
        for s in self.corners:
            m &= self.corner_values(node_mask, s)
        return m

    def node_full(self, cell_ok: np.ndarray) -> np.ndarray:
        """Nodes all of whose surrounding cells exist and are ``cell_ok``."""
        full = np.ones(self.grid.shape, dtype=bool)
        for s in self.corners:
            full &= self.scatter(cell_ok.astype(float), s) > 0.5
        return full


def _cone_state(du: np.ndarray, geo: CellGeometry):
    """``|du|^2`` and a future-timelike flag per cell."""
    norm2 = np.einsum("...i,...ij,...j->...", du, geo.ginv, du)
    up0 = np.einsum("...j,...j->...", geo.ginv[..., 0, :], du)
    with np.errstate(invalid="ignore"):
        future = np.isfinite(norm2) & (norm2 > 0) & (up0 > 0)
    return norm2, future


# ---------------------------------------------------------------------------
# operator and energy


@dataclass
class OperatorResult:
    """Operator values plus diagnostics on cells that needed special handling."""

    field: ScalarField
    clamped_cells: int
    inadmissible_cells: int
    cells: int

    @property
    def clamp_fraction(self) -> float:
        return self.clamped_cells / max(self.cells, 1)


def divergence_operator(u: ScalarField, exponent: float, geo: Optional[CellGeometry] = None,
                        clamp: float = CLAMP) -> OperatorResult:
    """``-div(|grad u|_F^exponent grad u)`` on nodes surrounded by admissible cells.

    ``exponent = p - 2`` gives the p-d'Alembertian; ``exponent = 0`` the
    (sign-flipped) wave operator.  Inside the power ``|grad u|`` is clamped
    below by ``clamp``; cells whose differential is not future timelike are
    inadmissible and mask their corner nodes.
    """
    geo = CellGeometry.of(u.grid) if geo is None else geo
    du = geo.gradient(u.values)
    norm2, future = _cone_state(du, geo)
    valid = geo.cell_mask(u.mask)
    ok = valid & future
    norm = np.sqrt(np.where(ok, norm2, 1.0))
    clamped = ok & (norm < clamp)
    norm = np.maximum(norm, clamp)
    up = np.einsum("...ij,...j->...i", geo.ginv, np.where(ok[..., None], du, 0.0))
    flux_up = (norm ** exponent)[..., None] * up
    # dE/du_i with E-density -(1/p)|w|^p has cell covector -|w|^(p-2) w^#
    flux = np.where(ok[..., None], -flux_up * geo.vol[..., None], 0.0)
    dE = geo.divergence_weights(flux)
    full = geo.node_full(ok)
    values = np.where(full, -dE / geo.node_vol, np.nan)
    return OperatorResult(
        ScalarField(u.grid, values, full),
        clamped_cells=int(np.count_nonzero(clamped)),
        inadmissible_cells=int(np.count_nonzero(valid & ~future)),
        cells=int(np.count_nonzero(valid)),
    )


def p_dalembertian(u: ScalarField, pq, geo: Optional[CellGeometry] = None, clamp: float = CLAMP) -> OperatorResult:
    """``box_p u = -div(|grad u|_F^(p-2) grad u)`` with ``p < 1, p != 0``."""
    return divergence_operator(u, _exponent(pq) - 2.0, geo, clamp)


@dataclass
class EnergyResult:
    value: float
    cells: int
    inadmissible_cells: int


def energy_functional(u: ScalarField, pq, geo: Optional[CellGeometry] = None) -> EnergyResult:
    """Midpoint quadrature of ``E(u) = int H(du) dvol`` over cells with valid corners.

    A cell whose differential lies outside the open dual cone contributes
    ``+inf`` (``H`` is infinite there).
    """
    p = _exponent(pq)
    geo = CellGeometry.of(u.grid) if geo is None else geo
    du = geo.gradient(u.values)
    norm2, future = _cone_state(du, geo)
    valid = geo.cell_mask(u.mask)
    bad = valid & ~future
    if np.any(bad):
        return EnergyResult(POS_INF, int(np.count_nonzero(valid)), int(np.count_nonzero(bad)))
    dens = -(norm2[valid] ** (0.5 * p)) / p
    return EnergyResult(float(np.sum(dens * geo.vol[valid])), int(np.count_nonzero(valid)), 0)


def convexity_probe(u0: ScalarField, u1: ScalarField, pq, lams: Sequence[float] = (0.25, 0.5, 0.75)) -> float:
    """Largest ``E((1-l)u0 + l u1) - (1-l)E(u0) - l E(u1)`` over ``lams`` (<= 0 if convex)."""
    geo = CellGeometry.of(u0.grid)
    e0 = energy_functional(u0, pq, geo).value
    e1 = energy_functional(u1, pq, geo).value
    worst = -np.inf
    mask = u0.mask & u1.mask
    for lam in lams:
        mix = ScalarField(u0.grid, (1 - lam) * u0.values + lam * u1.values, mask)
        em = energy_functional(mix, pq, geo).value
        worst = max(worst, em - (1 - lam) * e0 - lam * e1)
    return float(worst)


def is_future_directed(u: ScalarField, cg: CausalGraph, tol: float = 0.0) -> bool:
    """True when ``u(head) >= u(tail) - tol`` across every stencil edge of ``cg``."""
    if cg.grid is not u.grid and cg.grid.shape != u.grid.shape:
        raise UsageError("field and causal graph must share a grid")
    vals = u.values
    for off, w in zip(cg.offsets, cg.weights):
        tail = vals
        sl_head = [slice(None)] * vals.ndim
        sl_tail = [slice(None)] * vals.ndim
        for k, d in enumerate(off):
            if k > 0 and cg.grid.wrap[k]:
                tail = np.roll(tail, d, axis=k)
                continue
            if d >= 0:
                sl_head[k], sl_tail[k] = slice(d, None), slice(0, vals.shape[k] - d)
            else:
                sl_head[k], sl_tail[k] = slice(0, d), slice(-d, None)
        head_v = vals[tuple(sl_head)]
        tail_v = tail[tuple(sl_tail)]
        edge = np.isfinite(w[tuple(sl_head)])
        with np.errstate(invalid="ignore"):
            if np.any(edge & (head_v < tail_v - tol)):
                return False
    return True


# ---------------------------------------------------------------------------
# weak comparison


def bump(s: np.ndarray) -> np.ndarray:
    """``exp(-1/(1-s^2))`` on ``|s| < 1``, zero outside; smooth and compactly supported."""
    out = np.zeros_like(s, dtype=float)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass
class TestFunction:
    center: np.ndarray
    halfwidth: np.ndarray

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        s = (pts - self.center) / self.halfwidth
        return np.prod(bump(s), axis=-1)


def default_test_functions(region: np.ndarray, sizes: int = 5, centers: int = 5) -> list:
    """Tensor-product bumps inside ``region`` (``(n, 2)`` bounds).

    Centres: the middle of the region plus four points pulled a quarter of
    the way towards alternating corners.  Half-widths range from 10% to 30%
    of the region extent per axis.
    """
    region = np.asarray(region, dtype=float)
    mid = region.mean(axis=1)
    ext = region[:, 1] - region[:, 0]
    n = len(mid)
    pattern = [np.zeros(n)]
    for j in range(centers - 1):
        signs = np.array([1.0 if ((j >> (k % 2)) + k) % 2 == 0 else -1.0 for k in range(n)])
        pattern.append(0.2 * signs)
    fracs = np.linspace(0.10, 0.30, sizes)
    out = []
    for f in fracs:
        for c in pattern[:centers]:
            out.append(TestFunction(mid + c * ext, f * ext))
    return out


@dataclass
class ComparisonReport:
    test_function_count: int
    lhs: list
    rhs: list
    skipped: int
    max_violation: float
    max_relative_gap: float
    tolerance: float
    clamp_fraction: float
    note: str = ""

    @property
    def verdict(self) -> str:
        return "pass" if self.test_function_count and self.max_violation <= self.tolerance else "fail"


def weak_comparison_check(
    bfield,
    pq,
    test_fns: Optional[list] = None,
    rtol: float = 5e-3,
    atol: float = 1e-9,
) -> ComparisonReport:
    """Check ``int g(grad phi, |grad b|^(p-2) grad b) <= (n-1) int phi / l`` per bump.

    ``bfield`` is a :class:`~lorlab.busemann.BusemannField` of sign ``+``; its
    ``ell`` (time separation to ``gamma(r)``) supplies the right-hand side.
    Both sides share the cell quadrature.  Bumps whose support meets a node
    without a full admissible stencil are skipped.  ``max_violation`` is the
    largest ``(lhs - rhs) / max(|rhs|, atol)``; a bump fails when this
    exceeds ``rtol``.
    """
    if bfield.sign != "+":
        raise UsageError("the comparison is stated for b^+ fields")
    u = bfield.values
    grid = u.grid
    n = grid.n
    geo = CellGeometry.of(grid)
    op = p_dalembertian(u, pq, geo)
    ell = bfield.ell.values
    good = op.field.mask & np.isfinite(ell) & (ell > 0)
    if test_fns is None:
        idx = np.argwhere(good)
        if len(idx) == 0:
            raise DomainError("no node has a full admissible stencil")
        pts = grid.points()[good]
        region = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
        test_fns = default_test_functions(region)
    pts = grid.points()
    lhs, rhs = [], []
    skipped = 0
    worst = -np.inf
    rel = 0.0
    for phi in test_fns:
        vals = phi(pts)
        support = vals > 0
        if not np.any(support) or np.any(support & ~good):
            skipped += 1
            continue
        weight = vals * geo.node_vol
        L = float(np.sum(weight[support] * op.field.values[support]))
        R = float((n - 1) * np.sum(weight[support] / ell[support]))
        lhs.append(L)
        rhs.append(R)
        scale = max(abs(R), atol)
        worst = max(worst, (L - R) / scale)
        rel = max(rel, abs(L - R) / scale)
    note = ""
    if bfield.ladder:
        note = f"limit field approximated by r = {bfield.r:g}"
    return ComparisonReport(
        test_function_count=len(lhs),
        lhs=lhs,
        rhs=rhs,
        skipped=skipped,
        max_violation=float(worst) if lhs else float("nan"),
        max_relative_gap=float(rel),
        tolerance=rtol,
        clamp_fraction=op.clamp_fraction,
        note=note,
    )


def weak_lhs_direct(u: ScalarField, phi_values: np.ndarray, pq, geo: Optional[CellGeometry] = None) -> float:
    """``sum_c g(grad phi_c, X_c) sqrt|g_c| V`` assembled from cell fluxes directly."""
    p = _exponent(pq)
    geo = CellGeometry.of(u.grid) if geo is None else geo
    du = geo.gradient(u.values)
    dphi = geo.gradient(phi_values)
    norm2, future = _cone_state(du, geo)
    ok = geo.cell_mask(u.mask) & future
    norm = np.maximum(np.sqrt(np.where(ok, norm2, 1.0)), CLAMP)
    up = np.einsum("...ij,...j->...i", geo.ginv, du)
    X = (norm ** (p - 2))[..., None] * up
    integrand = np.einsum("...i,...i->...", dphi, X) * geo.vol
    return float(np.sum(integrand[ok & np.all(np.isfinite(dphi), axis=-1)]))


# ---------------------------------------------------------------------------
# p-harmonic solver


@dataclass
class SolveResult:
    field: ScalarField
    converged: bool
    iterations: int
    residual: float
    energies: list = field(repr=False, default_factory=list)


def boundary_mask(grid: Grid) -> np.ndarray:
    """Nodes on non-periodic faces of the grid box."""
    m = np.zeros(grid.shape, dtype=bool)
    for k in range(grid.n):
        if grid.wrap[k]:
            continue
        sl = [slice(None)] * grid.n
        sl[k] = 0
        m[tuple(sl)] = True
        sl[k] = -1
        m[tuple(sl)] = True
    return m


def _initial_guess(values: np.ndarray) -> np.ndarray:
    """Linear interpolation in time between the bottom and top boundary slices."""
    T = values.shape[0]
    s = np.linspace(0.0, 1.0, T).reshape((T,) + (1,) * (values.ndim - 1))
    return (1 - s) * values[0] + s * values[-1]


def p_harmonic_solve(
    boundary: ScalarField,
    pq,
    max_iter: int = 50,
    source: Optional[np.ndarray] = None,
    initial: Optional[np.ndarray] = None,
    tol: float = 1e-10,
) -> SolveResult:
    """Minimise ``E(u) + sum_i f_i u_i sqrt|g_i| V`` with ``u`` fixed on the boundary.

    The minimiser solves ``box_p u = f`` (``f = source``, default 0) in the
    interior.  Damped Newton steps use the exact sparse Hessian
    ``G^T diag(D^2H sqrt|g| V) G``; a step is halved until the energy
    decreases and every cell differential stays future timelike.  Boundary
    data must be given on every boundary node; interior values come from
    ``initial`` or a linear-in-time interpolation of the top and bottom data.
    """
    p = _exponent(pq)
    grid = boundary.grid
    bmask = boundary_mask(grid)
    if not np.all(boundary.mask[bmask]):
        raise UsageError("boundary data must cover every boundary node")
    geo = CellGeometry.of(grid)
    f = np.zeros(grid.shape) if source is None else np.asarray(source, dtype=float)
    u = np.where(bmask, boundary.values, 0.0)
    guess = _initial_guess(np.where(bmask, boundary.values, np.nan)) if initial is None else np.asarray(initial)
    u = np.where(bmask, u, guess)
    if np.any(~np.isfinite(u)):
        raise UsageError("could not build an interior initial guess; pass initial=")
    _, future = _cone_state(geo.gradient(u), geo)
    if not np.all(future):
        raise DomainError("initial field has differentials outside the future cone; boundary data infeasible")

    G = geo.gradient_matrix()
    free = np.flatnonzero(~bmask.reshape(-1))
    Gf = G[:, free]
    wsrc = (f * geo.node_vol).reshape(-1)

    def objective(uvec):
        du = (G @ uvec).reshape(geo.cshape + (grid.n,))
        norm2, fut = _cone_state(du, geo)
        if not np.all(fut):
            return None, None, None
        e = float(np.sum(-(norm2 ** (0.5 * p)) / p * geo.vol) + wsrc @ uvec)
        up = np.einsum("...ij,...j->...i", geo.ginv, du)
        cov = -(norm2 ** (0.5 * p - 1))[..., None] * up * geo.vol[..., None]
        grad = G.T @ cov.reshape(-1) + wsrc
        return e, grad, (du, norm2, up)

    uvec = u.reshape(-1).copy()
    e, grad, state = objective(uvec)
    energies = [e]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        du, norm2, up = state
        hess = (norm2 ** (0.5 * p - 1))[..., None, None] * (
            (2 - p) * up[..., :, None] * up[..., None, :] / norm2[..., None, None] - geo.ginv
        )
        hess = hess * geo.vol[..., None, None]
        ncell = int(np.prod(geo.cshape))
        blocks = sp.block_diag(list(hess.reshape(ncell, grid.n, grid.n)), format="csr")
        A = (Gf.T @ blocks @ Gf).tocsc()
        gfree = grad[free]
        step = spla.spsolve(A, -gfree)
        t = 1.0
        accepted = False
        while t > 1e-12:
            trial = uvec.copy()
            trial[free] += t * step
            e_new, g_new, s_new = objective(trial)
            if e_new is not None and e_new <= e + 1e-4 * t * float(gfree @ step):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        uvec, e, grad, state = trial, e_new, g_new, s_new
        energies.append(e)
        if np.max(np.abs(t * step)) < tol * max(1.0, np.max(np.abs(uvec))):
            converged = True
            break
    out = ScalarField(grid, uvec.reshape(grid.shape), np.ones(grid.shape, dtype=bool))
    op = p_dalembertian(out, p, geo)
    inner = op.field.mask & ~bmask
    res = float(np.max(np.abs(op.field.values[inner] - f[inner]))) if np.any(inner) else 0.0
    return SolveResult(out, converged, it, res, energies)

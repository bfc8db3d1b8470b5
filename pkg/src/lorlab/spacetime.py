"""Coordinate charts, curvature by finite differences, and geometric probes.

A :class:`MetricChart` wraps a vectorised metric callback ``metric(x)`` that
maps points of shape ``(..., n)`` to matrices ``(..., n, n)``.  Axis 0 is time
and ``d/dx^0`` is assumed future timelike.

Index conventions
-----------------
``christoffel[i, j, k] = Gamma^i_{jk}``,
``riemann[a, b, c, d] = R_{abcd}`` with ``R^r_{smn} = d_m Gamma^r_{ns} - ...``,
``ricci[i, k] = g^{jl} R_{ijkl}``.  With these conventions a round sphere has
positive sectional curvature ``R(X, Y, X, Y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .cone import MetricValue, quad
from .errors import DomainError, SignatureError, UsageError


@dataclass
class CurvatureRecord:
    metric: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    einstein: np.ndarray
    volume_density: float


@dataclass
class MetricChart:
    """Analytic Lorentzian metric on a coordinate box.

    ``analytic`` optionally returns ``(christoffel, d_christoffel)`` at a
    single point; it backs :meth:`analytic_curvature`, which tests use as an
    oracle.  It is never used by :func:`curvature_pack` itself.
    """

    name: str
    n: int
    box: np.ndarray
    metric: Callable[[np.ndarray], np.ndarray]
    periodic: tuple = ()
    analytic: Optional[Callable[[np.ndarray], tuple]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float)
        if self.box.shape != (self.n, 2) or np.any(self.box[:, 1] <= self.box[:, 0]):
            raise UsageError(f"box must be {self.n} increasing intervals, got {self.box.tolist()}")
        if not self.periodic:
            self.periodic = (False,) * self.n
        self.periodic = tuple(bool(b) for b in self.periodic)
        if len(self.periodic) != self.n or self.periodic[0]:
            raise UsageError("periodic flags must have length n and time (axis 0) cannot be periodic")

    @property
    def extent(self) -> np.ndarray:
        return self.box[:, 1] - self.box[:, 0]

    def metric_at(self, x) -> MetricValue:
        x = self.check_point(x)
        return MetricValue(self.metric(x))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise UsageError(f"{self.name} points have {self.n} coordinates, got shape {x.shape}")
        return x

    def default_step(self) -> np.ndarray:
        return 1e-3 * self.extent

    def analytic_curvature(self, x) -> Optional[CurvatureRecord]:
        if self.analytic is None:
            return None
        x = self.check_point(x)
        gamma, dgamma = self.analytic(x)
        return assemble_curvature(self.metric(x), gamma, dgamma)


# ---------------------------------------------------------------------------
# finite differences


def _steps(chart: MetricChart, step) -> np.ndarray:
    if step is None:
        return chart.default_step()
    h = np.broadcast_to(np.asarray(step, dtype=float), (chart.n,)).copy()
    if np.any(h <= 0):
        raise UsageError("finite-difference step must be positive")
    return h


def metric_derivatives(chart: MetricChart, X: np.ndarray, h: np.ndarray):
    """Metric, first and second partial derivatives at points ``X`` (m, n).

    Returns ``g (m,n,n)``, ``dg[:, k, i, j] = d_k g_ij`` and
    ``ddg[:, k, l, i, j] = d_k d_l g_ij`` from central differences.
    """
    n = chart.n
    X = np.atleast_2d(X)
    m = X.shape[0]
    eye = np.eye(n) * h
    shifts = [np.zeros(n)]
    for k in range(n):
        shifts += [eye[k], -eye[k]]
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
    for k, l in pairs:
        shifts += [eye[k] + eye[l], eye[k] - eye[l], -eye[k] + eye[l], -eye[k] - eye[l]]
    shifts = np.array(shifts)
    pts = X[:, None, :] + shifts[None, :, :]
    G = chart.metric(pts.reshape(-1, n)).reshape(m, len(shifts), n, n)
    g0 = G[:, 0]
    dg = np.empty((m, n, n, n))
    ddg = np.empty((m, n, n, n, n))
    for k in range(n):
        gp, gm = G[:, 1 + 2 * k], G[:, 2 + 2 * k]
        dg[:, k] = (gp - gm) / (2 * h[k])
        ddg[:, k, k] = (gp - 2 * g0 + gm) / h[k] ** 2
    base = 1 + 2 * n
    for idx, (k, l) in enumerate(pairs):
        pp, pm, mp, mm = (G[:, base + 4 * idx + j] for j in range(4))
        val = (pp - pm - mp + mm) / (4 * h[k] * h[l])
        ddg[:, k, l] = val
        ddg[:, l, k] = val
    return g0, dg, ddg


def christoffel_from_derivatives(g, dg):
    ginv = np.linalg.inv(g)
    # lowered Gamma_{l jk} = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    low = 0.5 * (
        np.einsum("...jlk->...ljk", dg) + np.einsum("...klj->...ljk", dg) - dg
    )
    return np.einsum("...il,...ljk->...ijk", ginv, low), ginv


def dchristoffel_from_derivatives(g, dg, ddg):
    """``dgamma[..., m, i, j, k] = d_m Gamma^i_{jk}``."""
    gamma, ginv = christoffel_from_derivatives(g, dg)
    low = 0.5 * (
        np.einsum("...jlk->...ljk", dg) + np.einsum("...klj->...ljk", dg) - dg
    )
    # d_m of the lowered symbols
    dlow = 0.5 * (
        np.einsum("...mjlk->...mljk", ddg)
        + np.einsum("...mklj->...mljk", ddg)
        - np.einsum("...mljk->...mljk", ddg)
    )
    dginv = -np.einsum("...ia,...mab,...bl->...mil", ginv, dg, ginv)
    dgamma = np.einsum("...mil,...ljk->...mijk", dginv, low) + np.einsum(
        "...il,...mljk->...mijk", ginv, dlow
    )
    return gamma, dgamma


def assemble_curvature(g, gamma, dgamma) -> CurvatureRecord:
    """Riemann, Ricci, scalar and Einstein tensors from ``Gamma`` and ``dGamma``."""
    g = np.asarray(g, dtype=float)
    rup = (
        np.einsum("...mrns->...rsmn", dgamma)
        - np.einsum("...nrms->...rsmn", dgamma)
        + np.einsum("...rml,...lns->...rsmn", gamma, gamma)
        - np.einsum("...rnl,...lms->...rsmn", gamma, gamma)
    )
    riemann = np.einsum("...ar,...rsmn->...asmn", g, rup)
    ginv = np.linalg.inv(g)
    ricci = np.einsum("...jl,...ijkl->...ik", ginv, riemann)
    ricci = 0.5 * (ricci + np.swapaxes(ricci, -1, -2))
    scalar = np.einsum("...ik,...ik->...", ginv, ricci)
    einstein = ricci - 0.5 * scalar[..., None, None] * g
    vol = np.sqrt(np.abs(np.linalg.det(g)))
    return CurvatureRecord(g, gamma, riemann, ricci, scalar, einstein, vol)


def _check_interior(chart: MetricChart, X: np.ndarray, h: np.ndarray, margin: float):
    for k in range(chart.n):
        if chart.periodic[k]:
            continue
        lo = chart.box[k, 0] + margin * h[k]
        hi = chart.box[k, 1] - margin * h[k]
        if np.any(X[..., k] < lo) or np.any(X[..., k] > hi):
            raise DomainError(
                f"point too close to the boundary of {chart.name} along axis {k} "
                f"(needs {margin:g} steps of {h[k]:g})"
            )


def christoffel(chart: MetricChart, X, step=None) -> np.ndarray:
    """Christoffel symbols at points ``X`` (..., n) by central differences."""
    X = chart.check_point(X)
    h = _steps(chart, step)
    shape = X.shape[:-1]
    flat = X.reshape(-1, chart.n)
    n = chart.n
    eye = np.eye(n) * h
    pts = np.concatenate([flat[:, None, :] + eye[None], flat[:, None, :] - eye[None]], axis=1)
    G = chart.metric(pts.reshape(-1, n)).reshape(flat.shape[0], 2 * n, n, n)
    dg = (G[:, :n] - G[:, n:]) / (2 * h[None, :, None, None])
    g = chart.metric(flat)
    gamma, _ = christoffel_from_derivatives(g, dg)
    return gamma.reshape(shape + (n, n, n))


def curvature_pack(chart: MetricChart, x, step=None, richardson: bool = False) -> CurvatureRecord:
    """All curvature tensors at one point from central differences of the metric.

    ``step`` defaults to 1e-3 of the box extent per axis.  With
    ``richardson=True`` the derivatives at ``h`` and ``h/2`` are combined to
    cancel the leading ``O(h^2)`` error.
    """
    x = chart.check_point(x)
    if x.ndim != 1:
        raise UsageError("curvature_pack evaluates a single point")
    h = _steps(chart, step)
    _check_interior(chart, x, h, 2.0)
    g, dg, ddg = metric_derivatives(chart, x[None], h)
    if richardson:
        _, dg2, ddg2 = metric_derivatives(chart, x[None], h / 2)
        dg = (4 * dg2 - dg) / 3
        ddg = (4 * ddg2 - ddg) / 3
    gamma, dgamma = dchristoffel_from_derivatives(g, dg, ddg)
    rec = assemble_curvature(g[0], gamma[0], dgamma[0])
    rec.scalar = float(rec.scalar)
    rec.volume_density = float(rec.volume_density)
    return rec


def curvature_batch(chart: MetricChart, X, step=None) -> CurvatureRecord:
    """Vectorised :func:`curvature_pack` over points ``X`` (m, n)."""
    X = np.atleast_2d(chart.check_point(X))
    h = _steps(chart, step)
    _check_interior(chart, X, h, 2.0)
    g, dg, ddg = metric_derivatives(chart, X, h)
    gamma, dgamma = dchristoffel_from_derivatives(g, dg, ddg)
    return assemble_curvature(g, gamma, dgamma)


# ---------------------------------------------------------------------------
# frames and sampling


def orthonormal_frame(g: np.ndarray) -> np.ndarray:
    """Columns ``e_0..e_{n-1}`` with ``g(e_a, e_b) = diag(1, -1, ..., -1)``, ``e_0`` future."""
    lam, vecs = np.linalg.eigh(g)
    if not (lam[-1] > 0 and np.all(lam[:-1] < 0)):
        raise SignatureError(f"metric eigenvalues {lam} are not Lorentzian")
    order = [len(lam) - 1] + list(range(len(lam) - 1))
    frame = vecs[:, order] / np.sqrt(np.abs(lam[order]))
    if frame[0, 0] < 0:
        frame[:, 0] = -frame[:, 0]
    return frame


def riemannian_reference(g: np.ndarray) -> np.ndarray:
    """Riemannian metric obtained by flipping the negative eigenvalues of ``g``."""
    lam, vecs = np.linalg.eigh(g)
    return np.einsum("...ia,...a,...ja->...ij", vecs, np.abs(lam), vecs)


def _unit_directions(rng, count, dim):
    d = rng.normal(size=(count, dim))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return d / norms


# ---------------------------------------------------------------------------
# energy conditions


@dataclass
class Violation:
    point: list
    vector: list
    value: float


@dataclass
class EnergyConditionReport:
    condition: str
    sample_points: int
    vectors_per_point: int
    tolerance: float
    min_value: float
    violations: list
    comoving_values: list

    @property
    def verdict(self) -> str:
        return "pass" if not self.violations else "fail"


def energy_condition_check(
    chart: MetricChart,
    cond: str,
    sample_count: int,
    seed: int = 0,
    vectors_per_point: int = 8,
    tol: float = 1e-6,
    max_rapidity: float = 1.5,
    step=None,
) -> EnergyConditionReport:
    """Sample points and future (or lightlike) vectors and test an energy condition.

    WEC tests ``T(v,v) >= 0`` with ``T = G / 8 pi``; SEC tests
    ``Ric(v,v) >= 0`` on future vectors; NEC tests ``Ric(v,v) >= 0`` on
    lightlike ``v = e_0 + n``.  The first vector at each point is the rest
    vector ``e_0`` of the metric eigenframe (comoving for diagonal metrics).
    """
    cond = cond.upper()
    if cond not in ("WEC", "SEC", "NEC"):
        raise UsageError(f"unknown energy condition {cond!r}")
    if sample_count < 1:
        raise UsageError("sample_count must be >= 1")
    h = _steps(chart, step)
    n = chart.n
    lo = chart.box[:, 0] + np.where(chart.periodic, 0.0, 3 * h)
    hi = chart.box[:, 1] - np.where(chart.periodic, 0.0, 3 * h)
    pts = np.empty((sample_count, n))
    vecs = np.empty((sample_count, vectors_per_point, n))
    for i in range(sample_count):
        rng = np.random.default_rng([seed, i])
        pts[i] = lo + (hi - lo) * rng.random(n)
        frame = orthonormal_frame(chart.metric(pts[i]))
        dirs = _unit_directions(rng, vectors_per_point, n - 1)
        if cond == "NEC":
            local = np.concatenate([np.ones((vectors_per_point, 1)), dirs], axis=1)
        else:
            eta = max_rapidity * rng.random(vectors_per_point)
            eta[0] = 0.0
            local = np.concatenate([np.cosh(eta)[:, None], np.sinh(eta)[:, None] * dirs], axis=1)
        vecs[i] = local @ frame.T
    rec = curvature_batch(chart, pts, h)
    form = rec.einstein / (8 * math.pi) if cond == "WEC" else rec.ricci
    values = np.einsum("mvi,mij,mvj->mv", vecs, form, vecs)
    violations = [
        Violation(pts[i].tolist(), vecs[i, j].tolist(), float(values[i, j]))
        for i in range(sample_count)
        for j in range(vectors_per_point)
        if values[i, j] < -tol
    ]
    return EnergyConditionReport(
        condition=cond,
        sample_points=sample_count,
        vectors_per_point=vectors_per_point,
        tolerance=tol,
        min_value=float(values.min()),
        violations=violations,
        comoving_values=values[:, 0].tolist(),
    )


# ---------------------------------------------------------------------------
# slices


def slice_mean_curvature(chart: MetricChart, t0: float, x, step=None) -> float:
    """Mean curvature of ``{x^0 = t0}`` at spatial point ``x`` w.r.t. the future unit normal.

    Computed as the divergence ``d_i N^i + Gamma^i_{ik} N^k`` of the unit
    normal field ``N = grad t / |grad t|`` of the time foliation.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = np.concatenate([[float(t0)], x])
    X = chart.check_point(X)
    h = _steps(chart, step)
    _check_interior(chart, X, h, 2.0)
    n = chart.n

    def normal(P):
        ginv = np.linalg.inv(chart.metric(P))
        g00 = ginv[..., 0, 0]
        if np.any(g00 <= 0):
            raise SignatureError("time slice is not spacelike: grad t is not timelike")
        return ginv[..., :, 0] / np.sqrt(g00)[..., None]

    eye = np.eye(n) * h
    div = sum((normal(X + eye[k])[k] - normal(X - eye[k])[k]) / (2 * h[k]) for k in range(n))
    gamma = christoffel(chart, X, h)
    N = normal(X)
    return float(div + np.einsum("iik,k->", gamma, N))


# ---------------------------------------------------------------------------
# geodesics


def geodesic_rhs(chart: MetricChart, step=None):
    n = chart.n
    h = _steps(chart, step if step is not None else 1e-2 * chart.default_step())

    def rhs(_, y):
        x, v = y[:n], y[n:]
        gamma = christoffel(chart, x, h)
        return np.concatenate([v, -np.einsum("ijk,j,k->i", gamma, v, v)])

    return rhs


def exp_map(chart: MetricChart, x, v, step=None, rtol=1e-12, atol=1e-13) -> np.ndarray:
    """Endpoint at parameter 1 of the geodesic with initial point ``x`` and velocity ``v``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    sol = solve_ivp(
        geodesic_rhs(chart, step), (0.0, 1.0), np.concatenate([x, v]),
        method="DOP853", rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise DomainError(f"geodesic integration failed: {sol.message}")
    return sol.y[: chart.n, -1]


def geodesic_time_separation(chart: MetricChart, p, q, step=None, tol=1e-12, max_iter=30) -> float:
    """Proper time along the geodesic joining ``p`` to ``q`` (shooting + Newton).

    Valid inside a convex normal neighbourhood, where the connecting geodesic
    is the maximiser.  Raises :class:`DomainError` if ``q`` is not in the
    timelike future of ``p`` along that geodesic.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = chart.n
    v = q - p
    scale = max(1.0, float(np.linalg.norm(v)))
    for _ in range(max_iter):
        F = exp_map(chart, p, v, step) - q
        if np.linalg.norm(F) < tol * scale:
            break
        delta = 1e-7 * scale
        J = np.empty((n, n))
        for k in range(n):
            dv = np.zeros(n)
            dv[k] = delta
            J[:, k] = (exp_map(chart, p, v + dv, step) - exp_map(chart, p, v - dv, step)) / (2 * delta)
        v = v - np.linalg.solve(J, F)
    else:
        raise DomainError("geodesic shooting did not converge")
    g = chart.metric(p)
    vv = float(quad(g, v))
    if vv <= 0 or (g @ v) @ orthonormal_frame(g)[:, 0] <= 0:
        raise DomainError("endpoints are not timelike related")
    return math.sqrt(vv)


@dataclass
class SectionalEstimate:
    value: float
    fit_residual: float
    scales: list
    samples: list


def sec_from_timesep(
    chart: MetricChart,
    x,
    u,
    v,
    scales: Sequence[float] = (0.05, 0.1, 0.15, 0.2, 0.25),
    ell_provider: Optional[Callable] = None,
    ratio: float = 0.5,
    step=None,
) -> SectionalEstimate:
    """Estimate ``R(u, v, u, v)`` from the defect of the time separation.

    With ``sigma_s = exp_x(s u)`` and ``tau_t = exp_x(t v)``, ``s = ratio*t``,
    ``l(sigma_s, tau_t)^2 = |t v - s u|_F^2 - R(u,v,u,v) s^2 t^2 / 3 + O(t^5)``.
    The normalised defect is fitted by a polynomial in ``t`` whose intercept
    is returned.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    g = chart.metric(x)
    frame_t = orthonormal_frame(g)[:, 0]
    for name, w in (("u", u), ("v", v), ("v - u", v - ratio * u)):
        if quad(g, w) <= 0 or (g @ w) @ frame_t <= 0:
            raise DomainError(f"{name} must be future timelike at x")
    if not 0 < ratio < 1:
        raise UsageError("ratio = s/t must lie in (0, 1)")
    if ell_provider is None:
        def ell_provider(P, Q):
            return geodesic_time_separation(chart, P, Q, step)
    ys, ts = [], []
    for t in scales:
        s = ratio * t
        P = exp_map(chart, x, s * u, step)
        Q = exp_map(chart, x, t * v, step)
        ell = ell_provider(P, Q)
        if not np.isfinite(ell):
            raise DomainError("time separation unavailable for the sampled points")
        flat = float(quad(g, t * v - s * u))
        ys.append(3.0 * (flat - ell**2) / (s * s * t * t))
        ts.append(t)
    ts = np.asarray(ts)
    ys = np.asarray(ys)
    deg = min(2, len(ts) - 1)
    coef, res, *_ = np.polyfit(ts, ys, deg, full=True)
    fit = np.polyval(coef, ts) - ys
    return SectionalEstimate(float(coef[-1]), float(np.max(np.abs(fit))), ts.tolist(), ys.tolist())

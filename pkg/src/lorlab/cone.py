"""Pointwise algebra of the future cone.

Everything here acts on a single tangent (or cotangent) space with metric
``g`` of signature ``(+, -, ..., -)``.  Vectors are arrays of chart
components, index 0 being time.

The hyperbolic norm ``|v|_F`` is ``sqrt(g(v, v))`` on the future cone ``F``
and ``-inf`` elsewhere.  Covectors are measured by the inverse metric and live
in the dual cone ``F*``, the covectors whose raised vector is future causal.

Extended-real results use IEEE ``-inf``/``+inf`` as sentinels (``NEG_INF``,
``POS_INF``); NaN is never returned.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConditioningWarning, DomainError, SignatureError, UsageError

NEG_INF = -math.inf
POS_INF = math.inf

#: relative tolerance of cone decisions, multiplied by ``MetricValue.tolerance_scale``
CONE_EPS = 1e-12


class CausalClass(str, enum.Enum):
    TIMELIKE = "timelike"
    LIGHTLIKE = "lightlike"
    SPACELIKE = "spacelike"
    PAST_CAUSAL = "past-causal"
    ZERO = "zero"


@dataclass(frozen=True)
class PExponent:
    """Homogeneity exponent ``p < 1, p != 0`` and its conjugate ``q = p/(p-1)``."""

    p: float
    q: float = field(init=False)

    def __post_init__(self):
        p = float(self.p)
        if not math.isfinite(p) or p >= 1.0 or p == 0.0:
            raise UsageError(f"p must satisfy p < 1 and p != 0, got {self.p!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", p / (p - 1.0))

    @classmethod
    def from_q(cls, q: float) -> "PExponent":
        q = float(q)
        if not math.isfinite(q) or q >= 1.0 or q == 0.0:
            raise UsageError(f"q must satisfy q < 1 and q != 0, got {q!r}")
        return cls(q / (q - 1.0))


class MetricValue:
    """Metric tensor at one point, validated to be Lorentzian."""

    def __init__(self, entries, tolerance_scale: float = 1.0):
        g = np.array(entries, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
            raise UsageError(f"metric must be a square n x n matrix with n >= 2, got shape {g.shape}")
        if not np.allclose(g, g.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(g).max())):
            raise SignatureError("metric is not symmetric")
        if tolerance_scale <= 0:
            raise UsageError("tolerance_scale must be positive")
        g = 0.5 * (g + g.T)
        lam, vecs = np.linalg.eigh(g)
        if not (lam[-1] > 0 and np.all(lam[:-1] < 0)):
            raise SignatureError(f"metric eigenvalues {lam} do not have signature (+,-,...,-)")
        future = vecs[:, -1]
        if future[0] < 0:
            future = -future
        self.entries = g
        self.n = g.shape[0]
        self.tolerance_scale = float(tolerance_scale)
        self.eigenvalues = lam
        self.eigenvectors = vecs
        self.future = future
        self.inverse = np.linalg.inv(g)

    @property
    def eps(self) -> float:
        return CONE_EPS * self.tolerance_scale

    def check_dim(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise UsageError(f"expected a vector of length {self.n}, got shape {v.shape}")
        return v

    def __repr__(self):
        return f"MetricValue({self.entries.tolist()!r})"


def _as_metric(g) -> MetricValue:
    return g if isinstance(g, MetricValue) else MetricValue(g)


# ---------------------------------------------------------------------------
# classification


def _classify(quadratic: float, orientation: float, size2: float, eps: float) -> CausalClass:
    if size2 == 0.0:
        return CausalClass.ZERO
    if quadratic < -eps * size2:
        return CausalClass.SPACELIKE
    if orientation < 0:
        return CausalClass.PAST_CAUSAL
    if abs(quadratic) <= eps * size2:
        return CausalClass.LIGHTLIKE
    return CausalClass.TIMELIKE


def classify(v, g) -> CausalClass:
    """Causal character of the vector ``v``.

    ``v`` is causal when ``g(v,v) >= -eps |v|_E^2`` and lightlike when
    ``|g(v,v)| <= eps |v|_E^2``; the orientation comes from the future
    eigenvector of ``g``.
    """
    g = _as_metric(g)
    v = g.check_dim(v)
    return _classify(v @ g.entries @ v, v @ g.entries @ g.future, float(v @ v), g.eps)


def classify_covector(w, g) -> CausalClass:
    """Causal character of the covector ``w`` (via its raised vector)."""
    g = _as_metric(g)
    w = g.check_dim(w)
    return _classify(w @ g.inverse @ w, float(w @ g.future), float(w @ w), g.eps)


def f_norm(v, g) -> float:
    """Hyperbolic norm ``|v|_F``; ``NEG_INF`` off the future cone."""
    g = _as_metric(g)
    v = g.check_dim(v)
    c = classify(v, g)
    if c in (CausalClass.SPACELIKE, CausalClass.PAST_CAUSAL):
        return NEG_INF
    if c is not CausalClass.TIMELIKE:
        return 0.0
    return math.sqrt(v @ g.entries @ v)


def dual_norm(w, g) -> float:
    """``|w|_{F*}`` for covectors; ``NEG_INF`` off the dual cone."""
    g = _as_metric(g)
    w = g.check_dim(w)
    c = classify_covector(w, g)
    if c in (CausalClass.SPACELIKE, CausalClass.PAST_CAUSAL):
        return NEG_INF
    if c is not CausalClass.TIMELIKE:
        return 0.0
    return math.sqrt(w @ g.inverse @ w)


# ---------------------------------------------------------------------------
# Lagrangian / Hamiltonian


class ConeValue(NamedTuple):
    value: float
    boundary: bool


def _power_on_cone(norm: float, c: CausalClass, exponent: float) -> ConeValue:
    # value of -(1/exponent)|.|^exponent, with one-sided limits on the boundary
    if c in (CausalClass.SPACELIKE, CausalClass.PAST_CAUSAL):
        return ConeValue(POS_INF, False)
    if c in (CausalClass.LIGHTLIKE, CausalClass.ZERO):
        return ConeValue(POS_INF if exponent < 0 else 0.0, True)
    return ConeValue(-(norm**exponent) / exponent, False)


def lagrangian(v, pq: PExponent, g) -> ConeValue:
    """``L(v) = -(1/q)|v|_F^q`` on ``F``, ``+inf`` outside."""
    g = _as_metric(g)
    v = g.check_dim(v)
    c = classify(v, g)
    norm = f_norm(v, g) if c is CausalClass.TIMELIKE else 0.0
    return _power_on_cone(norm, c, pq.q)


def hamiltonian(w, pq: PExponent, g) -> ConeValue:
    """``H(w) = -(1/p)|w|_{F*}^p`` on the interior of ``F*``, ``+inf`` outside."""
    g = _as_metric(g)
    w = g.check_dim(w)
    c = classify_covector(w, g)
    norm = dual_norm(w, g) if c is CausalClass.TIMELIKE else 0.0
    return _power_on_cone(norm, c, pq.p)


def lagrangian_hamiltonian(x, pq: PExponent, g) -> tuple[ConeValue, ConeValue]:
    """``(L(x), H(x))`` reading the components of ``x`` as a vector and as a covector."""
    return lagrangian(x, pq, g), hamiltonian(x, pq, g)


def _require_timelike(v, g: MetricValue, covector: bool = False) -> np.ndarray:
    v = g.check_dim(v)
    c = classify_covector(v, g) if covector else classify(v, g)
    if c is not CausalClass.TIMELIKE:
        kind = "covector" if covector else "vector"
        raise DomainError(f"{kind} {v.tolist()} is {c.value}, not future timelike")
    return v


def lagrangian_gradient(v, pq: PExponent, g) -> np.ndarray:
    """``DL(v) = -|v|^{q-2} g v`` (a covector, past-pointing)."""
    g = _as_metric(g)
    v = _require_timelike(v, g)
    norm = math.sqrt(v @ g.entries @ v)
    return -(norm ** (pq.q - 2.0)) * (g.entries @ v)


def hamiltonian_gradient(w, pq: PExponent, g) -> np.ndarray:
    """``DH(w) = -|w|^{p-2} g^{-1} w`` (a vector, past-pointing)."""
    g = _as_metric(g)
    w = _require_timelike(w, g, covector=True)
    norm = math.sqrt(w @ g.inverse @ w)
    return -(norm ** (pq.p - 2.0)) * (g.inverse @ w)


def momentum(v, pq: PExponent, g) -> np.ndarray:
    """Covector in ``F*`` dual to the future vector ``v``: ``-DL(v)``."""
    return -lagrangian_gradient(v, pq, g)


def velocity(w, pq: PExponent, g) -> np.ndarray:
    """Future vector dual to ``w`` in ``F*``: ``-DH(w)``; inverse of :func:`momentum`."""
    return -hamiltonian_gradient(w, pq, g)


def legendre_check(v, pq: PExponent, g, warn_below: float = 0.05) -> float:
    """Euclidean residual of ``velocity(momentum(v)) - v``.

    ``H`` is finite on ``F*`` while ``DL`` points into ``-F*``, so the
    momentum is taken as ``-DL(v)`` and the round trip is ``-DH(-DL(v))``;
    this is ``DH = (DL)^{-1}`` for the reflected Hamiltonian ``w -> H(-w)``.

    Emits :class:`ConditioningWarning` when ``|v|_F / |v|_E < warn_below``.
    """
    g = _as_metric(g)
    v = _require_timelike(v, g)
    w = momentum(v, pq, g)
    if not math.isfinite(hamiltonian(w, pq, g).value):
        raise DomainError("momentum left the dual cone")
    back = velocity(w, pq, g)
    ratio = math.sqrt(v @ g.entries @ v) / math.sqrt(v @ v)
    if ratio < warn_below:
        warnings.warn(
            f"vector is close to the light cone (|v|_F/|v|_E = {ratio:.3g})",
            ConditioningWarning,
            stacklevel=2,
        )
    return float(np.linalg.norm(back - v))


def hamiltonian_hessian(w, pq: PExponent, g) -> tuple[np.ndarray, np.ndarray]:
    """Second derivative ``H^{ij}`` of the Hamiltonian and its eigenvalues.

    ``H^{ij} = |w|^{p-2} [(2-p) w^i w^j / |w|^2 - g^{ij}]`` with indices
    raised by ``g``.  Positive definite on the interior of ``F*`` for p < 1.
    """
    g = _as_metric(g)
    w = _require_timelike(w, g, covector=True)
    hij = hamiltonian_hessian_batch(w, g.inverse, pq.p)
    return hij, np.linalg.eigvalsh(hij)


# ---------------------------------------------------------------------------
# batched kernels used by the grid operators; no cone checks


def quad(g: np.ndarray, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """``g(a, b)`` over leading batch axes."""
    if b is None:
        b = a
    return np.einsum("...i,...ij,...j->...", a, g, b)


def hamiltonian_batch(w: np.ndarray, ginv: np.ndarray, p: float) -> np.ndarray:
    return -(quad(ginv, w) ** (0.5 * p)) / p


def hamiltonian_gradient_batch(w: np.ndarray, ginv: np.ndarray, p: float) -> np.ndarray:
    norm2 = quad(ginv, w)
    return -(norm2 ** (0.5 * p - 1.0))[..., None] * np.einsum("...ij,...j->...i", ginv, w)


def hamiltonian_hessian_batch(w: np.ndarray, ginv: np.ndarray, p: float) -> np.ndarray:
    up = np.einsum("...ij,...j->...i", ginv, w)
    norm2 = np.einsum("...i,...i->...", up, w)
    outer = up[..., :, None] * up[..., None, :]
    return (norm2 ** (0.5 * p - 1.0))[..., None, None] * (
        (2.0 - p) * outer / norm2[..., None, None] - ginv
    )

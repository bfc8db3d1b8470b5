"""Library of analytic model spacetimes.

All metrics have signature ``(+, -, ..., -)`` with ``d/dt`` future timelike
and are vectorised over leading axes.  Where closed forms are cheap the
chart also carries analytic Christoffel symbols, used only as test oracles.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction

import numpy as np

from .errors import UsageError
from .spacetime import MetricChart


def _diag(values) -> np.ndarray:
    values = np.stack(np.broadcast_arrays(*values), axis=-1)
    return values[..., :, None] * np.eye(values.shape[-1])


def _zero_connection(n):
    def analytic(x):
        return np.zeros((n, n, n)), np.zeros((n, n, n, n))

    return analytic


def minkowski(n: int = 2, box=None) -> MetricChart:
    if n < 2:
        raise UsageError("dimension must be >= 2")
    box = [[-2.0, 2.0]] * n if box is None else box
    eta = np.diag([1.0] + [-1.0] * (n - 1))

    def metric(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eta, x.shape[:-1] + (n, n)).copy()

    return MetricChart("minkowski", n, box, metric, analytic=_zero_connection(n), params={"n": n})


def product(kind: str = "circle", radius: float = 1.0, n: int | None = None, box=None) -> MetricChart:
    """``R x Sigma`` with ``g = dt^2 - h``.

    ``kind``: ``"circle"`` (coordinates t, theta; h = radius^2 dtheta^2),
    ``"torus"`` (flat, periodic, any n >= 2) or ``"sphere"`` (t, theta, phi;
    round 2-sphere of the given radius).
    """
    rho = float(radius)
    if rho <= 0:
        raise UsageError("radius must be positive")
    if kind == "circle":
        n = 2
        box = [[-2.0, 2.0], [0.0, 2 * math.pi]] if box is None else box

        def metric(x):
            x = np.asarray(x, dtype=float)
            one = np.ones(x.shape[:-1])
            return _diag([one, -rho * rho * one])

        return MetricChart(
            "product-circle", 2, box, metric, periodic=(False, True),
            analytic=_zero_connection(2), params={"kind": kind, "radius": rho},
        )
    if kind == "torus":
        n = 2 if n is None else int(n)
        box = [[-2.0, 2.0]] + [[0.0, rho]] * (n - 1) if box is None else box
        eta = np.diag([1.0] + [-1.0] * (n - 1))

        def metric(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(eta, x.shape[:-1] + (n, n)).copy()

        return MetricChart(
            "product-torus", n, box, metric, periodic=(False,) + (True,) * (n - 1),
            analytic=_zero_connection(n), params={"kind": kind, "radius": rho, "n": n},
        )
    if kind == "sphere":
        box = [[-2.0, 2.0], [0.3, math.pi - 0.3], [0.0, 2 * math.pi]] if box is None else box

        def metric(x):
            x = np.asarray(x, dtype=float)
            one = np.ones(x.shape[:-1])
            s = np.sin(x[..., 1])
            return _diag([one, -rho * rho * one, -rho * rho * s * s])

        def analytic(x):
            th = x[1]
            s, c = math.sin(th), math.cos(th)
            G = np.zeros((3, 3, 3))
            dG = np.zeros((3, 3, 3, 3))
            G[1, 2, 2] = -s * c
            G[2, 1, 2] = G[2, 2, 1] = c / s
            dG[1, 1, 2, 2] = -(c * c - s * s)
            dG[1, 2, 1, 2] = dG[1, 2, 2, 1] = -1.0 / (s * s)
            return G, dG

        return MetricChart(
            "product-sphere", 3, box, metric, periodic=(False, False, True),
            analytic=analytic, params={"kind": kind, "radius": rho},
        )
    raise UsageError(f"unknown product kind {kind!r}")


# scale factors: (a, a', a'') as functions of t
def scale_factor(form):
    """Parse a scale-factor name: ``"t^(2/3)"``, ``"t^k"``, ``"exp(t)"``/``"e^t"``, ``"const"``."""
    if callable(form):
        return form
    text = str(form).replace(" ", "").lower()
    if text in ("matter", "t^(2/3)", "t**(2/3)"):
        k = 2.0 / 3.0
    elif text in ("exp", "exp(t)", "e^t", "desitter", "de-sitter"):
        def exp_a(t):
            e = np.exp(t)
            return e, e, e
        exp_a.label = "exp(t)"
        return exp_a
    elif text in ("const", "constant", "1"):
        def const_a(t):
            t = np.asarray(t, dtype=float)
            return np.ones_like(t), np.zeros_like(t), np.zeros_like(t)
        const_a.label = "const"
        return const_a
    else:
        m = re.fullmatch(r"t(?:\^|\*\*)\(?([-+0-9./]+)\)?", text)
        if not m:
            raise UsageError(f"unrecognised scale factor {form!r}")
        try:
            k = float(Fraction(m.group(1)))
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"unrecognised exponent in {form!r}") from exc

    def power_a(t):
        t = np.asarray(t, dtype=float)
        return t**k, k * t ** (k - 1), k * (k - 1) * t ** (k - 2)

    power_a.label = f"t^{k:g}"
    return power_a


def flrw(n: int = 4, a="t^(2/3)", box=None) -> MetricChart:
    """``g = dt^2 - a(t)^2 (dx_1^2 + ... + dx_{n-1}^2)``."""
    afun = scale_factor(a)
    if box is None:
        box = [[0.02, 3.0]] + [[-2.0, 2.0]] * (n - 1)

    def metric(x):
        x = np.asarray(x, dtype=float)
        av = afun(x[..., 0])[0]
        one = np.ones(x.shape[:-1])
        return _diag([one] + [-(av * av)] * (n - 1))

    def analytic(x):
        av, ad, add = (float(v) for v in afun(x[0]))
        G = np.zeros((n, n, n))
        dG = np.zeros((n, n, n, n))
        for i in range(1, n):
            G[0, i, i] = av * ad
            G[i, 0, i] = G[i, i, 0] = ad / av
            dG[0, 0, i, i] = ad * ad + av * add
            dG[0, i, 0, i] = dG[0, i, i, 0] = add / av - (ad / av) ** 2
        return G, dG

    label = getattr(afun, "label", "custom")
    return MetricChart("flrw", n, box, metric, analytic=analytic, params={"n": n, "a": label})


def bump(epsilon: float = 0.3, n: int = 2, width: float = 0.5, box=None) -> MetricChart:
    """Static ``g = dt^2 - (1 + epsilon * exp(-|x|^2 / (2 width^2))) |dx|^2``.

    For n = 2 the spatial factor is a reparametrised line, so the model is
    still a flat product; for n = 3 the slice carries Gaussian curvature.
    """
    eps = float(epsilon)
    if eps <= -1:
        raise UsageError("epsilon must exceed -1")
    box = [[-2.0, 2.0]] * n if box is None else box

    def metric(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x[..., 1:] ** 2, axis=-1)
        f = 1.0 + eps * np.exp(-r2 / (2 * width * width))
        one = np.ones(x.shape[:-1])
        return _diag([one] + [-f] * (n - 1))

    return MetricChart("bump", n, box, metric, params={"epsilon": eps, "n": n, "width": width})


MODELS = {
    "minkowski": minkowski,
    "product": product,
    "flrw": flrw,
    "bump": bump,
}


def make_model(name: str, **params) -> MetricChart:
    """Build a model by registry name; ``product-circle`` etc. are accepted as aliases."""
    key = name.lower()
    if key.startswith("product-"):
        params.setdefault("kind", key.split("-", 1)[1])
        key = "product"
    if key not in MODELS:
        raise UsageError(f"unknown model {name!r}; known: {sorted(MODELS)}")
    try:
        return MODELS[key](**params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for model {name!r}: {exc}") from exc

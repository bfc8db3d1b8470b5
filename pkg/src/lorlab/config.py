"""Experiment configuration: a line-based ``key = value`` format.

Blank lines and ``#`` comments are ignored.  Dotted keys group settings
(``model.name``, ``grid.shape``).  Lists are comma separated; boxes are
``lo,hi`` intervals separated by ``;``.  Every key must be known and every
error names its line.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cone import PExponent
from .errors import UsageError
from .models import MODELS

EXPERIMENTS = ("timesep", "busemann", "compare", "bochner", "split", "energycond", "hawking", "seccheck")


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _floats(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list:
    return [_int(t) for t in text.split(",") if t.strip()]


def _box(text: str) -> list:
    out = []
    for part in text.split(";"):
        lo, hi = _floats(part)
        out.append([lo, hi])
    return out


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _words(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _model_value(text: str):
    for conv in (_int, _float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


FIELDS = {
    "experiment": str,
    "seed": _int,
    "p": _float,
    "q": _floats,
    "r": _floats,
    "model.name": str,
    "model.box": _box,
    "grid.shape": _ints,
    "grid.box": _box,
    "grid.radius": _int,
    "eval.shape": _ints,
    "eval.box": _box,
    "line.origin": _floats,
    "points.x": _floats,
    "points.y": _floats,
    "expect.ell": _float,
    "expect.negative": _bool,
    "field.kind": str,
    "slice.t0": _float,
    "slice.point": _floats,
    "energy.conditions": _words,
    "energy.samples": _int,
    "energy.vectors": _int,
    "sec.point": _floats,
    "sec.u": _floats,
    "sec.v": _floats,
    "rti.samples": _int,
    "steepness.samples": _int,
    "refine.segments": _int,
    "output.fields": _bool,
}

TOLERANCES = {
    "tol.rel": 0.01,
    "tol.qdev": 1e-3,
    "tol.rti": 1e-6,
    "tol.order": 1e-6,
    "tol.eikonal": 0.05,
    "tol.compare": 5e-3,
    "tol.near_equality": 0.02,
    "tol.bochner": 0.05,
    "tol.energy": 1e-6,
    "tol.curvature": 0.01,
    "tol.sec": 0.05,
    "tol.plus_minus": 0.02,
    "tol.limit": 0.02,
    "tol.clamp": 1e-3,
}


@dataclass
class ExperimentConfig:
    experiment: str
    model_name: str
    model_params: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", 0))

    @property
    def p(self) -> Optional[float]:
        return self.values.get("p")

    def echo(self) -> dict:
        """Plain, key-sorted view of every setting, for reports and replay."""
        out = {"experiment": self.experiment, "model": {"name": self.model_name, **self.model_params}}
        out.update({k: v for k, v in sorted(self.values.items())})
        out["tolerances"] = dict(sorted(self.tolerances.items()))
        return out


def _model_keys(name: str) -> set:
    key = name.lower()
    if key.startswith("product-"):
        key = "product"
    fn = MODELS.get(key)
    if fn is None:
        raise UsageError(f"unknown model {name!r}; known: {sorted(MODELS)}")
    return set(inspect.signature(fn).parameters)


def parse_config(text: str, experiment: Optional[str] = None) -> ExperimentConfig:
    """Parse and validate configuration text.

    ``experiment`` (from the command line) fills in or must agree with the
    ``experiment`` key.  Raises :class:`UsageError` mentioning the line
    number for unknown keys, unparsable values and constraint violations.
    """
    values: dict = {}
    model_raw: dict = {}
    tolerances = dict(TOLERANCES)
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise UsageError(f"line {lineno}: empty key or value")
        if key in lines:
            raise UsageError(f"line {lineno}: duplicate key {key!r} (first set on line {lines[key]})")
        lines[key] = lineno
        try:
            if key in FIELDS:
                values[key] = FIELDS[key](value)
            elif key in TOLERANCES:
                tolerances[key] = float(value)
                if tolerances[key] < 0:
                    raise ValueError("tolerances must be non-negative")
            elif key.startswith("model."):
                model_raw[key[len("model."):]] = (_model_value(value), lineno)
            else:
                raise UsageError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"line {lineno}: bad value for {key!r}: {exc}") from exc

    name = values.pop("experiment", None)
    if experiment is not None:
        if name is not None and name != experiment:
            raise UsageError(f"line {lines['experiment']}: config is for {name!r}, not {experiment!r}")
        name = experiment
    if name is None:
        raise UsageError("no experiment given")
    if name not in EXPERIMENTS:
        where = f"line {lines['experiment']}: " if "experiment" in lines else ""
        raise UsageError(f"{where}unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")

    if "p" in values:
        try:
            PExponent(values["p"])
        except ValueError as exc:
            raise UsageError(f"line {lines['p']}: p must satisfy p < 1 and p != 0, got {values['p']}") from exc
    for q in values.get("q", []):
        if not (q < 1 and q != 0):
            raise UsageError(f"line {lines['q']}: q must satisfy q < 1 and q != 0, got {q}")

    model_name = values.pop("model.name", None)
    if model_name is None:
        raise UsageError("missing model.name")
    known = _model_keys(model_name)
    params = {}
    for key, (value, lineno) in model_raw.items():
        if key not in known:
            raise UsageError(f"line {lineno}: model {model_name!r} has no parameter {key!r}")
        params[key] = value
    if "model.box" in values:
        params["box"] = values.pop("model.box")
    if "a" in params:
        params["a"] = str(params["a"])
    return ExperimentConfig(name, model_name, params, values, tolerances)


def load_config(path, experiment: Optional[str] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, experiment)

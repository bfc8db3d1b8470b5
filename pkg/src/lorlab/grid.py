"""Rectangular lattices over a chart box and scalar fields living on them."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UsageError
from .spacetime import MetricChart

CSV_HEADER = "# lorlab-field v1"


class Grid:
    """Lattice of ``shape`` nodes over ``box`` (defaults to the chart box).

    A periodic chart axis whose box spans the full period wraps around:
    spacing is ``extent / shape`` and the last node is not duplicated.
    All other axes include both endpoints: spacing is ``extent / (shape - 1)``.
    """

    def __init__(self, chart: MetricChart, shape, box=None):
        self.chart = chart
        self.shape = tuple(int(s) for s in np.atleast_1d(shape))
        if len(self.shape) != chart.n or min(self.shape) < 2:
            raise UsageError(f"grid shape must have {chart.n} entries >= 2, got {self.shape}")
        self.box = np.array(chart.box if box is None else box, dtype=float)
        if self.box.shape != (chart.n, 2) or np.any(self.box[:, 1] <= self.box[:, 0]):
            raise UsageError(f"bad grid box {self.box.tolist()}")
        wrap = []
        for k in range(chart.n):
            full = np.allclose(self.box[k], chart.box[k])
            if chart.periodic[k]:
                wrap.append(bool(full))
                continue
            wrap.append(False)
            lo, hi = chart.box[k]
            tol = 1e-12 * (hi - lo)
            if self.box[k, 0] < lo - tol or self.box[k, 1] > hi + tol:
                raise UsageError(f"grid box axis {k} {self.box[k].tolist()} leaves the chart box")
        self.wrap = tuple(wrap)
        self.spacing = np.array(
            [
                (self.box[k, 1] - self.box[k, 0]) / (self.shape[k] if self.wrap[k] else self.shape[k] - 1)
                for k in range(chart.n)
            ]
        )

    @property
    def n(self) -> int:
        return self.chart.n

    def axis(self, k: int) -> np.ndarray:
        return self.box[k, 0] + self.spacing[k] * np.arange(self.shape[k])

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``(*shape, n)``."""
        axes = np.meshgrid(*[self.axis(k) for k in range(self.n)], indexing="ij")
        return np.stack(axes, axis=-1)

    def point(self, idx) -> np.ndarray:
        idx = self.check_node(idx)
        return self.box[:, 0] + self.spacing * np.asarray(idx, dtype=float)

    def check_node(self, idx) -> tuple:
        idx = tuple(int(i) for i in idx)
        if len(idx) != self.n or any(not 0 <= i < s for i, s in zip(idx, self.shape)):
            raise UsageError(f"node {idx} is outside the grid of shape {self.shape}")
        return idx

    def nearest_node(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        rel = (x - self.box[:, 0]) / self.spacing
        idx = np.rint(rel).astype(int)
        for k in range(self.n):
            if self.wrap[k]:
                idx[k] %= self.shape[k]
        return self.check_node(idx)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        for k in range(self.n):
            if self.wrap[k]:
                continue
            lo, hi = self.box[k]
            if x[k] < lo - tol * self.spacing[k] or x[k] > hi + tol * self.spacing[k]:
                return False
        return True

    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def __repr__(self):
        return f"Grid({self.chart.name}, shape={self.shape}, box={self.box.tolist()})"


@dataclass
class ScalarField:
    """Node values on a grid; ``values`` is NaN wherever ``mask`` is False."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool) & np.isfinite(self.values)
        if self.values.shape != self.grid.shape or self.mask.shape != self.grid.shape:
            raise UsageError("field arrays must match the grid shape")
        self.values = np.where(self.mask, self.values, np.nan)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        vals = np.asarray(fn(grid.points()), dtype=float)
        return cls(grid, vals, np.isfinite(vals))

    def to_csv(self, path) -> None:
        write_field_csv(self, path)


def shift_values(values: np.ndarray, off, wrap) -> np.ndarray:
    """``out[i] = values[i + off]``; NaN where that leaves a non-periodic axis."""
    out = values
    for ax, (d, w) in enumerate(zip(off, wrap)):
        if d == 0:
            continue
        out = np.roll(out, -d, axis=ax)
        if not w:
            sl = [slice(None)] * out.ndim
            sl[ax] = slice(-d, None) if d > 0 else slice(0, -d)
            out = out.copy()
            out[tuple(sl)] = np.nan
    return out


def central_gradient(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Central differences along every axis, shape ``(*shape, n)``; NaN without a full stencil."""
    out = np.empty(values.shape + (grid.n,))
    for k in range(grid.n):
        e = np.zeros(grid.n, dtype=int)
        e[k] = 1
        out[..., k] = (shift_values(values, e, grid.wrap) - shift_values(values, -e, grid.wrap)) / (
            2 * grid.spacing[k]
        )
    return out


def write_field_csv(field: ScalarField, path) -> None:
    """One row per node: coordinates, value, mask; 17 significant digits."""
    pts = field.grid.points().reshape(-1, field.grid.n)
    vals = field.values.reshape(-1)
    mask = field.mask.reshape(-1)
    names = ",".join(f"x{k}" for k in range(field.grid.n))
    lines = [CSV_HEADER, f"{names},value,mask"]
    for p, v, m in zip(pts, vals, mask):
        coords = ",".join(f"{c:.17g}" for c in p)
        lines.append(f"{coords},{(v if m else 0.0):.17g},{int(m)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path, grid: Grid) -> ScalarField:
    """Inverse of :func:`write_field_csv` for a known grid."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != CSV_HEADER:
        raise UsageError(f"{path}: missing '{CSV_HEADER}' header")
    rows = np.array([[float(c) for c in line.split(",")] for line in text[2:] if line.strip()])
    if rows.shape != (int(np.prod(grid.shape)), grid.n + 2):
        raise UsageError(f"{path}: expected {np.prod(grid.shape)} rows of {grid.n + 2} columns")
    if not np.allclose(rows[:, : grid.n], grid.points().reshape(-1, grid.n), rtol=0, atol=1e-12):
        raise UsageError(f"{path}: node coordinates do not match the grid")
    mask = rows[:, -1].astype(bool).reshape(grid.shape)
    return ScalarField(grid, rows[:, -2].reshape(grid.shape), mask)

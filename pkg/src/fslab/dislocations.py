"""Translation-dilation group acting on fields by ``lam^{(2s-N)/2} u((x - y)/lam)``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import ValidationError
from .field import Field, FracParams, Grid


@dataclass(frozen=True)
class Dislocation:
    y: tuple[float, ...]
    lam: float

    def __post_init__(self):
        y = tuple(float(v) for v in np.atleast_1d(self.y))
        object.__setattr__(self, "y", y)
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValidationError(f"dilation must be positive, got {self.lam}")

    @classmethod
    def identity(cls, dim: int) -> Dislocation:
        return cls((0.0,) * dim, 1.0)

    @property
    def dim(self) -> int:
        return len(self.y)

    def check_range(self, grid: Grid) -> None:
        lo, hi = grid.spacing / 4, 4 * grid.extent
        if not lo <= self.lam <= hi:
            raise ValidationError(
                f"dilation {self.lam:.4g} outside representable range [{lo:.4g}, {hi:.4g}]"
            )
        if self.dim != grid.dim:
            raise ValidationError(f"dislocation dim {self.dim} != grid dim {grid.dim}")

    def reduced(self, grid: Grid) -> Dislocation:
        return Dislocation(tuple(grid.wrap(np.array(self.y))), self.lam)

    def to_json(self) -> dict:
        return {"y": list(self.y), "lambda": self.lam}

    @classmethod
    def from_json(cls, d: dict) -> Dislocation:
        return cls(tuple(d["y"]), float(d["lambda"]))


def compose(a: Dislocation, b: Dislocation, grid: Grid | None = None) -> Dislocation:
    """Group law ``(y_a, l_a) o (y_b, l_b) = (y_a + l_a y_b, l_a l_b)``; ``D_a D_b = D_{a o b}``."""
    if a.dim != b.dim:
        raise ValidationError("dislocations of different dimension")
    out = Dislocation(tuple(ya + a.lam * yb for ya, yb in zip(a.y, b.y)), a.lam * b.lam)
    if grid is not None:
        out.check_range(grid)
    return out


def inverse(d: Dislocation, grid: Grid | None = None) -> Dislocation:
    out = Dislocation(tuple(-v / d.lam for v in d.y), 1.0 / d.lam)
    if grid is not None:
        out.check_range(grid)
    return out


def separation(a: Dislocation, b: Dislocation, extent: float | None = None) -> float:
    """``|log(l_a/l_b)| + |y_a - y_b| / l_a``; translations measured on the torus when ``extent`` is given.

    Not symmetric: the translation gap is normalized by the first argument's scale.
    """
    dy = np.array(a.y) - np.array(b.y)
    if extent is not None:
        dy = (dy + extent / 2) % extent - extent / 2
    return abs(math.log(a.lam / b.lam)) + math.hypot(*dy) / a.lam


# ---------------------------------------------------------------------------
# closed-form generators


class ClosedForm:
    """A function on ``R^N`` given by formula, evaluated exactly wherever it is sampled."""

    center = None  # point the formula is concentrated around; origin when unset

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], label: str = "closed-form"):
        self._fn = fn
        self.label = label

    def at(self, x: np.ndarray, grid: Grid, wrap: bool = True) -> np.ndarray:
        return np.asarray(self._fn(x), dtype=float)

    def sample(self, grid: Grid) -> Field:
        return Field(grid, self.at(grid.coords, grid))

    def dislocate(self, d: Dislocation, p: FracParams) -> ClosedForm:
        return _Dislocated(self, d, p)

    def __add__(self, other: ClosedForm) -> ClosedForm:
        return _Sum([self, other])

    def scaled(self, a: float) -> ClosedForm:
        return _Scaled(self, a)


def _center(f: ClosedForm, dim: int) -> tuple[float, ...]:
    c = getattr(f, "center", None)
    return tuple(c) if c is not None else (0.0,) * dim


class _Dislocated(ClosedForm):
    def __init__(self, base: ClosedForm, d: Dislocation, p: FracParams):
        self.base, self.d, self.p = base, d, p
        self.label = f"D{d.to_json()}[{base.label}]"

    @property
    def center(self):
        return tuple(y + self.d.lam * c for y, c in zip(self.d.y, _center(self.base, self.d.dim)))

    def at(self, x, grid, wrap=True):
        # minimal image about the image of the base center, then evaluate on R^N
        c = np.array(self.center)
        z = x - c
        if wrap:
            z = grid.wrap(z)
        w = self.d.lam ** (-self.p.scaling_exponent)
        base_c = np.array(_center(self.base, self.d.dim))
        return w * self.base.at(base_c + z / self.d.lam, grid, wrap=False)


class _Sum(ClosedForm):
    def __init__(self, parts):
        self.parts = list(parts)
        self.label = " + ".join(q.label for q in self.parts)

    def at(self, x, grid, wrap=True):
        return sum(q.at(x, grid, wrap) for q in self.parts)


class _Scaled(ClosedForm):
    def __init__(self, base, a):
        self.base, self.a = base, float(a)
        self.label = f"{self.a}*{base.label}"

    def at(self, x, grid, wrap=True):
        return self.a * self.base.at(x, grid, wrap)


# ---------------------------------------------------------------------------
# action on fields


def _resample(u: Field, d: Dislocation, p: FracParams) -> Field:
    g = u.grid
    if d.lam >= 1:
        # expansion: the target box reads one source window around -y/lam, periodically
        z = g.wrap((g.coords - np.array(d.y)) / d.lam)
        inside = True
    else:
        # contraction: the source box lands in a region of size lam*L around y; zero elsewhere
        z = g.wrap(g.coords - np.array(d.y)) / d.lam
        inside = np.all(np.abs(z) < g.extent / 2, axis=-1)
    idx = (z + g.extent / 2) / g.spacing
    coords = np.moveaxis(idx, -1, 0).reshape(g.dim, -1)
    vals = map_coordinates(u.values, coords, order=1, mode="grid-wrap").reshape(g.shape)
    vals = np.where(inside, vals, 0.0)
    return Field(g, d.lam ** (-p.scaling_exponent) * vals)


def apply(d: Dislocation, u: Field | ClosedForm, p: FracParams, grid: Grid | None = None) -> Field:
    """Samples of ``D_{y,lam} u``.

    Closed-form inputs are re-evaluated analytically on ``grid``; sampled
    fields are resampled by multilinear interpolation. An expansion
    (``lam >= 1``) reads a single periodic window of the source; a
    contraction places the source box around ``y`` and is zero elsewhere.
    """
    if isinstance(u, ClosedForm):
        if grid is None:
            raise ValidationError("closed-form input needs a target grid")
        d.check_range(grid)
        return u.dislocate(d, p).sample(grid)
    p.check_grid(u.grid)
    d.check_range(u.grid)
    if d.lam == 1.0 and not any(d.y):
        return u
    return _resample(u, d, p)

"""Sharp Sobolev constant, its extremal bubbles and Rayleigh quotients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .dislocations import ClosedForm, Dislocation
from .errors import TailCheckError, ValidationError
from .field import Field, FracParams, Grid, boundary_ratio
from .norms import hs_norm, lp_norm

# Algebraic bubble tails cannot meet the 1e-6 policy on any desk-scale box.
BUBBLE_TAIL_TOL = 0.05


@dataclass(frozen=True)
class SharpConstant:
    value: float
    n: int
    s: float

    @property
    def two_star(self) -> float:
        return 2 * self.n / (self.n - 2 * self.s)


def sharp_constant(n: int, s: float) -> SharpConstant:
    """Optimal ``S*`` in ``||u||_{2*}^{2*} <= S* ||u||_{H^s}^{2*}``, evaluated through log-Gamma."""
    FracParams(n, s)  # validates 0 < s < N/2
    log_inner = (
        -2 * s * math.log(2)
        - s * math.log(math.pi)
        + math.lgamma((n - 2 * s) / 2)
        - math.lgamma((n + 2 * s) / 2)
        + (2 * s / n) * (math.lgamma(n) - math.lgamma(n / 2))
    )
    two_star = 2 * n / (n - 2 * s)
    return SharpConstant(math.exp(log_inner * two_star / 2), n, s)


@dataclass(frozen=True)
class BubbleParams:
    c: float
    lam: float
    x0: tuple[float, ...]

    def __post_init__(self):
        if self.c == 0:
            raise ValidationError("bubble amplitude must be nonzero")
        if not self.lam > 0:
            raise ValidationError(f"bubble width must be positive, got {self.lam}")
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))

    @classmethod
    def normalized(cls, p: FracParams, lam: float, x0) -> BubbleParams:
        """Amplitude ``lam^{(N-2s)/2}``: every width carries the same H^s and L^{2*} norms."""
        return cls(lam ** p.scaling_exponent, lam, x0)

    def to_json(self) -> dict:
        return {"c": self.c, "lambda": self.lam, "x0": list(self.x0)}


class Bubble(ClosedForm):
    """``c / (lam^2 + |x - x0|^2)^{(N-2s)/2}``; distances are minimal-image on the sampled box."""

    def __init__(self, p: FracParams, bp: BubbleParams):
        if len(bp.x0) != p.dim:
            raise ValidationError("bubble center dimension mismatch")
        self.p, self.bp = p, bp
        self.label = f"bubble(lam={bp.lam:g})"

    @property
    def center(self):
        return self.bp.x0

    def at(self, x, grid, wrap=True):
        z = x - np.array(self.bp.x0)
        if wrap:
            z = grid.wrap(z)
        r2 = np.sum(z * z, axis=-1)
        return self.bp.c * (self.bp.lam**2 + r2) ** (-self.p.scaling_exponent)

    def dislocate(self, d: Dislocation, p: FracParams) -> Bubble:
        a = self.p.scaling_exponent
        x0 = tuple(y + d.lam * x for y, x in zip(d.y, self.bp.x0))
        return Bubble(self.p, BubbleParams(self.bp.c * d.lam**a, d.lam * self.bp.lam, x0))


def required_extent(p: FracParams, bp: BubbleParams, tol: float) -> float:
    """Smallest box side at which the bubble's nearest face point falls to ``tol`` of its peak."""
    # (lam^2 / (lam^2 + D^2))^a = tol at face distance D
    a = p.scaling_exponent
    dist = bp.lam * math.sqrt(tol ** (-1 / a) - 1)
    return 2 * (dist + max(abs(v) for v in bp.x0))


def bubble(grid: Grid, p: FracParams, bp: BubbleParams, tail_tol: float = BUBBLE_TAIL_TOL) -> Field:
    p.check_grid(grid)
    u = Bubble(p, bp).sample(grid)
    r = boundary_ratio(u)
    if r > tail_tol:
        need = required_extent(p, bp, tail_tol)
        raise TailCheckError(
            f"bubble boundary/peak ratio {r:.3e} exceeds {tail_tol:.1e}; need extent L >= {need:.4g}",
            ratio=r,
            required_extent=need,
        )
    return u


def rayleigh_quotient(u: Field, p: FracParams) -> float:
    """``||u||_{2*}^{2*} / ||u||_{H^s}^{2*}``, directly comparable with ``S*``."""
    hs = hs_norm(u, p)
    if hs == 0:
        raise ValidationError("Rayleigh quotient of a field with zero H^s norm")
    ts = p.two_star
    return (lp_norm(u, ts) / hs) ** ts


# ---------------------------------------------------------------------------
# bubble fitting and the maximizing-sequence diagnostic


@dataclass(frozen=True)
class BubbleFit:
    params: BubbleParams
    l2star_distance: float
    hs_distance: float


def fit_bubble(u: Field, p: FracParams, center, radius: float) -> BubbleFit:
    """Best bubble in relative ``L^{2*}`` distance, seeded at ``(center, radius)``.

    Coarse search over the width on a log grid, then Nelder-Mead over
    ``(log lam, x0)`` with the amplitude solved by least squares at each step.
    """
    g = u.grid
    ts = p.two_star
    norm = lp_norm(u, ts)
    if norm == 0:
        raise ValidationError("cannot fit a bubble to a zero field")
    vals = u.values

    def shape(lam, x0):
        return Bubble(p, BubbleParams(1.0, lam, x0)).at(g.coords, g)

    def dist(theta):
        lam = math.exp(theta[0])
        b = shape(lam, theta[1:])
        c = float(np.sum(b * vals) / np.sum(b * b))
        return lp_norm(Field(g, vals - c * b), ts) / norm, c

    x0 = np.asarray(center, dtype=float)
    lo = math.log(g.spacing / 2)
    hi = math.log(g.extent / 4)
    grid_lams = np.linspace(max(lo, math.log(radius) - 3), min(hi, math.log(radius) + 2), 11)
    start = min(grid_lams, key=lambda t: dist(np.r_[t, x0])[0])
    res = minimize(
        lambda th: dist(th)[0],
        np.r_[start, x0],
        method="Nelder-Mead",
        options={"xatol": 1e-4, "fatol": 1e-7, "maxiter": 400 * (g.dim + 1)},
    )
    d, c = dist(res.x)
    params = BubbleParams(c, math.exp(res.x[0]), tuple(res.x[1:]))
    b = Field(g, c * shape(params.lam, params.x0))
    hs_u = hs_norm(u, p)
    hs_d = hs_norm(u - b, p) / hs_u if hs_u > 0 else float("nan")
    return BubbleFit(params, float(d), float(hs_d))


@dataclass(frozen=True)
class DiagnosticRow:
    index: int
    center: tuple[float, ...]
    scale: float
    quotient: float
    fit: BubbleFit

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "center": list(self.center),
            "scale": self.scale,
            "quotient": self.quotient,
            "bubble": self.fit.params.to_json(),
            "l2star_distance": self.fit.l2star_distance,
            "hs_distance": self.fit.hs_distance,
        }


def optimizer_diagnostic(seq: list[Field], p: FracParams) -> list[DiagnosticRow]:
    """Locate, pull back and compare each member of a maximizing sequence with a bubble.

    The fit is done in the original frame: relative distances to a bubble are
    invariant under the group action, and skipping the pullback avoids
    interpolation error on sampled data.
    """
    from .profiles import concentration_argmax

    rows = []
    for i, u in enumerate(seq):
        if u.is_zero() or hs_norm(u, p) == 0:
            raise ValidationError(f"sequence member {i} is degenerate (zero field)")
        x, R, _ = concentration_argmax(u, p)
        fit = fit_bubble(u, p, x, R)
        rows.append(DiagnosticRow(i, tuple(x), R, rayleigh_quotient(u, p), fit))
    return rows

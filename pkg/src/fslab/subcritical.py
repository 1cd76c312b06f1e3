"""Subcritical maximization of ``int_Omega |u|^{2*-eps}`` on the unit ball of ``H^s(Omega)``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConvergenceError, NumericalError, ValidationError
from .extremals import BubbleFit, fit_bubble, sharp_constant
from .field import Field, FracParams, Grid, RestrictedOperator, build_restricted_operator
from .norms import ball_sums
from .profiles import DefectReport, concentration_argmax, defect_measures


@dataclass(frozen=True)
class DomainSpec:
    """A disk (ball) or box in physical units; ``size`` is the radius or the half-widths."""

    shape: str
    center: tuple[float, ...]
    size: tuple[float, ...]

    def __post_init__(self):
        if self.shape not in ("disk", "box"):
            raise ValidationError(f"domain shape must be 'disk' or 'box', got {self.shape!r}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in np.atleast_1d(self.size)))
        if self.shape == "disk" and len(self.size) != 1:
            raise ValidationError("disk domain takes a single radius")
        if self.shape == "box" and len(self.size) != len(self.center):
            raise ValidationError("box domain needs one half-width per axis")
        if min(self.size) <= 0:
            raise ValidationError("domain size must be positive")

    @classmethod
    def parse(cls, text: str) -> DomainSpec:
        """``disk:cx,cy,r`` or ``box:cx,cy,hx,hy`` (any dimension)."""
        try:
            shape, rest = text.split(":", 1)
            vals = [float(v) for v in rest.split(",")]
        except ValueError:
            raise ValidationError(f"cannot parse domain {text!r}") from None
        shape = shape.strip()
        if shape == "disk":
            return cls("disk", tuple(vals[:-1]), (vals[-1],))
        if shape == "box" and len(vals) % 2 == 0:
            n = len(vals) // 2
            return cls("box", tuple(vals[:n]), tuple(vals[n:]))
        raise ValidationError(f"cannot parse domain {text!r}")

    def to_text(self) -> str:
        vals = list(self.center) + list(self.size)
        return f"{self.shape}:" + ",".join(format(v, ".17g") for v in vals)

    def mask(self, grid: Grid) -> np.ndarray:
        if len(self.center) != grid.dim:
            raise ValidationError(f"domain dimension {len(self.center)} != grid dimension {grid.dim}")
        reach = np.array(self.size if self.shape == "box" else self.size * grid.dim)
        limit = grid.extent / 2 - grid.extent / 8
        if np.any(np.abs(np.array(self.center)) + reach > limit + 1e-12):
            raise ValidationError(
                f"domain must stay {grid.extent / 8:.4g} clear of the box faces (|center|+size <= {limit:.4g})"
            )
        z = grid.coords - np.array(self.center)
        if self.shape == "disk":
            m = np.sum(z * z, axis=-1) < self.size[0] ** 2
        else:
            m = np.all(np.abs(z) < np.array(self.size), axis=-1)
        if not m.any():
            raise ValidationError("domain mask holds no grid point")
        return m


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 5000
    tol: float = 1e-9
    window: int = 10
    starts: int = 4
    seed: int = 0
    first_step: float = 1e6

    def __post_init__(self):
        if self.max_iter < 1 or self.window < 1 or self.starts < 1:
            raise ValidationError("max_iter, window and starts must be positive")
        if not self.tol > 0:
            raise ValidationError("tolerance must be positive")


@dataclass(frozen=True)
class SubcriticalResult:
    epsilon: float
    S_eps: float
    maximizer: Field
    iterations: int
    lagrange_lambda: float
    ball_fraction: float
    peak: tuple[float, ...]
    el_residual: float
    history: list[float] = field(default_factory=list, repr=False)
    defects: DefectReport | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "S_eps": self.S_eps,
            "iterations": self.iterations,
            "lagrange_lambda": self.lagrange_lambda,
            "ball_fraction": self.ball_fraction,
            "peak": list(self.peak),
            "el_residual": self.el_residual,
        }
        if self.defects is not None:
            out["atoms"] = [a.to_json() for a in self.defects.atoms]
        return out


def _objective(v: np.ndarray, q: float, vol: float) -> float:
    return vol * float(np.sum(np.abs(v) ** q))


def holder_bound(p: FracParams, eps: float, omega_measure: float) -> float:
    """``S*^{(2*-eps)/2*} |Omega|^{eps/2*}``: Holder plus the critical inequality."""
    ts = p.two_star
    return sharp_constant(p.dim, p.s).value ** ((ts - eps) / ts) * omega_measure ** (eps / ts)


def _ascend(op: RestrictedOperator, chol, v0: np.ndarray, q: float, cfg: SolverConfig):
    """Projected ascent in the ``A`` metric from ``v0``; returns ``(v, F, iterations, history)``.

    The direction is the Riesz representative ``A^{-1} grad F``; a very long
    step lands on the nonlinear power iterate, which already increases the
    convex objective, and halving takes over if it ever does not.
    """
    vol = op.grid.cell_volume
    A = op.matrix
    v = v0 / math.sqrt(float(v0 @ A @ v0))
    f = _objective(v, q, vol)
    hist = [f]
    for it in range(1, cfg.max_iter + 1):
        grad = vol * q * np.abs(v) ** (q - 2) * v
        d = cho_solve(chol, grad)
        d /= math.sqrt(float(d @ A @ d))
        t = cfg.first_step
        while True:
            w = v + t * d
            w /= math.sqrt(float(w @ A @ w))
            fw = _objective(w, q, vol)
            if fw >= f or t < 1e-14:
                break
            t /= 2
        if fw < f:
            fw, w = f, v
        v, f = w, fw
        hist.append(f)
        if it >= cfg.window and abs(f - hist[-1 - cfg.window]) <= cfg.tol * abs(f):
            return v, f, it, hist
    raise ConvergenceError(
        f"subcritical ascent did not converge in {cfg.max_iter} iterations", best=(v, f, hist)
    )


def _starts(op: RestrictedOperator, cfg: SolverConfig) -> list[np.ndarray]:
    g = op.grid
    pts = g.coords[op.mask]
    c = pts.mean(axis=0)
    r = np.linalg.norm(pts - c, axis=1)
    width = max(r.max(), g.spacing)
    out = [np.cos(0.5 * math.pi * np.minimum(r / width, 1.0)) ** 2 + 1e-3]
    for k in range(cfg.starts - 1):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, k]))
        out.append(np.abs(rng.standard_normal(op.size)) + 0.1)
    return out


def best_ball_fraction(u: Field, radius: float, exponent: float) -> tuple[float, tuple[float, ...]]:
    """Largest share of ``int |u|^exponent`` inside a ball of ``radius``, and its center."""
    dens = np.abs(u.values) ** exponent
    total = float(dens.sum())
    if total == 0:
        return 0.0, (0.0,) * u.grid.dim
    sums, _ = ball_sums(dens, u.grid, radius)
    i = int(np.argmax(sums))
    return float(sums.flat[i] / total), tuple(float(v) for v in u.grid.coords.reshape(-1, u.grid.dim)[i])


def _finish(op, p, eps, v, f, iters, hist, chol_dummy=None) -> SubcriticalResult:
    g = op.grid
    q = p.two_star - eps
    lam_h = 1.0 / f
    Av = op.matrix @ v
    rhs = lam_h * g.cell_volume * np.abs(v) ** (q - 2) * v
    res = float(np.linalg.norm(Av - rhs) / np.linalg.norm(Av))
    if np.sum(v) < 0:
        v = -v
    u = op.extend(v)
    frac, _ = best_ball_fraction(u, g.extent / 8, p.two_star)
    ipk = int(np.argmax(np.abs(u.values)))
    peak = tuple(float(c) for c in g.coords.reshape(-1, g.dim)[ipk])
    return SubcriticalResult(eps, f, u, iters, lam_h, frac, peak, res, hist)


def _check_eps(p: FracParams, eps: float) -> None:
    if not 0 < eps < p.two_star - 2:
        raise ValidationError(f"epsilon must lie in (0, 2*-2) = (0, {p.two_star - 2:.6g}), got {eps}")


def solve_subcritical(
    op: RestrictedOperator,
    p: FracParams,
    eps: float,
    cfg: SolverConfig | None = None,
    start: np.ndarray | None = None,
) -> SubcriticalResult:
    """Maximize ``F_eps`` on ``{u'Au <= 1}``; multi-start unless ``start`` is given."""
    cfg = cfg or SolverConfig()
    _check_eps(p, eps)
    if op.params != p:
        raise ValidationError("operator was built for different fractional parameters")
    q = p.two_star - eps
    try:
        chol = cho_factor(op.matrix, lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError("restricted operator is not positive definite") from None
    starts = [start] if start is not None else _starts(op, cfg)
    best = None
    for v0 in starts:
        v, f, it, hist = _ascend(op, chol, np.asarray(v0, dtype=float), q, cfg)
        if best is None or f > best[1] * (1 + 1e-12):
            best = (v, f, it, hist)
    return _finish(op, p, eps, *best)


def default_eps_list(p: FracParams) -> list[float]:
    half = (p.two_star - 2) / 2
    return [0.8 * half, 0.4 * half, 0.2 * half, 0.1 * half]


def epsilon_sweep(
    domain: DomainSpec,
    grid: Grid,
    p: FracParams,
    eps_list=None,
    cfg: SolverConfig | None = None,
    cell_size: float | None = None,
    atom_threshold: float = 0.25,
) -> list[SubcriticalResult]:
    """Warm-started solves along a decreasing list of ``eps``.

    The first solve is multi-start; later ones start from the previous
    maximizer. A failing member raises :class:`ConvergenceError` carrying the
    results so far in ``best``.
    """
    eps_list = list(eps_list) if eps_list is not None else default_eps_list(p)
    if not eps_list:
        raise ValidationError("empty epsilon list")
    for e in eps_list:
        _check_eps(p, e)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError("epsilon list must be strictly decreasing")
    cfg = cfg or SolverConfig()
    delta = cell_size if cell_size is not None else 4 * grid.spacing
    op = build_restricted_operator(grid, domain.mask(grid), p)
    out: list[SubcriticalResult] = []
    start = None
    for e in eps_list:
        try:
            res = solve_subcritical(op, p, e, cfg, start)
        except ConvergenceError as exc:
            raise ConvergenceError(f"sweep failed at eps={e:.6g}: {exc}", best=out) from None
        dm = defect_measures(res.maximizer, p, delta, atom_threshold)
        res = SubcriticalResult(**{**res.__dict__, "defects": dm})
        out.append(res)
        start = op.restrict(res.maximizer)
    return out


@dataclass(frozen=True)
class RescaledLimitReport:
    fits: list[BubbleFit]
    distances: list[float]
    decreasing: bool

    def to_json(self) -> dict:
        return {
            "distances": self.distances,
            "decreasing": self.decreasing,
            "bubbles": [f.params.to_json() for f in self.fits],
        }


def rescaled_limit_check(tail: list, p: FracParams) -> RescaledLimitReport:
    """Relative ``L^{2*}`` distance from each maximizer to its best bubble.

    Relative distances are unchanged by dislocations, so the fit is done in
    the original frame and stands for the pulled-back comparison.
    """
    if len(tail) < 2:
        raise ValidationError("rescaled-limit check needs at least two results")
    fits = []
    for r in tail:
        u = r.maximizer if isinstance(r, SubcriticalResult) else r
        if u.is_zero():
            raise ValidationError("cannot fit a bubble to a zero maximizer")
        x, R, _ = concentration_argmax(u, p)
        fit = fit_bubble(u, p, x, R)
        if not math.isfinite(fit.l2star_distance):
            raise NumericalError("bubble fit failed on a flat field")
        fits.append(fit)
    d = [f.l2star_distance for f in fits]
    return RescaledLimitReport(fits, d, all(b < a for a, b in zip(d, d[1:])))

"""Norms and seminorms of the embedding chain H^s -> L^{2*} -> L(2*,inf) -> Morrey -> Besov."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ValidationError
from .field import Field, FracParams, Grid, fft_workers


def hs_norm(u: Field, p: FracParams) -> float:
    """Homogeneous Sobolev norm ``(int |xi|^{2s} |u_hat|^2)^{1/2}``; ignores the mean."""
    p.check_grid(u.grid)
    g = u.grid
    coef = sfft.fftn(u.values, workers=fft_workers())
    w = g.freq_norm ** (2 * p.s)
    total = float(np.sum(w * (coef.real**2 + coef.imag**2)))
    return float(np.sqrt(total * g.cell_volume / g.points**g.dim))


def hs_inner(u: Field, v: Field, p: FracParams) -> float:
    g = u.grid
    cu = sfft.fftn(u.values, workers=fft_workers())
    cv = sfft.fftn(v.values, workers=fft_workers())
    w = g.freq_norm ** (2 * p.s)
    total = float(np.sum(w * (cu * np.conj(cv)).real))
    return total * g.cell_volume / g.points**g.dim


def lp_norm(u: Field, p: float) -> float:
    if p < 1:
        raise ValidationError(f"Lebesgue exponent must be >= 1, got {p}")
    a = np.abs(u.values)
    m = a.max()
    if m == 0:
        return 0.0
    # scale out the peak so large exponents cannot overflow
    return float(m * (u.grid.cell_volume * np.sum((a / m) ** p)) ** (1 / p))


def l2star_norm(u: Field, p: FracParams) -> float:
    return lp_norm(u, p.two_star)


def weak_l2star(u: Field, p: FracParams) -> float:
    """``sup_lam lam * |{|u| > lam}|^{1/2*}`` over the sampled distribution function.

    The supremum over real thresholds is reached as ``lam`` increases to a
    sample value ``a``, where the level set is ``{|u| >= a}``.
    """
    a = np.sort(np.abs(u.values).ravel())[::-1]
    if a.size == 0 or a[0] == 0:
        return 0.0
    # count of samples >= a[k] is the last index holding that value, plus one
    counts = np.searchsorted(-a, -a, side="right")
    vals = a * (u.grid.cell_volume * counts) ** (1 / p.two_star)
    return float(vals.max())


# ---------------------------------------------------------------------------
# Morrey


def dyadic_radii(grid: Grid, dense: bool = False) -> tuple[float, ...]:
    """``h * 2^k`` (or ``h * 2^(k/2)`` when ``dense``) up to ``L/2``."""
    step = np.sqrt(2.0) if dense else 2.0
    out = []
    r = grid.spacing
    while r <= grid.extent / 2 * (1 + 1e-12):
        out.append(float(r))
        r *= step
    return tuple(out)


@dataclass(frozen=True)
class MorreyParams:
    r: float
    gamma: float
    radii: tuple[float, ...]

    def __post_init__(self):
        if self.r < 1:
            raise ValidationError(f"Morrey exponent r must be >= 1, got {self.r}")
        if self.gamma < 0:
            raise ValidationError(f"Morrey gamma must be >= 0, got {self.gamma}")
        if not self.radii or any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValidationError("Morrey radii must be nonempty and strictly increasing")

    @classmethod
    def scale_invariant(cls, grid: Grid, p: FracParams, r: float = 2.0, dense: bool = False):
        """``gamma = r (N - 2s)/2``, the choice sharing the H^s dilation invariance."""
        return cls(r, r * (grid.dim - 2 * p.s) / 2, dyadic_radii(grid, dense))


@lru_cache(maxsize=64)
def _ball(grid: Grid, radius: float) -> tuple[np.ndarray, int]:
    """Transform of the periodic indicator of the open ball, and its point count."""
    k = sfft.fftfreq(grid.points, d=1.0 / grid.points)  # minimal-image integer offsets
    axes = np.meshgrid(*([k] * grid.dim), indexing="ij")
    dist = grid.spacing * np.sqrt(sum(a * a for a in axes))
    ind = (dist < radius).astype(float)
    count = int(ind.sum())
    return sfft.rfftn(ind, workers=fft_workers()), count


def _interval_sums(density: np.ndarray, grid: Grid, radius: float) -> tuple[np.ndarray, int]:
    # in 1D the periodic window sum is a difference of prefix sums
    m = grid.points
    k = int(np.ceil(radius / grid.spacing - 1e-12)) - 1  # offsets |j| <= k satisfy |j| h < radius
    k = min(k, (m - 1) // 2)
    count = 2 * k + 1
    ext = np.concatenate([density[m - k :], density, density[: k + 1]]) if k else density
    c = np.concatenate([[0.0], np.cumsum(ext)])
    return np.maximum(c[count : count + m] - c[:m], 0.0), count


def ball_sums(
    density: np.ndarray, grid: Grid, radius: float, dens_hat: np.ndarray | None = None
) -> tuple[np.ndarray, int]:
    """Periodic sums of ``density`` over ``B_radius(x)`` for every grid center ``x``.

    ``dens_hat`` may carry a precomputed ``rfftn(density)`` when scanning many radii.
    """
    if grid.dim == 1:
        return _interval_sums(density, grid, radius)
    fb, count = _ball(grid, radius)
    if count == 0:
        raise ValidationError(f"radius {radius} holds no grid point")
    if dens_hat is None:
        dens_hat = sfft.rfftn(density, workers=fft_workers())
    s = sfft.irfftn(dens_hat * fb, s=grid.shape, workers=fft_workers())
    return np.maximum(s, 0.0), count


def morrey_scan(u: Field, mp: MorreyParams) -> tuple[float, int, float]:
    """Morrey norm with its maximizing (linear center index, radius).

    Ties resolve to the smallest linear index, then the smallest radius.
    """
    g = u.grid
    dens = np.abs(u.values) ** mp.r
    dens_hat = sfft.rfftn(dens, workers=fft_workers()) if g.dim > 1 else None
    best = (-1.0, 0, mp.radii[0])
    for R in mp.radii:
        sums, count = ball_sums(dens, g, R, dens_hat)
        vals = R**mp.gamma * sums / count
        i = int(np.argmax(vals))
        v = float(vals.flat[i])
        if v > best[0] or (v == best[0] and i < best[1]):
            best = (v, i, R)
    return best[0] ** (1 / mp.r), best[1], best[2]


def morrey_norm(u: Field, mp: MorreyParams) -> float:
    """``max_{x,R} (R^gamma * mean_{B_R(x)} |u|^r)^{1/r}`` over grid centers and the given radii."""
    return morrey_scan(u, mp)[0]


# ---------------------------------------------------------------------------
# Besov (thermic description)


@dataclass(frozen=True)
class BesovParams:
    alpha: float
    times: tuple[float, ...]

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"Besov alpha must be positive, got {self.alpha}")
        if not self.times or min(self.times) <= 0:
            raise ValidationError("Besov times must be nonempty and positive")

    @classmethod
    def scale_invariant(cls, grid: Grid, p: FracParams):
        """``alpha = N/2* = (N-2s)/2`` with the default dyadic times."""
        return cls((grid.dim - 2 * p.s) / 2, dyadic_times(grid))


def dyadic_times(grid: Grid) -> tuple[float, ...]:
    """``(h/2)^2 * 4^k`` until ``(L/2)^2`` is covered."""
    t = (grid.spacing / 2) ** 2
    t_end = (grid.extent / 2) ** 2
    out = [t]
    while out[-1] < t_end * (1 - 1e-12):
        out.append(out[-1] * 4)
    return tuple(out)


def besov_norm(u: Field, bp: BesovParams) -> float:
    """``max_t t^{alpha/2} ||P_t u||_inf`` over the dyadic times."""
    if u.is_zero():
        return 0.0
    g = u.grid
    raw = sfft.rfftn(u.values, workers=fft_workers())
    xi2 = g.rfreq_norm**2
    best = 0.0
    for t in bp.times:
        pt = sfft.irfftn(raw * np.exp(-t * xi2), s=g.shape, workers=fft_workers())
        best = max(best, t ** (bp.alpha / 2) * float(np.abs(pt).max()))
    return best


# ---------------------------------------------------------------------------
# Gagliardo


def _offset_weights(grid: Grid, p: FracParams) -> np.ndarray:
    k = sfft.fftfreq(grid.points, d=1.0 / grid.points)
    axes = np.meshgrid(*([k] * grid.dim), indexing="ij")
    dist = grid.spacing * np.sqrt(sum(a * a for a in axes))
    w = np.zeros_like(dist)
    nz = dist > 0
    w[nz] = dist[nz] ** (-(grid.dim + 2 * p.s))
    return w


def gagliardo_seminorm(u: Field, p: FracParams) -> float:
    """``(h^{2N} sum_{i != j} |u_i - u_j|^2 / d(x_i, x_j)^{N+2s})^{1/2}``, minimal-image distance.

    Uses ``sum_i |u_i - u_{i+d}|^2 = 2 sum u^2 - 2 C(d)`` with the periodic
    autocorrelation ``C``, grouping the pair sum by offset.
    """
    p.check_grid(u.grid)
    if not p.s < 1:
        raise ValidationError(f"Gagliardo seminorm needs s < 1, got s={p.s}")
    g = u.grid
    if g.dim > 1 and g.points > 64:
        raise ValidationError("Gagliardo seminorm is limited to N=1 or M <= 64")
    f = sfft.fftn(u.values, workers=fft_workers())
    corr = sfft.ifftn(f.real**2 + f.imag**2, workers=fft_workers()).real
    sq = float(np.sum(u.values**2))
    diffsq = np.maximum(2 * sq - 2 * corr, 0.0)
    total = float(np.sum(_offset_weights(g, p) * diffsq))
    return float(np.sqrt(g.cell_volume**2 * total))


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class NormReport:
    hs: float
    l2star: float
    weak_l2star: float
    morrey: float
    besov: float
    gagliardo: float | None = None

    def to_dict(self, grid: Grid | None = None) -> dict:
        d = asdict(self)
        if grid is not None:
            d.update(grid.meta())
        return d


def norm_report(
    u: Field,
    p: FracParams,
    morrey: MorreyParams | None = None,
    besov: BesovParams | None = None,
    with_gagliardo: bool = False,
) -> NormReport:
    g = u.grid
    mp = morrey or MorreyParams.scale_invariant(g, p)
    bp = besov or BesovParams.scale_invariant(g, p)
    gag = None
    if with_gagliardo and p.s < 1 and (g.dim == 1 or g.points <= 64):
        gag = gagliardo_seminorm(u, p)
    return NormReport(
        hs=hs_norm(u, p),
        l2star=l2star_norm(u, p),
        weak_l2star=weak_l2star(u, p),
        morrey=morrey_norm(u, mp),
        besov=besov_norm(u, bp),
        gagliardo=gag,
    )

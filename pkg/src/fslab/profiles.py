"""Concentration search, greedy profile extraction and defect-measure diagnostics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .dislocations import Dislocation, apply, inverse, separation
from .errors import ValidationError
from .extremals import sharp_constant
from .field import Field, FracParams, Grid, frac_laplacian
from .norms import MorreyParams, ball_sums, dyadic_radii, hs_norm, l2star_norm, morrey_norm

# ---------------------------------------------------------------------------
# concentration search


def _score_values(u: Field, p: FracParams, R: float) -> np.ndarray:
    sums, _ = ball_sums(u.values**2, u.grid, R)
    return R ** (-2 * p.s) * u.grid.cell_volume * sums


def concentration_argmax(u: Field, p: FracParams, radii=None) -> tuple[tuple[float, ...], float, float]:
    """Maximize ``R^{-2s} int_{B_R(x)} |u|^2`` over grid centers and radii.

    Returns ``(center, radius, score)``. Ties go to the smallest radius, then
    the smallest linear index.
    """
    p.check_grid(u.grid)
    if u.is_zero():
        raise ValidationError("concentration search on a zero field")
    g = u.grid
    radii = tuple(radii) if radii is not None else dyadic_radii(g)
    best = (-1.0, 0, radii[0])
    for R in radii:
        vals = _score_values(u, p, R)
        i = int(np.argmax(vals))
        if vals.flat[i] > best[0]:
            best = (float(vals.flat[i]), i, R)
    score, i, R = best
    center = g.coords.reshape(-1, g.dim)[i]
    return tuple(float(c) for c in center), float(R), score


def _score_at(u: Field, p: FracParams, x, R: float) -> float:
    g = u.grid
    z = g.wrap(g.coords - np.asarray(x))
    inside = np.sum(z * z, axis=-1) < R * R
    return R ** (-2 * p.s) * g.cell_volume * float(np.sum(u.values[inside] ** 2))


@lru_cache(maxsize=32)
def score_radius_ratio(n: int, s: float) -> float:
    """Argmax radius of the concentration score for a unit-width bubble.

    The score of a bubble of width ``lam`` peaks at ``R = ratio * lam``; the
    ratio depends only on ``(N, s)``.
    """
    a = n - 2 * s

    def score(logr):
        R = math.exp(logr)
        mass, _ = quad(lambda r: r ** (n - 1) * (1 + r * r) ** (-a), 0, R, limit=200)
        return -(R ** (-2 * s)) * mass

    res = minimize_scalar(score, bounds=(-3.0, 5.0), method="bounded", options={"xatol": 1e-8})
    return math.exp(res.x)


def refine_concentration(u: Field, p: FracParams, x, R: float) -> tuple[tuple[float, ...], float, float]:
    """Local refinement over the 3^N neighboring centers and radii ``R * 2^{-1/2, 0, 1/2}``.

    The best center is kept on the grid; the radius is the vertex of the
    parabola through the three log-radius scores at that center, clipped to
    the bracket.
    """
    g = u.grid
    offsets = np.stack(np.meshgrid(*([[-1, 0, 1]] * g.dim), indexing="ij"), -1).reshape(-1, g.dim)
    radii = (R / math.sqrt(2), R, min(R * math.sqrt(2), g.extent / 2))
    best = (-1.0, tuple(x))
    for off in offsets:
        xc = tuple(float(v) for v in g.wrap(np.asarray(x) + g.spacing * off))
        sc = max(_score_at(u, p, xc, Rk) for Rk in radii)
        if sc > best[0] * (1 + 1e-12):
            best = (sc, xc)
    xc = best[1]
    f = np.array([_score_at(u, p, xc, Rk) for Rk in radii])
    curv = f[0] - 2 * f[1] + f[2]
    shift = 0.5 * (f[0] - f[2]) / curv if curv < 0 else float(np.argmax(f) - 1)
    shift = float(np.clip(shift, -1.0, 1.0))
    R_ref = min(R * 2 ** (shift / 2), g.extent / 2)
    return xc, R_ref, float(f.max())


# ---------------------------------------------------------------------------
# greedy extraction


def window(r: np.ndarray, rho: float) -> np.ndarray:
    """C^2 radial cutoff: 1 on ``r <= rho/2``, 0 on ``r >= rho``, quintic smoothstep between."""
    t = np.clip((r - rho / 2) / (rho / 2), 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t * t)


@dataclass(frozen=True)
class ProfileDecomposition:
    profiles: list[tuple[Field, Dislocation]]
    residual: Field
    pythagoras_deficit: float
    separations: np.ndarray
    residual_norms: tuple[float, float]
    scores: list[float] = field(default_factory=list)
    stop_reason: str = ""
    truncated: bool = False

    def reconstruction(self, grid: Grid, p: FracParams) -> Field:
        out = grid.zeros()
        for psi, d in self.profiles:
            out = out + apply(d, psi, p)
        return out

    def reconstruction_error(self, u: Field, p: FracParams) -> float:
        """``||u - sum D_j psi_j - residual||_2 / ||u||_2``."""
        diff = u - self.reconstruction(u.grid, p) - self.residual
        nu = float(np.linalg.norm(u.values))
        return float(np.linalg.norm(diff.values)) / nu if nu else 0.0

    def summary(self) -> dict:
        return {
            "profiles": [d.to_json() for _, d in self.profiles],
            "scores": self.scores,
            "pythagoras_deficit": self.pythagoras_deficit,
            "residual_l2star": self.residual_norms[0],
            "residual_morrey": self.residual_norms[1],
            "stop_reason": self.stop_reason,
            "truncated": self.truncated,
        }


def extract_profiles(
    u: Field,
    p: FracParams,
    max_profiles: int = 4,
    tau: float = 0.02,
    rho: float = 8.0,
    morrey: MorreyParams | None = None,
) -> ProfileDecomposition:
    """Greedy extraction of dislocated profiles driven by the concentration score.

    Each step locates the best ball, pulls the field back to unit scale,
    cuts it off with a C^2 window of radius ``rho`` and subtracts the placed
    profile. The Pythagoras deficit is measured with the placed profiles, so
    all energies come from the same grid.
    """
    p.check_grid(u.grid)
    if not 1 <= max_profiles <= 8:
        raise ValidationError(f"max_profiles must lie in [1, 8], got {max_profiles}")
    if not 0 < tau < 1:
        raise ValidationError(f"stop fraction tau must lie in (0, 1), got {tau}")
    if not rho > 0:
        raise ValidationError(f"window radius must be positive, got {rho}")
    g = u.grid
    mp = morrey or MorreyParams.scale_invariant(g, p)
    if u.is_zero():
        return ProfileDecomposition([], u, 0.0, np.zeros((0, 0)), (0.0, 0.0), [], "zero", False)

    ratio = score_radius_ratio(g.dim, p.s)
    lo, hi = g.spacing / 4, 4 * g.extent
    win = window(np.linalg.norm(g.coords, axis=-1), rho)
    cur = u
    profiles: list[tuple[Field, Dislocation]] = []
    placed: list[Field] = []
    scores: list[float] = []
    truncated = False
    stop = "max_profiles"
    initial = None
    while True:
        if cur.is_zero():
            stop = "zero"
            break
        x, R, score = concentration_argmax(cur, p)
        if initial is None:
            initial = score
        elif score < tau * initial:
            stop = "tau"
            break
        if len(profiles) == max_profiles:
            break
        x, R, score = refine_concentration(cur, p, x, R)
        lam = R / ratio
        if not lo <= lam <= hi:
            truncated = True
            lam = min(max(lam, lo), hi)
        d = Dislocation(x, lam)
        psi = Field(g, win * apply(inverse(d), cur, p).values)
        piece = apply(d, psi, p)
        profiles.append((psi, d))
        placed.append(piece)
        scores.append(score)
        cur = cur - piece

    hs_u = hs_norm(u, p) ** 2
    deficit = abs(hs_u - sum(hs_norm(v, p) ** 2 for v in placed) - hs_norm(cur, p) ** 2)
    k = len(profiles)
    sep = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                sep[i, j] = separation(profiles[i][1], profiles[j][1], g.extent)
    norms = (l2star_norm(cur, p), morrey_norm(cur, mp))
    return ProfileDecomposition(profiles, cur, deficit, sep, norms, scores, stop, truncated)


def two_bubble_field(grid: Grid, p: FracParams, wide: float = 1.0, ratio: float = 8.0) -> Field:
    """Normalized bubbles of widths ``wide`` and ``wide/ratio`` at ``-L/4`` and ``+L/4`` on every axis.

    Normalized bubbles carry equal H^s norms, so neither dominates the energy.
    """
    from .extremals import Bubble, BubbleParams

    if not (wide > 0 and ratio >= 1):
        raise ValidationError("need wide > 0 and ratio >= 1")
    q = grid.extent / 4
    a = Bubble(p, BubbleParams.normalized(p, wide, (-q,) * grid.dim))
    b = Bubble(p, BubbleParams.normalized(p, wide / ratio, (q,) * grid.dim))
    return (a + b).sample(grid)


# ---------------------------------------------------------------------------
# defect measures


@dataclass(frozen=True)
class Atom:
    center: tuple[float, ...]
    nu: float
    mu: float
    quantization_ok: bool

    def to_json(self) -> dict:
        return {"center": list(self.center), "nu": self.nu, "mu": self.mu, "quantization_ok": self.quantization_ok}


@dataclass(frozen=True)
class DefectReport:
    cell_size: float
    nu_cells: np.ndarray
    mu_cells: np.ndarray
    atoms: list[Atom]
    slack: float = 0.05

    @property
    def quantization_ok(self) -> list[bool]:
        return [a.quantization_ok for a in self.atoms]


def _cell_sums(dens: np.ndarray, grid: Grid, k: int) -> np.ndarray:
    c = grid.points // k
    shape = []
    for _ in range(grid.dim):
        shape += [c, k]
    axes = tuple(range(1, 2 * grid.dim, 2))
    return dens.reshape(shape).sum(axis=axes) * grid.cell_volume


def defect_measures(
    u: Field, p: FracParams, delta: float, atom_threshold: float = 0.25, slack: float = 0.05
) -> DefectReport:
    """Cell masses of ``|u|^{2*}`` and ``|(-Delta)^{s/2} u|^2`` with atom detection.

    Atoms are connected groups of cells whose ``nu`` mass exceeds
    ``atom_threshold`` times the total. ``nu_j`` is summed over the group and
    its one-cell ring; ``mu_j`` over the cells closer to that atom than to any
    other, since the energy profile of a concentrating bump spreads farther
    than its mass.
    """
    p.check_grid(u.grid)
    g = u.grid
    k = delta / g.spacing
    ki = int(round(k))
    if ki < 1 or abs(k - ki) > 1e-9 * max(1.0, k) or g.points % ki:
        raise ValidationError(
            f"cell size {delta} must be an integer multiple of h={g.spacing} dividing the grid"
        )
    if not 0 < atom_threshold < 1:
        raise ValidationError(f"atom threshold must lie in (0, 1), got {atom_threshold}")
    nu = _cell_sums(np.abs(u.values) ** p.two_star, g, ki)
    mu = _cell_sums(frac_laplacian(u, p).values ** 2, g, ki)
    total = nu.sum()
    atoms: list[Atom] = []
    if total > 0:
        hot = nu > atom_threshold * total
        # periodic labeling: label, then merge labels touching across the faces
        labels, n = ndimage.label(hot)
        labels = _merge_periodic(labels, n)
        ids = [i for i in np.unique(labels) if i]
        c = g.points // ki
        cell_centers = (np.stack(np.meshgrid(*([np.arange(c)] * g.dim), indexing="ij"), -1) + 0.5) * delta - g.extent / 2
        centers = []
        regions = []
        for i in ids:
            comp = labels == i
            regions.append(_dilate_periodic(comp))
            w = nu * comp
            # centroid on the torus via the heaviest cell as anchor
            anchor = cell_centers[np.unravel_index(int(np.argmax(w)), w.shape)]
            rel = g.wrap(cell_centers - anchor)
            ctr = anchor + np.tensordot(w, rel, axes=(tuple(range(g.dim)), tuple(range(g.dim)))) / w.sum()
            centers.append(g.wrap(ctr))
        if centers:
            dist = np.stack(
                [np.linalg.norm(g.wrap(cell_centers - c0), axis=-1) for c0 in centers], axis=0
            )
            owner = np.argmin(dist, axis=0)
        s_star = sharp_constant(g.dim, p.s).value
        for j, (ctr, reg) in enumerate(zip(centers, regions)):
            nu_j = float(nu[reg].sum())
            mu_j = float(mu[owner == j].sum())
            ok = nu_j <= s_star * mu_j ** (p.two_star / 2) * (1 + slack)
            atoms.append(Atom(tuple(float(v) for v in ctr), nu_j, mu_j, bool(ok)))
    return DefectReport(delta, nu, mu, atoms, slack)


def _dilate_periodic(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for off in itertools.product((-1, 0, 1), repeat=mask.ndim):
        out |= np.roll(mask, off, axis=tuple(range(mask.ndim)))
    return out


def _merge_periodic(labels: np.ndarray, n: int) -> np.ndarray:
    if n < 2:
        return labels
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ax in range(labels.ndim):
        first = np.take(labels, 0, axis=ax)
        last = np.take(labels, -1, axis=ax)
        for a, b in zip(first.ravel(), last.ravel()):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    lut = np.array([find(i) for i in range(n + 1)])
    return lut[labels]


# ---------------------------------------------------------------------------
# energy outside the concentration domain


@dataclass(frozen=True)
class OutsideEnergyReport:
    energies: list[float]
    decreasing: bool
    floor: float

    def to_json(self) -> dict:
        return {"energies": self.energies, "decreasing": self.decreasing, "floor": self.floor}


def no_energy_loss_check(seq: list[Field], p: FracParams, omega: np.ndarray, outside: np.ndarray) -> OutsideEnergyReport:
    """``int_A |(-Delta)^{s/2} u_n|^2`` for fields supported in ``omega``.

    ``A`` must stay clear of a one-cell neighborhood of ``omega``. The nonlocal
    operator leaks some energy into ``A``; the smallest value is reported as the
    floor rather than asserted to vanish.
    """
    omega = np.asarray(omega, dtype=bool)
    outside = np.asarray(outside, dtype=bool)
    if omega.shape != outside.shape:
        raise ValidationError("omega and outside masks differ in shape")
    near = ndimage.binary_dilation(omega, iterations=1)
    if np.any(near & outside):
        raise ValidationError("outside region touches the neighborhood of omega")
    energies = []
    for i, u in enumerate(seq):
        if u.values.shape != omega.shape:
            raise ValidationError(f"field {i} does not match the mask shape")
        if np.any(u.values[~omega] != 0):
            raise ValidationError(f"field {i} is not supported in omega")
        dens = frac_laplacian(u, p).values ** 2
        energies.append(float(u.grid.cell_volume * dens[outside].sum()))
    dec = all(b < a for a, b in zip(energies, energies[1:]))
    return OutsideEnergyReport(energies, dec, min(energies) if energies else 0.0)

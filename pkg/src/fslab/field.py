"""Periodic grids, sampled fields and Fourier-multiplier calculus.

The torus ``[-L/2, L/2)^N`` stands in for ``R^N``.  Spectral coefficients
follow the unitary convention

    u_hat(xi_k) = h^N / (2 pi)^(N/2) * sum_j u_j exp(-i xi_k . x_j)

so that ``h^N sum |u_j|^2 == dxi^N sum |u_hat_k|^2`` with ``dxi = 2 pi / L``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import TailCheckError, ValidationError

MAX_DIM = 3
MIN_POINTS = 8
DENSE_LIMIT = 5000
TAIL_TOL = 1e-6
MAGIC = b"FSLB1"
_HEADER = struct.Struct("<5sBId")


def fft_workers() -> int:
    """Thread cap for transforms, from ``FSLAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("FSLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``points`` samples per axis on a box of side ``extent``."""

    dim: int
    points: int
    extent: float

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise ValidationError(f"grid dim must be in [1, {MAX_DIM}], got {self.dim}")
        m = self.points
        if m < MIN_POINTS or m & (m - 1):
            raise ValidationError(f"points per axis must be a power of two >= {MIN_POINTS}, got {m}")
        if not (self.extent > 0 and np.isfinite(self.extent)):
            raise ValidationError(f"extent must be positive, got {self.extent}")

    @property
    def spacing(self) -> float:
        return self.extent / self.points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def dxi(self) -> float:
        return 2 * np.pi / self.extent

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.extent / 2 + self.spacing * np.arange(self.points)

    @cached_property
    def coords(self) -> np.ndarray:
        """Sample positions, shape ``shape + (dim,)``."""
        axes = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    @cached_property
    def freq_norm(self) -> np.ndarray:
        """``|xi|`` on the FFT layout; frequencies ``2 pi k / L`` with ``k`` in ``[-M/2, M/2)``."""
        k = sfft.fftfreq(self.points, d=self.spacing) * 2 * np.pi
        axes = np.meshgrid(*([k] * self.dim), indexing="ij")
        return np.sqrt(sum(a * a for a in axes))

    @cached_property
    def rfreq_norm(self) -> np.ndarray:
        """``|xi|`` on the half-spectrum layout of ``rfftn`` (last axis truncated)."""
        k = sfft.fftfreq(self.points, d=self.spacing) * 2 * np.pi
        kr = sfft.rfftfreq(self.points, d=self.spacing) * 2 * np.pi
        axes = np.meshgrid(*([k] * (self.dim - 1) + [kr]), indexing="ij")
        return np.sqrt(sum(a * a for a in axes))

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(-i xi . x_0) for x_0 = (-L/2, ..., -L/2); keeps u_hat equal to the continuum transform
        k = sfft.fftfreq(self.points, d=self.spacing) * 2 * np.pi
        p1 = np.exp(1j * k * self.extent / 2)
        out = p1
        for _ in range(self.dim - 1):
            out = np.multiply.outer(out, p1)
        return out

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Reduce coordinates to ``[-L/2, L/2)``."""
        L = self.extent
        return (np.asarray(x, dtype=float) + L / 2) % L - L / 2

    def refine(self) -> Grid:
        return Grid(self.dim, 2 * self.points, self.extent)

    def zeros(self) -> Field:
        return Field(self, np.zeros(self.shape))

    def sample(self, fn) -> Field:
        """Evaluate ``fn(coords)`` on the grid; ``coords`` has shape ``shape + (dim,)``."""
        return Field(self, np.asarray(fn(self.coords), dtype=float))

    def meta(self) -> dict:
        return {"dim_N": self.dim, "points_M": self.points, "extent_L": float(self.extent)}


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a function on a :class:`Grid` (array of shape ``grid.shape``)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.size == self.grid.points**self.grid.dim and v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if v.shape != self.grid.shape:
            raise ValidationError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field contains NaN or Inf samples")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __add__(self, other: Field) -> Field:
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: Field) -> Field:
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> Field:
        return Field(self.grid, a * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> Field:
        return Field(self.grid, -self.values)

    def _check(self, other: Field):
        if other.grid != self.grid:
            raise ValidationError("fields live on different grids")

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass(frozen=True)
class FracParams:
    """Order ``s`` of the homogeneous Sobolev space on ``R^dim``.

    ``embedding=False`` admits any ``0 < s < 1`` for seminorm-only work
    (the Gagliardo identity); ``2*`` then exists only when ``s < N/2``.
    """

    dim: int
    s: float
    embedding: bool = True

    def __post_init__(self):
        if self.embedding and not (0 < self.s < self.dim / 2):
            raise ValidationError(
                f"fractional order must satisfy 0 < s < N/2 (N={self.dim}, s={self.s})"
            )
        if not self.embedding and not (0 < self.s < 1):
            raise ValidationError(f"seminorm order must satisfy 0 < s < 1, got s={self.s}")

    @classmethod
    def seminorm(cls, dim: int, s: float) -> FracParams:
        return cls(dim, s, embedding=False)

    @property
    def two_star(self) -> float:
        if not self.s < self.dim / 2:
            raise ValidationError(f"2* is undefined for s >= N/2 (N={self.dim}, s={self.s})")
        return 2 * self.dim / (self.dim - 2 * self.s)

    @property
    def scaling_exponent(self) -> float:
        """``(N - 2s)/2``, the weight in the dislocation action."""
        return (self.dim - 2 * self.s) / 2

    def check_grid(self, grid: Grid):
        if grid.dim != self.dim:
            raise ValidationError(f"FracParams dim {self.dim} does not match grid dim {grid.dim}")


# ---------------------------------------------------------------------------
# spectral transforms


def spectrum(u: Field) -> np.ndarray:
    """Continuum-normalized Fourier coefficients on the FFT layout."""
    g = u.grid
    raw = sfft.fftn(u.values, workers=fft_workers())
    return raw * g._phase * (g.cell_volume / (2 * np.pi) ** (g.dim / 2))


def from_spectrum(grid: Grid, coeffs: np.ndarray) -> Field:
    raw = coeffs / grid._phase / (grid.cell_volume / (2 * np.pi) ** (grid.dim / 2))
    return Field(grid, sfft.ifftn(raw, workers=fft_workers()).real)


def apply_multiplier(u: Field, mult: np.ndarray) -> Field:
    """``F^{-1}(mult * F u)`` for a real, even multiplier on the FFT layout."""
    raw = sfft.fftn(u.values, workers=fft_workers())
    return Field(u.grid, sfft.ifftn(raw * mult, workers=fft_workers()).real)


def radial_multiplier(u: Field, mult: np.ndarray) -> Field:
    """Like :func:`apply_multiplier` for a multiplier given on the ``rfftn`` half layout."""
    g = u.grid
    raw = sfft.rfftn(u.values, workers=fft_workers())
    return Field(g, sfft.irfftn(raw * mult, s=g.shape, workers=fft_workers()))


def power_symbol(grid: Grid, a: float, half: bool = False) -> np.ndarray:
    """``|xi|^a`` with the zero frequency mapped to 0 for every ``a``."""
    xi = grid.rfreq_norm if half else grid.freq_norm
    out = np.zeros_like(xi)
    nz = xi > 0
    out[nz] = xi[nz] ** a
    return out


def zero_mode_tolerance(u: Field) -> float:
    return 1e-8 * u.sup * u.grid.extent**u.grid.dim


def frac_laplacian(u: Field, p: FracParams, power: float = 1.0) -> Field:
    """Multiplier ``|xi|^(power*s)``: ``power=1`` is ``(-Delta)^(s/2)``, ``power=2`` is ``(-Delta)^s``.

    Negative powers need a (numerically) mean-free input; the zero mode is
    annihilated in every case.
    """
    p.check_grid(u.grid)
    if power < 0:
        mean = abs(u.integral())
        if mean > zero_mode_tolerance(u):
            raise ValidationError(
                f"negative power needs a mean-free field; zero mode integral is {mean:.3e}"
            )
    if power == 0:
        return u
    return radial_multiplier(u, power_symbol(u.grid, power * p.s, half=True))


def riesz_potential(g: Field, p: FracParams) -> Field:
    """Constant-free Riesz potential of order ``s``: multiplier ``|xi|^(-s)``."""
    p.check_grid(g.grid)
    mean = abs(g.integral())
    if mean > zero_mode_tolerance(g):
        raise ValidationError(
            f"Riesz potential needs a mean-free input; zero-mode magnitude {mean:.3e}"
        )
    return radial_multiplier(g, power_symbol(g.grid, -p.s, half=True))


def heat_semigroup(u: Field, t: float) -> Field:
    """``exp(t Delta) u`` on the torus."""
    if not t > 0:
        raise ValidationError(f"heat time must be positive, got {t}")
    return radial_multiplier(u, np.exp(-t * u.grid.rfreq_norm**2))


# ---------------------------------------------------------------------------
# boundary policy


def boundary_ratio(u: Field) -> float:
    """Largest ``|u|`` on the faces ``x_k = -L/2`` relative to the peak."""
    peak = u.sup
    if peak == 0:
        return 0.0
    v = np.abs(u.values)
    edge = max(float(np.max(np.take(v, 0, axis=k))) for k in range(u.grid.dim))
    return edge / peak


def tail_check(u: Field, tol: float = TAIL_TOL, label: str = "field") -> float:
    """Raise :class:`TailCheckError` when the boundary value exceeds ``tol`` times the peak."""
    r = boundary_ratio(u)
    if r > tol:
        raise TailCheckError(
            f"{label}: boundary/peak ratio {r:.3e} exceeds tail tolerance {tol:.1e}", ratio=r
        )
    return r


# ---------------------------------------------------------------------------
# dense Dirichlet realization


@dataclass(frozen=True, eq=False)
class RestrictedOperator:
    """``R_Omega (-Delta)^s E_Omega`` as a dense matrix, including the ``h^N`` measure."""

    grid: Grid
    params: FracParams
    mask: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel())

    def restrict(self, u: Field) -> np.ndarray:
        return u.values.ravel()[self.indices]

    def extend(self, v: np.ndarray) -> Field:
        out = np.zeros(self.grid.points**self.grid.dim)
        out[self.indices] = v
        return Field(self.grid, out.reshape(self.grid.shape))

    def energy(self, v: np.ndarray) -> float:
        return float(v @ (self.matrix @ v))

    def smallest_eigenvalue(self) -> float:
        import scipy.linalg

        return float(scipy.linalg.eigvalsh(self.matrix, subset_by_index=[0, 0])[0])


def build_restricted_operator(grid: Grid, mask: np.ndarray, p: FracParams) -> RestrictedOperator:
    p.check_grid(grid)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape:
        raise ValidationError(f"mask shape {mask.shape} does not match grid {grid.shape}")
    k = int(mask.sum())
    if k == 0:
        raise ValidationError("mask selects no grid points")
    if k > DENSE_LIMIT:
        raise ValidationError(
            f"mask has {k} points, above the dense limit {DENSE_LIMIT}; use a coarser grid"
        )
    # periodic kernel of (-Delta)^s: response to a unit impulse at the origin
    kernel = sfft.ifftn(power_symbol(grid, 2 * p.s), workers=fft_workers()).real
    flat = kernel.ravel()
    idx = np.argwhere(mask).astype(np.int64)
    m_ = grid.points
    a = np.empty((k, k))
    for start in range(0, k, 512):
        rows = idx[start : start + 512]
        lin = np.zeros((len(rows), k), dtype=np.int64)
        for d in range(grid.dim):
            lin = lin * m_ + (rows[:, None, d] - idx[None, :, d]) % m_
        a[start : start + 512] = flat[lin]
    a *= grid.cell_volume
    a = 0.5 * (a + a.T)
    m = mask.copy()
    m.flags.writeable = False
    return RestrictedOperator(grid, p, m, a)


# ---------------------------------------------------------------------------
# binary field files


def write_field(path: str | Path, u: Field) -> None:
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.dim, g.points, float(g.extent)))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_field(path: str | Path) -> Field:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:5] != MAGIC:
        raise ValidationError(f"{path}: not an FSLB1 field file")
    _, n, m, L = _HEADER.unpack_from(data)
    grid = Grid(n, m, L)
    expected = _HEADER.size + 8 * m**n
    if len(data) != expected:
        raise ValidationError(f"{path}: expected {expected} bytes, found {len(data)}")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(grid.shape)
    return Field(grid, vals)

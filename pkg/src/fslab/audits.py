"""Test corpora and empirical audits of the refined Sobolev inequality and the embedding chain."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .extremals import BUBBLE_TAIL_TOL, Bubble, BubbleParams
from .field import Field, FracParams, Grid, fft_workers, tail_check
from .norms import BesovParams, MorreyParams, NormReport, morrey_norm, norm_report

# ---------------------------------------------------------------------------
# corpus


@dataclass(frozen=True)
class Corpus:
    """Named generator specs plus the seed that fixes every random choice.

    A generator spec is a dict with a ``kind`` key; lengths are physical, so the
    same corpus can be sampled on grids of different resolution.
    """

    entries: list[tuple[str, dict]] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        labels = [e[0] for e in self.entries]
        if len(set(labels)) != len(labels):
            raise ValidationError("corpus labels must be unique")
        for label, spec in self.entries:
            if spec.get("kind") not in _GENERATORS:
                raise ValidationError(f"{label}: unknown generator kind {spec.get('kind')!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("corpus seed must be a 64-bit unsigned integer")

    @property
    def labels(self) -> list[str]:
        return [e[0] for e in self.entries]


def bump(r: np.ndarray) -> np.ndarray:
    """Smooth compactly supported bump, 1 at ``r=0`` and 0 for ``r >= 1``."""
    out = np.zeros_like(r, dtype=float)
    inside = r < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def _radius(grid: Grid, x0) -> np.ndarray:
    z = grid.wrap(grid.coords - np.asarray(x0, dtype=float))
    return np.linalg.norm(z, axis=-1)


def _gen_bubble(spec, grid, p, rng):
    bp = BubbleParams.normalized(p, float(spec["lam"]), spec.get("x0", (0.0,) * grid.dim))
    return Bubble(p, bp).sample(grid), BUBBLE_TAIL_TOL


def _gen_bubbles(spec, grid, p, rng):
    parts = [
        Bubble(p, BubbleParams.normalized(p, float(lam), x0)).sample(grid).values
        for lam, x0 in zip(spec["lams"], spec["x0s"])
    ]
    return Field(grid, sum(parts)), BUBBLE_TAIL_TOL


def _gen_gaussian(spec, grid, p, rng):
    sig = float(spec["sigma"])
    r = _radius(grid, spec.get("x0", (0.0,) * grid.dim))
    return Field(grid, float(spec.get("amp", 1.0)) * np.exp(-0.5 * (r / sig) ** 2)), None


def _gen_random(spec, grid, p, rng):
    # a trigonometric polynomial fixed by (seed, label), sampled at any resolution
    kmax = int(spec["kmax"])
    if kmax >= grid.points // 2:
        raise ValidationError(f"band limit kmax={kmax} not resolved by M={grid.points}")
    ks = np.arange(-kmax, kmax + 1)
    modes = np.stack(np.meshgrid(*([ks] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim)
    xi = np.linalg.norm(modes, axis=1) * grid.dxi
    keep = xi > 0
    modes, xi = modes[keep], xi[keep]
    amp = xi ** (-(grid.dim / 2 + p.s + 0.1))
    phase = rng.uniform(0, 2 * np.pi, size=len(modes))
    x = grid.coords
    vals = np.zeros(grid.shape)
    for k, a, ph in zip(modes, amp, phase):
        vals += a * np.cos(grid.dxi * (x @ k) + ph)
    vals /= np.abs(vals).max()
    r = _radius(grid, spec.get("x0", (0.0,) * grid.dim))
    return Field(grid, vals * bump(r / float(spec["radius"]))), None


def _gen_packet(spec, grid, p, rng):
    n = float(spec["n"])
    r = _radius(grid, spec.get("x0", (0.0,) * grid.dim))
    x1 = grid.coords[..., 0]
    vals = n ** (-p.s) * np.sin(n * x1) * bump(r / float(spec["radius"]))
    return Field(grid, vals), None


_GENERATORS = {
    "bubble": _gen_bubble,
    "bubbles": _gen_bubbles,
    "gaussian": _gen_gaussian,
    "random": _gen_random,
    "packet": _gen_packet,
}


def generate_corpus(spec: Corpus, grid: Grid, p: FracParams) -> list[Field]:
    """Sample every entry; random entries draw from a stream keyed by (seed, position)."""
    p.check_grid(grid)
    out = []
    for i, (label, gspec) in enumerate(spec.entries):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        try:
            u, tol = _GENERATORS[gspec["kind"]](gspec, grid, p, rng)
            if tol is None:
                tail_check(u, label=label)
            else:
                tail_check(u, tol=tol, label=label)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{label}: malformed generator spec ({exc})") from None
        out.append(u)
    return out


def _bubble_clearance(p: FracParams, lam: float) -> float:
    # distance at which a bubble falls to the bubble tail tolerance
    return lam * math.sqrt(BUBBLE_TAIL_TOL ** (-2 / (p.dim - 2 * p.s)) - 1)


def reference_corpus(dim: int, extent: float, p: FracParams, seed: int = 0, size: int = 100) -> Corpus:
    """The audited family: bubbles, multi-bubbles, Gaussians, random fields and packets.

    Positions are drawn from a seeded stream and kept far enough from the box
    faces for each entry to pass its tail check.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    half = extent / 2
    entries: list[tuple[str, dict]] = []

    def point(margin):
        room = max(half - margin, 0.0)
        return [round(float(v), 6) for v in rng.uniform(-room, room, size=dim) / math.sqrt(dim)]

    unit = extent / 64
    lams = [unit, 1.5 * unit, 2 * unit]
    n_b, n_bb, n_g, n_r = (3 * size) // 10, (2 * size) // 10, (2 * size) // 10, (15 * size) // 100
    n_pk = size - n_b - n_bb - n_g - n_r
    for i in range(n_b):
        lam = lams[i % 3]
        entries.append((f"bubble_{i:02d}", {"kind": "bubble", "lam": lam, "x0": point(_bubble_clearance(p, lam))}))
    for i in range(n_bb):
        k = 2 if i < (3 * n_bb) // 4 else 3
        sep = unit * 2 ** (1 + i % 3)
        lam_list = [lams[(i + j) % 2] for j in range(k)]
        c = point(_bubble_clearance(p, max(lam_list)) * k ** (1 / (dim - 2 * p.s)) + sep)
        x0s = []
        for j in range(k):
            ang = 2 * math.pi * j / k
            off = [sep / 2 * math.cos(ang), sep / 2 * math.sin(ang)][:dim] + [0.0] * max(dim - 2, 0)
            x0s.append([round(a + b, 6) for a, b in zip(c, off)])
        entries.append((f"bubbles{k}_{i:02d}", {"kind": "bubbles", "lams": lam_list, "x0s": x0s}))
    for i in range(n_g):
        sig = unit * (1 + i % 4)
        entries.append((f"gauss_{i:02d}", {"kind": "gaussian", "sigma": sig, "x0": point(6 * sig)}))
    for i in range(n_r):
        radius = extent / 4
        entries.append((f"random_{i:02d}", {"kind": "random", "kmax": 3 + i % 4, "radius": radius, "x0": [0.0] * dim}))
    for i in range(n_pk):
        n = 2.0 ** (i % 4) * (2 * math.pi / extent) * 4
        entries.append((f"packet_{i:02d}", {"kind": "packet", "n": n, "radius": extent / 8 * (1 + (i // 4) % 2), "x0": point(extent / 4)}))
    return Corpus(entries, seed)


# ---------------------------------------------------------------------------
# audits


@dataclass(frozen=True)
class AuditRow:
    label: str
    report: NormReport
    morrey1: float  # Morrey norm with r=1, gamma=(N-2s)/2
    ratio_refined: float
    ratio_chain1: float  # morrey / weak L^{2*}
    ratio_chain2: float  # besov / morrey1
    ratio_holder: float  # morrey1 / morrey
    ratio_morrey_strong: float  # morrey / l2star
    weak_over_strong: float

    def csv_row(self) -> list[str]:
        r = self.report
        vals = [
            r.hs,
            r.l2star,
            r.weak_l2star,
            r.morrey,
            r.besov,
            self.ratio_refined,
            self.ratio_chain1,
            self.ratio_chain2,
            self.morrey1,
            self.ratio_holder,
            self.ratio_morrey_strong,
        ]
        return [self.label] + [format(v, ".17g") for v in vals]


# the first nine columns are the stable interface; the Holder-chain extras follow
CSV_COLUMNS = [
    "label",
    "hs",
    "l2star",
    "weak",
    "morrey",
    "besov",
    "ratio_refined",
    "ratio_chain1",
    "ratio_chain2",
    "morrey1",
    "ratio_holder",
    "ratio_morrey_strong",
]


def default_theta(p: FracParams) -> float:
    return 2 / p.two_star


def _check_theta_r(p: FracParams, theta: float, r: float) -> None:
    lo = 2 / p.two_star
    if not lo - 1e-15 <= theta < 1:
        raise ValidationError(f"theta must satisfy 2/2* = {lo:.6g} <= theta < 1, got {theta}")
    if not 1 <= r < p.two_star:
        raise ValidationError(f"Morrey exponent must satisfy 1 <= r < 2* = {p.two_star:.6g}, got {r}")


def _reports(fields: list[Field], p: FracParams, r: float) -> list[tuple[NormReport, float]]:
    """Norm report (Morrey exponent ``r``) and the ``r=1`` Morrey norm of each field."""
    if not fields:
        return []
    g = fields[0].grid
    mp = MorreyParams.scale_invariant(g, p, r)
    mp1 = MorreyParams.scale_invariant(g, p, 1.0)
    bp = BesovParams.scale_invariant(g, p)

    def one(u):
        return norm_report(u, p, mp, bp), morrey_norm(u, mp1)

    workers = fft_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, fields))
    return [one(u) for u in fields]


def audit_rows(fields: list[Field], p: FracParams, labels=None, theta: float | None = None, r: float = 2.0) -> list[AuditRow]:
    """Norm reports and ratios for every nonzero field; zero fields are skipped."""
    theta = default_theta(p) if theta is None else theta
    _check_theta_r(p, theta, r)
    labels = list(labels) if labels is not None else [f"field_{i:03d}" for i in range(len(fields))]
    if len(labels) != len(fields):
        raise ValidationError("labels and fields differ in length")
    keep = [(lab, u) for lab, u in zip(labels, fields) if not u.is_zero()]
    reports = _reports([u for _, u in keep], p, r)
    rows = []
    for (lab, _), (rep, m1) in zip(keep, reports):
        rows.append(
            AuditRow(
                lab,
                rep,
                m1,
                rep.l2star / (rep.hs**theta * rep.morrey ** (1 - theta)),
                rep.morrey / rep.weak_l2star,
                rep.besov / m1,
                m1 / rep.morrey,
                rep.morrey / rep.l2star,
                rep.weak_l2star / rep.l2star,
            )
        )
    return rows


@dataclass(frozen=True)
class RefinedAudit:
    rows: list[AuditRow]
    theta: float
    r: float
    constant: float
    violations: list[str]


def audit_refined(fields: list[Field], p: FracParams, theta: float | None = None, r: float = 2.0, labels=None) -> RefinedAudit:
    """Ratio ``l2star / (hs^theta morrey^(1-theta))`` per field; the empirical constant is the corpus max."""
    theta = default_theta(p) if theta is None else theta
    rows = audit_rows(fields, p, labels, theta, r)
    c = max((row.ratio_refined for row in rows), default=0.0)
    viol = [row.label for row in rows if not row.ratio_refined <= c]
    return RefinedAudit(rows, theta, r, c, viol)


@dataclass(frozen=True)
class ChainAudit:
    rows: list[AuditRow]
    constants: dict
    violations: dict
    excluded: list[str]


def audit_chain(fields: list[Field], p: FracParams, labels=None, r: float = 2.0, rows: list[AuditRow] | None = None) -> ChainAudit:
    """Embedding-chain links with fitted constants, plus weak <= strong.

    Audited: Morrey <= C weak L^{2*}, Besov <= C Morrey(r=1), and the Holder
    chain Morrey(r=1) <= C Morrey(r) <= C l2star.
    """
    labels = list(labels) if labels is not None else [f"field_{i:03d}" for i in range(len(fields))]
    if rows is None:
        rows = audit_rows(fields, p, labels, r=r)
    kept = {row.label for row in rows}
    excluded = [lab for lab in labels if lab not in kept]
    links = {
        "morrey_weak": "ratio_chain1",
        "besov_morrey1": "ratio_chain2",
        "morrey1_morrey": "ratio_holder",
        "morrey_l2star": "ratio_morrey_strong",
    }
    constants = {k: max((getattr(row, a) for row in rows), default=0.0) for k, a in links.items()}
    viol = {k: [row.label for row in rows if not getattr(row, a) <= constants[k]] for k, a in links.items()}
    viol["weak_le_strong"] = [row.label for row in rows if not row.weak_over_strong <= 1 + 1e-12]
    return ChainAudit(rows, constants, viol, excluded)


def constant_drift(coarse: float, fine: float) -> float:
    """``|C(2M)/C(M) - 1|``."""
    return abs(fine / coarse - 1) if coarse else math.inf


def write_audit_csv(path: str | Path, rows: list[AuditRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(row.csv_row())

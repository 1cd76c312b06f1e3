from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest

from fslab.audits import generate_corpus, reference_corpus
from fslab.dislocations import Dislocation, apply
from fslab.errors import TailCheckError, ValidationError
from fslab.extremals import (
    Bubble,
    BubbleParams,
    bubble,
    fit_bubble,
    optimizer_diagnostic,
    rayleigh_quotient,
    required_extent,
    sharp_constant,
)
from fslab.field import Field, FracParams, Grid

from oracles import S_STAR_FROZEN, sharp_constant_mp


@pytest.mark.parametrize("key", sorted(S_STAR_FROZEN))
def test_sharp_constant_frozen_values(key):
    n, s = key
    want = float(mp.mpf(S_STAR_FROZEN[key]))
    assert sharp_constant(n, s).value == pytest.approx(want, rel=1e-12)


def test_sharp_constant_closed_forms():
    assert sharp_constant(4, 1).value == pytest.approx(3 / (32 * math.pi**2), rel=1e-12)
    assert sharp_constant(2, 0.5).value == pytest.approx(1 / math.pi, rel=1e-12)
    assert sharp_constant(3, 1).two_star == 6


def test_sharp_constant_sweep_against_oracle():
    for n in (1, 2, 3, 4):
        for k in range(5):
            s = (k + 0.5) / 5 * n / 2
            got = sharp_constant(n, s).value
            assert math.isfinite(got) and got > 0
            assert got == pytest.approx(float(sharp_constant_mp(n, s)), rel=1e-12)


def test_sharp_constant_domain():
    with pytest.raises(ValidationError, match="0 < s < N/2"):
        sharp_constant(2, 1.0)


def test_bubble_peak_symmetry_and_decay():
    p = FracParams(2, 0.5)
    g = Grid(2, 64, 16.0)
    bp = BubbleParams(2.5, 0.75, (0.0, 0.0))
    u = bubble(g, p, bp, tail_tol=0.2)
    assert u.values[32, 32] == pytest.approx(2.5 / 0.75 ** (2 - 1), rel=1e-15)
    idx = (-np.arange(64)) % 64
    assert np.array_equal(u.values, u.values[idx][:, idx])
    b = Bubble(p, BubbleParams(1.0, 1.0, (0.0, 0.0)))
    x = np.array([[10.0, 0.0]])
    assert b.at(x, g, wrap=False)[0] * 10.0 ** (2 - 1) == pytest.approx(1.0, rel=0.05)


def test_bubble_tail_check_reports_required_extent():
    p = FracParams(2, 0.5)
    g = Grid(2, 64, 8.0)
    with pytest.raises(TailCheckError, match="need extent L >=") as ei:
        bubble(g, p, BubbleParams(1.0, 1.0, (0.0, 0.0)))
    bp = BubbleParams(1.0, 1.0, (0.0, 0.0))
    need = ei.value.required_extent
    assert need == pytest.approx(required_extent(p, bp, 0.05))
    bubble(Grid(2, 64, need * 1.01), p, bp)
    with pytest.raises(TailCheckError):
        bubble(Grid(2, 64, need * 0.99), p, bp)
    with pytest.raises(ValidationError):
        BubbleParams(0.0, 1.0, (0.0,))
    with pytest.raises(ValidationError):
        BubbleParams(1.0, -1.0, (0.0,))


def test_rayleigh_scale_invariance_and_zero():
    p = FracParams(2, 0.5)
    g = Grid(2, 64, 16.0)
    u = Bubble(p, BubbleParams(1.0, 1.0, (0.0, 0.0))).sample(g)
    q = rayleigh_quotient(u, p)
    for a in (-3.0, 1e-3, 250.0):
        assert rayleigh_quotient(a * u, p) == pytest.approx(q, rel=1e-12)
    with pytest.raises(ValidationError):
        rayleigh_quotient(g.zeros(), p)


def test_gaussian_is_not_extremal():
    p = FracParams(2, 0.5)
    g = Grid(2, 256, 32.0)
    u = g.sample(lambda x: np.exp(-np.sum(x**2, -1)))
    assert rayleigh_quotient(u, p) <= 0.98 * sharp_constant(2, 0.5).value


def test_bubble_quotient_approaches_sharp_constant_with_box_size():
    p = FracParams(2, 0.5)
    s_star = sharp_constant(2, 0.5).value
    excess = []
    for L, M in [(40, 512), (80, 1024), (160, 2048)]:
        u = Bubble(p, BubbleParams(1.0, 1.0, (0.0, 0.0))).sample(Grid(2, M, float(L)))
        excess.append(rayleigh_quotient(u, p) / s_star - 1)
    # torus truncation: the excess is positive and falls like lambda/L
    assert all(e > 0 for e in excess)
    assert excess[1] / excess[0] == pytest.approx(0.5, abs=0.05)
    assert excess[2] / excess[1] == pytest.approx(0.5, abs=0.05)


def test_quotient_invariant_under_closed_form_dislocation():
    p = FracParams(1, 0.05)
    g = Grid(1, 2**21, 2.0**21)
    b = Bubble(p, BubbleParams.normalized(p, 8.0, (0.0,)))
    q0 = rayleigh_quotient(b.sample(g), p)
    assert rayleigh_quotient(apply(Dislocation((5.0,), 1.0), b, p, g), p) == pytest.approx(q0, rel=1e-12)
    for lam in (0.5, 2.0):
        q = rayleigh_quotient(apply(Dislocation((5.0,), lam), b, p, g), p)
        assert q == pytest.approx(q0, rel=1e-3)


def test_discrete_sobolev_bound_on_corpus():
    p = FracParams(2, 0.25)
    corpus = reference_corpus(2, 32.0, p, seed=7)
    fields = generate_corpus(corpus, Grid(2, 256, 32.0), p)
    s_star = sharp_constant(2, 0.25).value
    delta_grid = max(rayleigh_quotient(u, p) for u in fields) / s_star - 1
    assert delta_grid < 0.05, f"delta_grid = {delta_grid:.4f}"


def test_fit_bubble_self_fit():
    p = FracParams(2, 0.5)
    g = Grid(2, 128, 16.0)
    u = Bubble(p, BubbleParams(3.0, 0.8, (0.4, -0.3))).sample(g)
    fit = fit_bubble(u, p, (0.5, -0.25), 1.6)
    assert fit.l2star_distance < 1e-3
    assert fit.params.lam == pytest.approx(0.8, rel=1e-3)
    assert fit.params.c == pytest.approx(3.0, rel=1e-3)
    with pytest.raises(ValidationError):
        fit_bubble(g.zeros(), p, (0.0, 0.0), 1.0)


def test_optimizer_diagnostic_on_bubble_sequences():
    p = FracParams(2, 0.5)
    g = Grid(2, 128, 16.0)
    seq = [Bubble(p, BubbleParams.normalized(p, lam, (0.5, 0.0))).sample(g) for lam in (1.0, 0.5, 0.25)]
    rows = optimizer_diagnostic(seq, p)
    assert all(r.fit.l2star_distance < 0.02 for r in rows)
    base = seq[0]
    gauss = g.sample(lambda x: np.exp(-np.sum((x - 2.0) ** 2, -1)))
    scale = 0.1 * base.sup / gauss.sup
    pert = [base + (scale / n) * gauss for n in (1, 2, 4, 8)]
    d = [r.fit.l2star_distance for r in optimizer_diagnostic(pert, p)]
    assert all(b < a for a, b in zip(d, d[1:]))
    same = optimizer_diagnostic([base, base], p)
    assert same[0].to_json() == {**same[1].to_json(), "index": 0}
    with pytest.raises(ValidationError, match="degenerate"):
        optimizer_diagnostic([base, g.zeros()], p)


def test_normalized_bubbles_share_norms():
    from fslab.norms import hs_norm, l2star_norm

    p = FracParams(1, 0.05)
    g = Grid(1, 2**18, 2.0**18)
    a = Bubble(p, BubbleParams.normalized(p, 16.0, (0.0,))).sample(g)
    b = Bubble(p, BubbleParams.normalized(p, 32.0, (0.0,))).sample(g)
    assert l2star_norm(a, p) == pytest.approx(l2star_norm(b, p), rel=2e-3)
    assert hs_norm(a, p) == pytest.approx(hs_norm(b, p), rel=1e-2)
    assert isinstance(a, Field)

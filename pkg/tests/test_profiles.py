from __future__ import annotations

import numpy as np
import pytest

from fslab.errors import ValidationError
from fslab.extremals import Bubble, BubbleParams, sharp_constant
from fslab.field import Field, FracParams, Grid
from fslab.norms import MorreyParams, dyadic_radii, hs_norm, l2star_norm, morrey_norm
from fslab.profiles import (
    concentration_argmax,
    defect_measures,
    extract_profiles,
    no_energy_loss_check,
    two_bubble_field,
    window,
)

from oracles import score_brute


def test_concentration_argmax_single_bubble_matches_scan():
    p = FracParams(2, 0.5)
    g = Grid(2, 64, 16.0)
    x0 = (0.5, -0.25)
    u = Bubble(p, BubbleParams(1.0, 1.0, x0)).sample(g)
    x, R, score = concentration_argmax(u, p)
    bx, bR, bscore = score_brute(u.values, g.coords, g.extent, g.cell_volume, p.s, dyadic_radii(g))
    assert np.allclose(x, bx) and R == bR
    assert score == pytest.approx(bscore, rel=1e-12)
    assert np.linalg.norm(np.subtract(x, x0)) <= g.spacing
    assert 0.5 <= R <= 2.0


@pytest.mark.parametrize("s", [0.25, 0.5])
def test_concentration_score_is_dilation_invariant(s):
    p = FracParams(2, s)
    g = Grid(2, 256, 16.0)
    out = [concentration_argmax(Bubble(p, BubbleParams.normalized(p, lam, (0.0, 0.0))).sample(g), p) for lam in (1.0, 0.5, 0.25)]
    assert [o[1] for o in out] == [2.0, 1.0, 0.5]
    assert max(o[2] for o in out) / min(o[2] for o in out) - 1 < 0.03


def test_concentration_argmax_prefers_narrow_bubble():
    p = FracParams(2, 0.5)
    g = Grid(2, 256, 16.0)
    u = two_bubble_field(g, p, 1.0, 8.0)
    x, _, _ = concentration_argmax(u, p)
    assert np.linalg.norm(np.subtract(x, (4.0, 4.0))) <= g.spacing


def test_concentration_argmax_noise_has_no_sharp_peak():
    p = FracParams(2, 0.5)
    g = Grid(2, 64, 16.0)
    b = Bubble(p, BubbleParams(1.0, 1.0, (0.0, 0.0))).sample(g)
    rng = np.random.default_rng(3)
    spec = np.fft.fftn(rng.normal(size=g.shape))
    k = np.fft.fftfreq(64) * 64
    kk = np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)
    noise = Field(g, np.real(np.fft.ifftn(spec * ((kk > 0) & (kk <= 8)))))
    noise = noise * (hs_norm(b, p) / hs_norm(noise, p))
    assert concentration_argmax(noise, p)[2] < 0.5 * concentration_argmax(b, p)[2]


def test_concentration_argmax_zero_field():
    with pytest.raises(ValidationError, match="zero"):
        concentration_argmax(Grid(1, 16, 2.0).zeros(), FracParams(1, 0.25))


def test_window_shape():
    r = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    w = window(r, 4.0)
    assert w[0] == w[1] == w[2] == 1.0 and w[4] == w[5] == 0.0 and 0 < w[3] < 1


def test_extract_zero_and_validation():
    p = FracParams(2, 0.5)
    g = Grid(2, 32, 8.0)
    dec = extract_profiles(g.zeros(), p)
    assert dec.profiles == [] and dec.residual.is_zero() and dec.pythagoras_deficit == 0
    u = Bubble(p, BubbleParams(1.0, 1.0, (0.0, 0.0))).sample(g)
    for kw in ({"max_profiles": 0}, {"max_profiles": 9}, {"tau": 1.5}, {"rho": 0.0}):
        with pytest.raises(ValidationError):
            extract_profiles(u, p, **kw)


@pytest.mark.parametrize("s", [0.25, 0.5])
def test_single_bubble_extraction(s):
    p = FracParams(2, s)
    g = Grid(2, 256, 16.0)
    u = Bubble(p, BubbleParams.normalized(p, 0.5, (0.0, 0.0))).sample(g)
    dec = extract_profiles(u, p)
    assert dec.residual_norms[0] < 0.05 * l2star_norm(u, p)
    assert len(dec.profiles) == 1
    assert dec.pythagoras_deficit < 0.1 * hs_norm(u, p) ** 2


def test_extraction_bookkeeping_and_monotone_scores():
    p = FracParams(2, 0.25)
    g = Grid(2, 128, 16.0)
    rng = np.random.default_rng(5)
    bubbles = [Bubble(p, BubbleParams.normalized(p, lam, tuple(rng.uniform(-5, 5, 2)))) for lam in (1.0, 0.4, 0.2)]
    u = sum((b.sample(g) for b in bubbles[1:]), bubbles[0].sample(g))
    dec = extract_profiles(u, p, max_profiles=6)
    assert dec.reconstruction_error(u, p) < 1e-8
    assert all(b < a for a, b in zip(dec.scores, dec.scores[1:]))
    assert dec.separations.shape == (len(dec.profiles),) * 2


def test_stopping_soundness():
    p = FracParams(2, 0.5)
    g = Grid(2, 256, 16.0)
    mp = MorreyParams.scale_invariant(g, p)
    for u in (two_bubble_field(g, p, 1.0, 4.0), Bubble(p, BubbleParams.normalized(p, 0.5, (1.0, 0.0))).sample(g)):
        dec = extract_profiles(u, p, max_profiles=8)
        assert dec.stop_reason == "tau"
        assert dec.residual_norms[1] < morrey_norm(u, mp) * (0.02**0.5 + 0.1)


def test_narrow_bubble_flagged_truncated():
    p = FracParams(1, 0.25)
    g = Grid(1, 64, 16.0)
    v = np.zeros(64)
    v[32] = 1.0
    dec = extract_profiles(Field(g, v), p, max_profiles=1)
    assert dec.truncated
    assert dec.reconstruction_error(Field(g, v), p) < 1e-8


def test_pythagoras_deficit_nonincreasing_with_scale_separation():
    p = FracParams(2, 0.25)
    g = Grid(2, 256, 16.0)
    deficits = []
    for k in range(5):
        u = two_bubble_field(g, p, 1.0, 2.0**k)
        deficits.append(extract_profiles(u, p).pythagoras_deficit / hs_norm(u, p) ** 2)
    assert all(b <= a for a, b in zip(deficits, deficits[1:])), f"deficits {deficits}"


def test_defect_measures_conservation_and_commensurability():
    p = FracParams(2, 0.5)
    g = Grid(2, 64, 8.0)
    u = Field(g, np.random.default_rng(2).normal(size=g.shape))
    rep = defect_measures(u, p, 0.5)
    assert rep.nu_cells.shape == (16, 16)
    assert rep.nu_cells.sum() == pytest.approx(l2star_norm(u, p) ** p.two_star, rel=1e-10)
    assert rep.mu_cells.sum() == pytest.approx(hs_norm(u, p) ** 2, rel=1e-10)
    for delta in (0.3, 3 * g.spacing, 0.05):
        with pytest.raises(ValidationError, match="multiple"):
            defect_measures(u, p, delta)


def test_spread_gaussian_has_no_atoms():
    p = FracParams(2, 0.5)
    g = Grid(2, 128, 16.0)
    u = g.sample(lambda x: np.exp(-np.sum(x**2, -1) / 16))
    assert defect_measures(u, p, 1.0, atom_threshold=0.25).atoms == []


@pytest.mark.parametrize("s,m", [(0.25, 512), (0.5, 1024)])
def test_narrow_bubble_is_one_quantized_atom(s, m):
    p = FracParams(2, s)
    g = Grid(2, m, m / 32.0)
    u = Bubble(p, BubbleParams.normalized(p, 4 * g.spacing, (0.0, 0.0))).sample(g)
    rep = defect_measures(u, p, 1.0)
    assert len(rep.atoms) == 1 and rep.quantization_ok == [True]
    a = rep.atoms[0]
    assert a.nu <= sharp_constant(2, s).value * a.mu ** (p.two_star / 2) * 1.05
    assert np.linalg.norm(a.center) < 1.0


def test_atom_across_periodic_faces_counts_once():
    p = FracParams(2, 0.25)
    g = Grid(2, 512, 16.0)
    u = Bubble(p, BubbleParams.normalized(p, 4 * g.spacing, (-8.0, -8.0))).sample(g)
    rep = defect_measures(u, p, 1.0)
    assert len(rep.atoms) == 1
    assert np.allclose(np.abs(rep.atoms[0].center), 8.0, atol=0.5)


def _disk_setup():
    g = Grid(2, 128, 16.0)
    r = np.linalg.norm(g.coords, axis=-1)
    return g, r, r < 2, r > 4


def test_no_energy_loss_zero_and_concentrating_family():
    p = FracParams(2, 0.5)
    g, r, omega, outside = _disk_setup()
    assert no_energy_loss_check([g.zeros()], p, omega, outside).energies == [0.0]
    seq = [
        Field(g, window(r, 2.0) * Bubble(p, BubbleParams.normalized(p, lam, (0.0, 0.0))).sample(g).values)
        for lam in (1.0, 0.5, 0.25, 0.125)
    ]
    rep = no_energy_loss_check(seq, p, omega, outside)
    assert rep.decreasing and rep.floor == min(rep.energies) > 0


def test_no_energy_loss_preconditions():
    p = FracParams(2, 0.5)
    g, r, omega, _ = _disk_setup()
    with pytest.raises(ValidationError, match="touches"):
        no_energy_loss_check([g.zeros()], p, omega, r > 1.5)
    with pytest.raises(ValidationError, match="supported"):
        no_energy_loss_check([Field(g, np.ones(g.shape))], p, omega, r > 4)

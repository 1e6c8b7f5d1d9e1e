from pathlib import Path

import numpy as np
import pytest

from acoustoptic.decomposition import angular_products, ballistic, decompose, remainder, u1v1_closed
from acoustoptic.geometry import build_grids
from acoustoptic.media import MediaCoefficients, Patch, beam_trace, load_field_csv, make_beam
from acoustoptic.transport import PhaseSpaceField, TransportProblem, solve

from conftest import unit_media, x_beam

DATA = Path(__file__).parent / "data"
TOL = 1e-10


def test_ballistic_at_centre_with_left_entry():
    g = build_grids(5, 5, 16)
    b = make_beam((1, 0), 2 * g.angular.dphi, g.angular, Patch("left", 0.5))
    u1 = ballistic(b, unit_media(g), g)
    assert u1.values[b.k0, 2, 2] == pytest.approx(np.exp(-0.5) * b.c_norm * b.h ** -0.5, rel=1e-13)


def test_ballistic_zero_outside_cone(small_grids):
    g = small_grids
    b = x_beam(g, 2 * g.angular.dphi)
    u1 = ballistic(b, unit_media(g), g)
    assert np.all(u1.values[~b.cone] == 0.0)
    assert np.all(u1.values[b.cone] > 0.0)


def test_ballistic_smooth_medium_against_fine_quadrature():
    g = build_grids(64, 64, 32)
    x, _ = g.spatial.centers()
    sig = 1 + 0.5 * np.sin(np.pi * x)
    m = MediaCoefficients(0.0, sig, 0.5, g.spatial)
    b = x_beam(g, 3 * g.angular.dphi)
    u1 = ballistic(b, m, g)
    n = 400_000
    rng = np.random.default_rng(2)
    for _ in range(5):
        i, j = rng.integers(0, 64, 2)
        k = rng.choice(np.flatnonzero(b.cone))
        p = np.array([(i + 0.5) / 64, (j + 0.5) / 64])
        d = np.array([g.angular.mu[k], g.angular.eta[k]])
        # distance back to the boundary, then a midpoint sum of the cell field
        ts = [(0 - p[0]) / -d[0] if d[0] > 0 else np.inf, (0 - p[1]) / -d[1] if d[1] > 0 else np.inf,
              (1 - p[1]) / -d[1] if d[1] < 0 else np.inf]
        tau = min(t for t in ts if t >= 0)
        s = (np.arange(n) + 0.5) * tau / n
        pts = p[None] - s[:, None] * d[None]
        ci = np.clip((pts[:, 0] * 64).astype(int), 0, 63)
        cj = np.clip((pts[:, 1] * 64).astype(int), 0, 63)
        depth = sig[ci, cj].sum() * tau / n
        expected = b.value * np.exp(-depth / m.kn)
        assert u1.values[k, i, j] == pytest.approx(expected, rel=1e-6)


def test_remainder_vanishes_without_scattering(small_grids):
    g = small_grids
    m = MediaCoefficients(0.0, 1e-8, 1.0, g.spatial)
    u1 = ballistic(x_beam(g, 2 * g.angular.dphi), m, g)
    u2, rep = remainder(u1, m, g)
    assert rep.converged
    assert u2.sup() <= 1e-6 * u1.sup()


@pytest.mark.parametrize("kn", [1.0, 0.25])
def test_discrete_decomposition_is_consistent(kn):
    g = build_grids(24, 24, 32)
    b = x_beam(g, 2 * g.angular.dphi)
    m = unit_media(g, kn)
    f = beam_trace(b, g.gamma_minus, g.spatial)
    u1 = ballistic(b, m, g, method="discrete")
    u2, _ = remainder(u1, m, g, tol=TOL)
    u, _ = solve(TransportProblem(m, g, f), TOL)
    assert np.max(np.abs(u1.values + u2.values - u.values)) <= 10 * TOL * f.max()


def test_discrete_adjoint_decomposition_is_consistent():
    g = build_grids(16, 16, 16)
    b = x_beam(g, 2 * g.angular.dphi)
    m = unit_media(g, 0.5)
    gg = beam_trace(b, g.gamma_plus, g.spatial)
    v1 = ballistic(b, m, g, "adjoint", "discrete")
    v2, _ = remainder(v1, m, g, "adjoint", tol=TOL)
    v, _ = solve(TransportProblem(m, g, gg, direction_sign="adjoint"), TOL)
    assert np.max(np.abs(v1.values + v2.values - v.values)) <= 10 * TOL * gg.max()


def test_golden_scattered_average(fig_grids):
    g = fig_grids
    b = x_beam(g, 2 * np.pi / 25)
    parts, _, reps = decompose(b, b, unit_media(g, 1.0), g, TOL)
    golden, grid = load_field_csv(DATA / "u2_avg_kn1_h2pi25.csv")
    assert grid.same_as(g.spatial)
    got = parts["u2"].average()
    assert np.max(np.abs(got - golden)) <= 1e-8 * np.max(np.abs(golden))


def test_closed_form_u1v1_near_exp_minus_chord():
    g = build_grids(33, 33, 400)
    b = x_beam(g, 2 * g.angular.dphi)
    val, logv = u1v1_closed(b, b, unit_media(g), g)
    assert val[16, 16] == pytest.approx(np.exp(-1), rel=0.01)
    assert np.allclose(np.exp(logv), val)


def test_closed_form_matches_quadrature_of_exact_parts(small_grids):
    g = small_grids
    b = x_beam(g, 3 * g.angular.dphi)
    m = unit_media(g, 0.5)
    u1 = ballistic(b, m, g)
    v1 = ballistic(b, m, g, "adjoint")
    val, _ = u1v1_closed(b, b, m, g)
    assert np.allclose(val, g.angular.average(u1.values * v1.values), rtol=1e-12)


def test_products_with_zero_remainder(small_grids):
    g = small_grids
    b = x_beam(g, 2 * g.angular.dphi)
    m = unit_media(g)
    u1 = ballistic(b, m, g)
    v1 = ballistic(b, m, g, "adjoint")
    zero = PhaseSpaceField(np.zeros_like(u1.values), g.spatial, g.angular)
    pr = angular_products(u1, u1, v1, zero)
    assert np.all(pr["u1v2"] == 0) and np.all(pr["u2v2"] == 0)
    assert np.all(pr["u1.v2"] == 0)
    assert set(pr) == {f"u{j}{s}v{k}" for j in (1, 2) for k in (1, 2) for s in ("", ".")}


def test_average_ballistic_scales_like_sqrt_h():
    g = build_grids(16, 16, 400)
    m = unit_media(g)
    sup = [ballistic(x_beam(g, c * g.angular.dphi), m, g).average().max() for c in (4, 8)]
    assert sup[1] / sup[0] == pytest.approx(np.sqrt(2), rel=0.15)


def test_scattered_product_halves_with_h():
    g = build_grids(32, 32, 200)
    m = unit_media(g)
    sups = []
    for c in (8, 4):
        b = x_beam(g, c * g.angular.dphi)
        _, pr, _ = decompose(b, b, m, g, TOL)
        sups.append(pr["u2v2"].max())
    assert 0.375 <= sups[1] / sups[0] <= 0.625


def test_adjoint_ballistic_mirror_symmetry():
    g = build_grids(16, 12, 24)
    x, y = g.spatial.centers()
    sig = 1 + 0.5 * np.cos(np.pi * (x - 0.5)) * (1 + y)  # even under x -> 1 - x
    m = MediaCoefficients(0.0, sig, 0.5, g.spatial)
    p = Patch("left", 0.5, 0.3)
    f = make_beam((1, 0), 3 * g.angular.dphi, g.angular, p)
    gb = f.with_region(p.mirrored())
    u1 = ballistic(f, m, g).values
    v1 = ballistic(gb, m, g, "adjoint").values
    n = g.angular.n_dirs
    rev = g.angular.reverse
    mirror = (n // 2 - np.arange(n)) % n
    assert np.allclose(v1[rev], u1[mirror][:, ::-1, :], rtol=1e-12, atol=0)

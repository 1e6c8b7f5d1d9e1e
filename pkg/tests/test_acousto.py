import numpy as np
import pytest

from acoustoptic.acousto import (InternalField, MeasurementError, MeasurementSet, Measurer, internal_direct,
                                 first_order_ratios, recover_H, synthesize)
from acoustoptic.decomposition import angular_products, ballistic, remainder, u1v1_closed
from acoustoptic.geometry import SpatialGrid, build_grids
from acoustoptic.media import MediaCoefficients, beam_trace, profile
from acoustoptic.transport import PhaseSpaceField, TransportProblem, solve

from conftest import unit_media, x_beam

TOL = 1e-10


@pytest.fixture(scope="module")
def setup():
    g = build_grids(24, 24, 32)
    b = x_beam(g, 2 * g.angular.dphi)
    f = beam_trace(b, g.gamma_minus, g.spatial)
    gg = beam_trace(b, g.gamma_plus, g.spatial)
    return g, b, f, gg


def _solves(g, m, f, gg):
    u, _ = solve(TransportProblem(m, g, f), TOL)
    v, _ = solve(TransportProblem(m, g, gg, direction_sign="adjoint"), TOL)
    return u, v


def test_internal_isotropic_cases(small_grids):
    g = small_grids
    one = PhaseSpaceField(np.ones((16, 12, 12)), g.spatial, g.angular)
    assert np.allclose(internal_direct(one, one, unit_media(g, 0.5)).values, 0.0, atol=1e-15)
    m = MediaCoefficients(0.4, 1.0, 0.5, g.spatial)
    assert np.allclose(internal_direct(one, one, m).values, -0.5 * 0.4, rtol=1e-13)


def test_internal_equals_decomposition_expansion(setup):
    g, b, f, gg = setup
    m = unit_media(g, 0.5)
    u, v = _solves(g, m, f, gg)
    u1 = ballistic(b, m, g, method="discrete")
    v1 = ballistic(b, m, g, "adjoint", "discrete")
    u2, _ = remainder(u1, m, g, tol=TOL)
    v2, _ = remainder(v1, m, g, "adjoint", tol=TOL)
    pr = angular_products(u1, u2, v1, v2)
    avg = sum(pr[f"u{j}.v{k}"] for j in (1, 2) for k in (1, 2))
    prod = sum(pr[f"u{j}v{k}"] for j in (1, 2) for k in (1, 2))
    expanded = (m.sigma_s / m.kn) * avg - (m.sigma / m.kn) * prod
    H = internal_direct(u, v, m).values
    assert np.max(np.abs(H - expanded)) <= 1e-8 * np.max(np.abs(H))


def test_ballistic_term_leads_internal_data(setup):
    g, b, f, gg = setup
    m = unit_media(g, 1.0)
    u, v = _solves(g, m, f, gg)
    H = internal_direct(u, v, m).values
    lead = m.sigma / m.kn * u1v1_closed(b, b, m, g)[0]
    assert np.max(np.abs(H + lead)) <= 0.25 * np.max(lead)


def test_boundary_term_zero_without_modulation(setup):
    g, _, f, gg = setup
    me = Measurer(unit_media(g), g, f, gg, TOL)
    assert abs(me.boundary_term(0.0, (0.0, 0.0)).value) <= 10 * TOL * f.max() * gg.max()


@pytest.mark.parametrize("q", [(0.0, 0.0), (2 * np.pi, 0.0)])
def test_boundary_term_first_order_in_eps(setup, q):
    g, _, f, gg = setup
    me = Measurer(unit_media(g), g, f, gg, TOL)
    eps = 1e-2
    r1 = me.boundary_term(eps, q).value / eps
    r2 = me.boundary_term(eps / 2, q).value / (eps / 2)
    assert abs(r1 / r2 - 1) <= 2 * eps


def test_zero_frequency_matches_integral_of_H(setup):
    g, _, f, gg = setup
    m = unit_media(g)
    u, v = _solves(g, m, f, gg)
    eps = 1e-2
    bt = Measurer(m, g, f, gg, TOL).boundary_term(eps, (0.0, 0.0)).value
    leading = eps * 2 * np.pi * internal_direct(u, v, m).integral()
    assert bt == pytest.approx(leading, rel=eps)


def test_phase_parity_under_q_reflection(setup):
    g, _, f, gg = setup
    ss = profile("gaussian-bump", g.spatial, center=(0.3, 0.6))
    me = Measurer(MediaCoefficients(0.0, ss, 1.0, g.spatial), g, f, gg, TOL)
    eps, q = 1e-2, (2 * np.pi, 0.0)
    s1 = me.boundary_term(eps, q, "sin").value
    s2 = me.boundary_term(eps, (-q[0], -q[1]), "sin").value
    assert np.sign(s1) == -np.sign(s2)
    assert abs(s1 + s2) <= 5 * eps * abs(s1)
    c1 = me.boundary_term(eps, q, "cos").value
    c2 = me.boundary_term(eps, (-q[0], -q[1]), "cos").value
    assert c1 == c2


def test_tiny_boundary_terms_flagged(setup):
    g, _, f, gg = setup
    me = Measurer(unit_media(g), g, f, gg, TOL)
    assert not me.boundary_term(1e-12, (2 * np.pi, 2 * np.pi), "sin").reliable
    assert me.boundary_term(1e-2, (0.0, 0.0)).reliable


def test_lattice_is_identical_across_workers(setup):
    g, _, f, gg = setup
    m = unit_media(g)
    a = Measurer(m, g, f, gg, TOL).measure_lattice(1, 1e-2, workers=1)
    b = Measurer(m, g, f, gg, TOL).measure_lattice(1, 1e-2, workers=4)
    assert a.rows == b.rows


def _bandlimited(sp, rng, order):
    x, y = sp.centers()
    h = np.zeros(sp.shape)
    for kx in range(-order, order + 1):
        for ky in range(-order, order + 1):
            a, c = rng.normal(size=2)
            arg = 2 * np.pi * (kx * x / sp.lx + ky * y / sp.ly)
            h += a * np.cos(arg) + c * np.sin(arg)
    return h


@pytest.mark.parametrize("order", [1, 3, 8])
def test_synthetic_recovery_exact(order):
    sp = SpatialGrid(40, 36, 1.0, 1.5)
    h = _bandlimited(sp, np.random.default_rng(order), order)
    rec = recover_H(synthesize(h, sp, order, 1e-2), sp)
    assert np.max(np.abs(rec.values - h)) <= 1e-12 * np.max(np.abs(h))
    assert rec.metadata["imag_residue"] <= 1e-10
    assert rec.metadata["sin_phase_extension"]
    assert rec.provenance == "fourier"


def test_recovery_improves_with_order():
    sp = SpatialGrid(64, 64)
    x, y = sp.centers()
    h = np.exp(np.cos(2 * np.pi * x) + 0.5 * np.sin(2 * np.pi * y))
    errs = [np.linalg.norm(recover_H(synthesize(h, sp, k, 1e-2), sp).values - h) for k in (1, 2, 4, 8)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_missing_lattice_points_rejected():
    sp = SpatialGrid(8, 8)
    ms = synthesize(np.ones(sp.shape), sp, 2, 1e-2, phases=("cos",))
    with pytest.raises(MeasurementError, match="sin"):
        recover_H(ms, sp)
    ms = synthesize(np.ones(sp.shape), sp, 1, 1e-2)
    with pytest.raises(MeasurementError, match="missing"):
        recover_H(ms, sp, order=2)


def test_truncation_below_available_is_recorded():
    sp = SpatialGrid(8, 8)
    rec = recover_H(synthesize(np.ones(sp.shape), sp, 2, 1e-2), sp, order=1)
    assert rec.metadata["truncated_below_available"]


def test_off_lattice_wavevector_rejected():
    ms = MeasurementSet([(1.0, 0.0, "cos", 1e-2, 0.1)], 1e-2)
    with pytest.raises(MeasurementError, match="lattice"):
        ms.lattice()


def test_measurement_csv_roundtrip(tmp_path):
    sp = SpatialGrid(8, 8)
    ms = synthesize(np.random.default_rng(0).normal(size=sp.shape), sp, 1, 1e-2)
    ms.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "qx,qy,phase,eps,bt_value"
    back = MeasurementSet.from_csv(tmp_path / "m.csv")
    assert back.rows == ms.rows and back.eps == ms.eps


def test_measurement_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="absent.csv"):
        MeasurementSet.from_csv(tmp_path / "absent.csv")
    p = tmp_path / "mixed.csv"
    p.write_text("qx,qy,phase,eps,bt_value\n0,0,cos,0.01,1\n0,0,sin,0.02,1\n")
    with pytest.raises(MeasurementError, match="mixes"):
        MeasurementSet.from_csv(p)


def test_internal_field_validation():
    sp = SpatialGrid(4, 4)
    with pytest.raises(MeasurementError):
        InternalField(np.ones((3, 4)), sp)
    with pytest.raises(MeasurementError):
        InternalField(np.full((4, 4), np.inf), sp)


def test_first_order_zero_eps_and_order(small_grids):
    g = small_grids
    f = beam_trace(x_beam(g, 2 * g.angular.dphi), g.gamma_minus, g.spatial)
    out = first_order_ratios(f, [1e-2, 0.0], (2 * np.pi, 0), unit_media(g), g)
    assert out[1] == 0.0 and out[0] > 0
    with pytest.raises(MeasurementError):
        first_order_ratios(f, [1e-3, 1e-2], (2 * np.pi, 0), unit_media(g), g)


@pytest.mark.parametrize("kn", [1.0, 0.25])
def test_first_order_ratios_constant(kn):
    g = build_grids(24, 24, 32)
    f = beam_trace(x_beam(g, 2 * g.angular.dphi), g.gamma_minus, g.spatial)
    r = first_order_ratios(f, [1e-2, 5e-3, 2.5e-3], (2 * np.pi, 0), unit_media(g, kn), g)
    assert all(np.isfinite(r))
    assert max(r) / min(r) <= 1.2

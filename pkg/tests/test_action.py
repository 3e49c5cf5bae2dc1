import numpy as np
import pytest

from husimiflow.action import (Label, VariationProfile, apply_admissible_variation, evaluate_action,
                               prepare_action, stationarity_scan, variation_identity_check)
from husimiflow.dynamics import propagate
from husimiflow.errors import MaskDominates, RepresentationError
from husimiflow.flux import GaugeSpec
from husimiflow.grid import Field
from husimiflow.states import coherent_husimi, coherent_wigner, fock_husimi
from husimiflow.symbols import PolySymbol, parse_poly

LABELS = [parse_poly("1"), parse_poly("x"), parse_poly("p")]


@pytest.fixture(scope="module")
def short_run(g64, ho):
    return propagate(ho, coherent_husimi(g64, (1.0, 0.0)), 1.0, 1e-3, 10)


def test_profile_validation():
    VariationProfile((1.0, 0.0), 0.0, 1.0, "bump")
    with pytest.raises(ValueError):
        VariationProfile((1.0, 0.0), 1.0, 1.0)
    with pytest.raises(ValueError):
        VariationProfile((1.0, 0.0), 0.0, 1.0, "square")
    with pytest.raises(ValueError):
        VariationProfile((1.0, 0.0), 0.0, 1.0, (np.cos, lambda s: -np.sin(s)))


def test_profile_rate_is_derivative():
    prof = VariationProfile((0.6, 0.8), 0.0, 2.0, "sine", 0.1)
    t, h = 0.7, 1e-6
    fd = (prof.delta(t + h) - prof.delta(t - h)) / (2 * h)
    assert np.allclose(fd, prof.rate(t), atol=1e-8)


def test_label_basis_must_not_be_empty(short_run):
    with pytest.raises(ValueError):
        prepare_action(short_run, labels=[])


def test_action_needs_husimi_kind(g64, ho):
    tr = propagate(ho, coherent_wigner(g64, (1.0, 0.0)), 0.05, 1e-3, 10)
    with pytest.raises(RepresentationError):
        prepare_action(tr)


def test_zero_hamiltonian_gives_zero_action(g64):
    zero = PolySymbol.constant(1, 0.0)
    tr = propagate(zero, coherent_husimi(g64, (0.5, 0.0)), 0.1, 1e-2, 1)
    res = evaluate_action(tr, labels=[parse_poly("1")])
    assert abs(res.S[0]) < 1e-14


def test_ground_state_kinetic_term(g64, ho):
    T = 0.5
    tr = propagate(ho, fock_husimi(g64, 0), T, 1e-2, 5)
    res = evaluate_action(tr, labels=[parse_poly("1")])
    # half-speed rotation: p . V = p^2 / 2, and <p^2> = 1 for the Husimi ground state;
    # the masked tail is left out of the kinetic term
    assert abs(res.kinetic[0] - T / 2) < 1e-6
    assert res.mask_share < 1e-6


def test_joint_translation_invariance(g64):
    free = parse_poly("0.5*p^2")
    d = 0.7
    a = propagate(free, coherent_husimi(g64, (0.0, 0.5)), 0.5, 1e-3, 25)
    b = propagate(free, coherent_husimi(g64, (d, 0.5)), 0.5, 1e-3, 25)
    X, P = g64.coords()
    la = [Label("x", parse_poly("x")), Label("g", Field(g64, np.exp(-0.5 * (X**2 + (P - 0.5) ** 2))))]
    lb = [Label("x", parse_poly(f"x - {d}")), Label("g", Field(g64, np.exp(-0.5 * ((X - d) ** 2 + (P - 0.5) ** 2))))]
    Sa = evaluate_action(a, labels=la).S
    Sb = evaluate_action(b, labels=lb).S
    assert np.abs(Sa - Sb).max() < 1e-8


def test_default_gauge_is_stationary(short_run):
    scan = stationarity_scan(short_run, GaugeSpec(), labels=LABELS)
    assert scan.all_pass, scan.fits
    assert scan.mask_share < 1e-3


def test_wrong_generator_is_not_stationary(short_run, ho):
    rec = prepare_action(short_run, GaugeSpec(), LABELS, h=ho * 1.02)
    scan = stationarity_scan(short_run, GaugeSpec(), record=rec)
    assert not scan.fits["x"]["pass"] or not scan.fits["p"]["pass"]


def test_stationarity_csv(tmp_path, short_run):
    scan = stationarity_scan(short_run, labels=[parse_poly("x")], eps_list=(0.01, 0.005))
    lines = scan.write_csv(tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "label,gauge,epsilon,dS,fit_a,fit_b,pass"
    assert len(lines) == 1 + 3


def test_scan_needs_two_eps(short_run):
    with pytest.raises(ValueError):
        stationarity_scan(short_run, labels=LABELS, eps_list=(0.01, 0.0))


def test_mask_dominates(short_run):
    with pytest.raises(MaskDominates):
        prepare_action(short_run, labels=LABELS, floor=0.5)


def test_admissible_variation_translates_record(short_run):
    prof = VariationProfile((1.0, 0.0), 0.0, 1.0, "sine", 0.1)
    var = apply_admissible_variation(short_run, GaugeSpec(), prof, labels=[parse_poly("x")])
    k = len(var.times) // 2
    dz = prof.delta(var.times[k])
    s0, s1 = short_run.states[k], var.states[k]
    m0 = np.sum(s0.values) * s0.grid.dV
    m1 = np.sum(s1.values) * s1.grid.dV
    assert abs(m1 - m0) < 1e-12
    X, _ = s0.grid.coords()
    mean_x = np.sum(X * s1.values) * s1.grid.dV - np.sum(X * s0.values) * s0.grid.dV
    assert abs(mean_x - dz[0]) < 1e-10
    assert np.allclose(var.labels[0][0], np.broadcast_to(X, s0.grid.shape))


def test_variation_identity_and_step_order(g64):
    q = coherent_husimi(g64, (0.5, 0.2))
    X, P = g64.coords()
    labels = [Label("x", parse_poly("x")), Label("bump", Field(g64, np.exp(-0.5 * ((X - 0.3) ** 2 + P**2))))]
    op = parse_poly("x^3*p + p^2")
    r, det = variation_identity_check(labels, op, q, (0.6, 0.8), h_fd=0.1, return_details=True)
    assert abs(det["residual_h"] / r - 4.0) < 0.05
    assert variation_identity_check(labels, op, q, (0.6, 0.8), h_fd=1e-4) < 1e-8
    small = variation_identity_check(labels, parse_poly("x^2 + x*p"), q, (0.6, 0.8))
    assert small < 1e-8

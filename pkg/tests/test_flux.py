import numpy as np
import pytest

from husimiflow.dynamics import propagate
from husimiflow.errors import KindError, LengthMismatch, RepresentationError
from husimiflow.flux import (GaugeSpec, advect_labels, continuity_residual, default_flux, gauge_flux,
                             internal_gauge_shift, trace_parcels, trajectory_fluxes, velocity_from_flux)
from husimiflow.grid import Field
from husimiflow.states import coherent_husimi, coherent_wigner, fock_husimi
from husimiflow.symbols import parse_poly


@pytest.fixture(scope="module")
def ho_run(g64, ho):
    return propagate(ho, coherent_husimi(g64, (1.0, 0.0)), 0.5, 1e-3, 25)


def test_ground_state_velocity_is_half_rotation(g64, ho):
    q = fock_husimi(g64, 0)
    v = velocity_from_flux(default_flux(ho, q), q)
    X, P = g64.coords()
    ok = ~v.mask
    assert ok.mean() > 0.25
    assert np.abs(v.components[0].values - P / 2)[ok].max() < 1e-6
    assert np.abs(v.components[1].values + X / 2)[ok].max() < 1e-6


def test_flux_needs_husimi(g64, ho):
    with pytest.raises(RepresentationError):
        default_flux(ho, coherent_wigner(g64, (0.0, 0.0)))


@pytest.mark.parametrize("kind", ["radial", "poisson"])
@pytest.mark.parametrize("level", [0, 1])
def test_gauges_annihilate_steady_flux(g64, ho, kind, level):
    q = fock_husimi(g64, level)
    J = default_flux(ho, q)
    assert gauge_flux(J, GaugeSpec(kind), q).max_abs() < 1e-8 * J.max_abs()


@pytest.mark.parametrize("kind", ["radial", "poisson"])
def test_gauges_keep_divergence(g64, ho, kind):
    q = coherent_husimi(g64, (1.0, 0.5))
    J = default_flux(ho, q)
    Jg = gauge_flux(J, GaugeSpec(kind), q)
    d0 = J.divergence().values
    assert np.abs(Jg.divergence().values - d0).max() < 1e-9 * np.abs(d0).max()


def test_custom_gauge_and_internal_shift(g64, ho):
    q = coherent_husimi(g64, (1.0, 0.0))
    J = default_flux(ho, q)
    X, P = g64.coords()
    A = Field(g64, 0.1 * np.exp(-(X**2 + P**2)))
    base = GaugeSpec.custom(A=A, gamma={(0, 1): Field(g64, 0.05 * np.exp(-((X - 1) ** 2 + P**2)))})
    Jb = gauge_flux(J, base, q)
    assert np.abs(Jb.divergence().values - J.divergence().values).max() < 1e-12
    for f in (np.exp(-(X**2 + P**2) / 2), np.cos(np.pi * X / 10) ** 2 * np.ones_like(P), X * P * np.exp(-(X**2 + P**2) / 4)):
        Js = gauge_flux(J, internal_gauge_shift(base, Field(g64, f)), q)
        assert np.abs(Js.array() - Jb.array()).max() < 1e-9


def test_gauge_spec_validation(g64):
    with pytest.raises(KindError):
        GaugeSpec("helmholtz")
    with pytest.raises(KindError):
        internal_gauge_shift(GaugeSpec(), Field(g64, np.zeros(g64.shape)))
    with pytest.raises(ValueError):
        GaugeSpec.custom(gamma={(1, 1): Field(g64, np.zeros(g64.shape))})


def test_continuity_and_refinement(g64, ho):
    coarse = propagate(ho, coherent_husimi(g64, (1.0, 0.0)), 0.5, 1e-3, 50)
    fine = propagate(ho, coherent_husimi(g64, (1.0, 0.0)), 0.5, 1e-3, 25)
    rc = continuity_residual(coarse, trajectory_fluxes(coarse))
    rf = continuity_residual(fine, trajectory_fluxes(fine))
    assert rf < 1e-5 and rf < 0.5 * rc


def test_continuity_length_mismatch(ho_run):
    with pytest.raises(LengthMismatch):
        continuity_residual(ho_run, trajectory_fluxes(ho_run)[:-1])


def test_parcel_circles_in_oscillator(g64, ho):
    tr = propagate(ho, fock_husimi(g64, 0), np.pi, 1e-2, 10)
    ps = trace_parcels(tr, GaugeSpec(), [[1.0, 0.0]], 1e-2)
    z = ps[0].path[-1]
    # rigid rotation at angular rate 1/2: half a turn in time 2 pi, a quarter here
    assert not ps.any_escaped()
    assert np.hypot(*z) == pytest.approx(1.0, abs=1e-6)
    assert np.arctan2(z[1], z[0]) == pytest.approx(-np.pi / 2, abs=1e-5)


def test_parcel_outside_is_flagged(g64, ho_run):
    ps = trace_parcels(ho_run, GaugeSpec(), [[9.5, 0.0]], 1e-2)
    assert ps[0].escaped and len(ps[0].points) == 1


def test_parcels_csv(tmp_path, ho_run):
    ps = trace_parcels(ho_run, GaugeSpec(), [[1.0, 0.0], [0.0, 1.0]], 0.05, labels=[7, 8])
    path = ps.write_csv(tmp_path / "parcels.csv", 1)
    lines = path.read_text().splitlines()
    assert lines[0] == "parcel_id,label,t,x,p,escaped_flag"
    assert lines[1].startswith("0,7.0,0.0,1.0,0.0,")


def test_label_advection_follows_rotation(g64, ho):
    tr = propagate(ho, fock_husimi(g64, 0), np.pi, 1e-2, 10)
    hist = advect_labels(parse_poly("x"), tr, GaugeSpec(), 5e-3)
    # the ground-state flow turns at half speed: a quarter turn maps x to -p
    X, P = g64.coords()
    err = np.abs(hist.at(-1).values - (-P + 0 * X))
    q = tr.final.values
    assert np.sum(err * q) / np.sum(np.abs(P) * q) < 1e-4
    assert err[X**2 + P**2 < 4].max() < 1e-4

"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
values; the lines are also collected into the terminal summary.
"""

import numpy as np
import pytest

from husimiflow.action import (default_labels, prepare_action, stationarity_scan,
                               variation_identity_check)
from husimiflow.bopp import (bopp_left, bopp_propagate, bopp_right, classical_limit_residual,
                             commutator_residual)
from husimiflow.config import build_state
from husimiflow.dynamics import Trajectory, propagate
from husimiflow.errors import HusimiFlowError
from husimiflow.flux import (GaugeSpec, continuity_residual, default_flux, gauge_flux, internal_gauge_shift,
                             trace_parcels, trajectory_fluxes, velocity_from_flux)
from husimiflow.grid import Field, box_grid, gaussian_smooth, make_grid
from husimiflow.scenarios import SHIPPED, evolve, gauge_spec, husimi_trajectory, load_scenario
from husimiflow.states import (Representation, State, classical_density, coherent_husimi, coherent_wigner,
                               fock_husimi, mixture, purity_residual, smooth_state)
from husimiflow.symbols import PolySymbol, parse_poly

HO = parse_poly("0.5*p^2 + 0.5*x^2")
GAUGES = ("default", "radial", "poisson")


@pytest.fixture
def report(request, capsys):
    def emit(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        with capsys.disabled():
            print("\n" + line)
        request.config._acceptance_lines.append(line)
        return ok

    return emit


def _rel(a, b):
    return float(np.abs(a - b).max() / np.abs(b).max())


def test_criterion_01_purity(report):
    g = box_grid(256, 10.0)
    rw = purity_residual(coherent_wigner(g, (0.5, -0.3)))
    rq = purity_residual(coherent_husimi(g, (0.5, -0.3)))
    rm = purity_residual(mixture([coherent_wigner(g, (-2.0, 0.0)), coherent_wigner(g, (2.0, 0.0))]))
    ok = rw < 1e-8 and rq < 1e-8 and rm > 0.1
    assert report(1, ok, f"wigner {rw:.1e}, husimi {rq:.1e} (< 1e-8); mixture {rm:.3f} (> 0.1)")


def test_criterion_02_quadratic_coincidence(report):
    g = box_grid(64, 10.0)
    T = 2 * np.pi
    tw = propagate(HO, coherent_wigner(g, (1.0, 0.0)), T, 1e-3, 100)
    tc = propagate(HO, classical_density(g, (1.0, 0.0)), T, 1e-3, 100)
    d = max(_rel(a.values, b.values) for a, b in zip(tw.states, tc.states))
    mx = tw.observable(parse_poly("x"))
    e = float(np.abs(mx - np.cos(np.asarray(tw.times))).max())
    ok = d < 1e-10 and e < 1e-6
    assert report(2, ok, f"wigner vs classical {d:.1e} (< 1e-10); <x> - cos t {e:.1e} (< 1e-6)")


def _commutation_error(h, w0, T, dt, save_every):
    a = propagate(h, w0, T, dt, save_every)
    b = propagate(h, smooth_state(w0), T, dt, save_every)
    return max(_rel(gaussian_smooth(sa.field).values, sb.values) for sa, sb in zip(a.states, b.states))


def test_criterion_03_smoothing_commutes(report):
    ho = load_scenario("ho_coherent")
    e_ho = _commutation_error(HO, coherent_wigner(ho.grid, (1.0, 0.0)), ho.t_final, ho.dt, ho.save_every)
    q = load_scenario("quartic")
    try:
        e_q = _commutation_error(q.hamiltonian, build_state(q), q.t_final, q.dt, q.save_every)
        q_txt = f"{e_q:.1e}"
    except HusimiFlowError as e:
        e_q, q_txt = np.inf, f"direct smoothed run aborted ({type(e).__name__}: {e})"
    ok = e_ho < 1e-7 and e_q < 1e-7
    assert report(3, ok, f"oscillator {e_ho:.1e}, quartic {q_txt} (< 1e-7)")


def test_criterion_04_ground_state_circulation(report):
    g = box_grid(64, 10.0)
    q0 = fock_husimi(g, 0)
    v = velocity_from_flux(default_flux(HO, q0), q0)
    X, P = g.coords()
    ok_nodes = ~v.mask
    ev = max(float(np.abs(v.components[0].values - P / 2)[ok_nodes].max()),
             float(np.abs(v.components[1].values + X / 2)[ok_nodes].max()))
    tr = propagate(HO, q0, 2 * np.pi, 1e-2, 10)
    ps = trace_parcels(tr, GaugeSpec(), [[1.0, 0.0]], 1e-2)
    z = ps[0].path[-1]
    er = abs(np.hypot(*z) - 1.0)
    ang = np.arctan2(z[1], z[0])
    ea = abs((ang + np.pi + np.pi) % (2 * np.pi) - np.pi)
    ok = ev < 1e-6 and er < 1e-4 and ea < 5e-3 and not ps.any_escaped()
    assert report(4, ok, f"velocity {ev:.1e} (< 1e-6); parcel radius {er:.1e} (< 1e-4), angle {ea:.1e} (< 5e-3)")


def test_criterion_05_gauges_annihilate_steady_flux(report):
    g = box_grid(64, 10.0)
    steady = 0.0
    for n in (0, 1):
        q = fock_husimi(g, n)
        J = default_flux(HO, q)
        for kind in ("radial", "poisson"):
            steady = max(steady, gauge_flux(J, GaugeSpec(kind), q).max_abs() / J.max_abs())
    div = 0.0
    tr = propagate(HO, coherent_husimi(g, (1.0, 0.0)), 1.0, 1e-3, 250)
    qcfg = load_scenario("quartic")
    tq = husimi_trajectory(evolve(qcfg, t_final=0.2, save_every=400))
    for h, traj in ((HO, tr), (qcfg.hamiltonian, tq)):
        for t, s in zip(traj.times, traj.states):
            J = default_flux(h, s, t)
            d0 = J.divergence().values
            for kind in ("radial", "poisson"):
                div = max(div, float(np.abs(gauge_flux(J, GaugeSpec(kind), s).divergence().values - d0).max()))
    ok = steady < 1e-8 and div < 1e-9
    assert report(5, ok, f"steady gauge flux {steady:.1e} of default (< 1e-8); div J' - div J {div:.1e} (< 1e-9)")


def test_criterion_06_continuity(report):
    worst, parts, halving = 0.0, [], True
    for name in SHIPPED:
        cfg = load_scenario(name)
        full = husimi_trajectory(evolve(cfg))
        # refinement on a shorter horizon; save_every is kept, so the save spacing halves with dt
        k = min(len(full.times), 21)
        t_ref = full.times[k - 1]
        coarse = Trajectory(list(full.times[:k]), list(full.states[:k]), full.hamiltonian, full.meta)
        fine = husimi_trajectory(evolve(cfg, t_final=t_ref, dt=cfg.dt / 2))
        for kind in GAUGES:
            gs = gauge_spec(cfg, kind)
            r = continuity_residual(full, trajectory_fluxes(full, cfg.hamiltonian, gs))
            rc = continuity_residual(coarse, trajectory_fluxes(coarse, cfg.hamiltonian, gs))
            rf = continuity_residual(fine, trajectory_fluxes(fine, cfg.hamiltonian, gs))
            worst = max(worst, r)
            halving = halving and (rf <= 0.5 * rc or rf < 1e-12)
            parts.append(f"{name}/{kind} {r:.1e} (refine {rc:.1e}->{rf:.1e})")
    ok = worst < 1e-5 and halving
    assert report(6, ok, f"max {worst:.1e} (< 1e-5), halving under dt/2 {'yes' if halving else 'no'}; "
                          + ", ".join(parts))


def _scan(traj, kind):
    rec = prepare_action(traj, GaugeSpec(kind))
    return stationarity_scan(traj, GaugeSpec(kind), record=rec)


def _worst(scan):
    return max(abs(f["a"]) / f["threshold"] * 1e-4 for f in scan.fits.values())


def test_criterion_07_stationarity(report):
    cfg = load_scenario("ho_coherent")
    tr = evolve(cfg)
    d = _scan(tr, "default")
    p = _scan(tr, "poisson")
    # corrupted trajectory: driven by a 2% stiffer oscillator, scored against the true one
    bad = propagate(1.02 * HO, build_state(cfg), cfg.t_final, cfg.dt, cfg.save_every)
    c = stationarity_scan(bad, GaugeSpec(), record=prepare_action(bad, GaugeSpec(), h=HO))
    # a 50x step stays within RK4 accuracy here, so it is reported but does not gate
    coarse = evolve(cfg, dt=50 * cfg.dt, save_every=1)
    k = _scan(coarse, "default")
    ok = d.all_pass and p.all_pass and not c.all_pass
    detail = (f"worst |a|/threshold x 1e-4: default {_worst(d):.1e}, poisson {_worst(p):.1e} "
              f"(flux mask share {p.flux_mask_share:.2f}); corrupted control {_worst(c):.1e} "
              f"({'fails' if not c.all_pass else 'passes'}); 50x dt run {_worst(k):.1e} "
              f"({'fails' if not k.all_pass else 'passes'})")
    assert report(7, ok, detail)


def test_criterion_08_variation_identity(report):
    worst, order_ok, ratios = 0.0, True, []
    for name in SHIPPED:
        cfg = load_scenario(name)
        s = build_state(cfg)
        if not s.representation.is_husimi_kind:
            s = smooth_state(s)
        labels = default_labels(cfg.grid)
        for op in (cfg.hamiltonian, parse_poly("x"), parse_poly("p"), parse_poly("x*p")):
            for dz in ((1.0, 0.0), (0.6, 0.8)):
                worst = max(worst, variation_identity_check(labels, op, s, dz, h_fd=1e-4))
                r, det = variation_identity_check(labels, op, s, dz, h_fd=0.1, return_details=True)
                if r > 1e-10:
                    ratio = det["residual_h"] / r
                    ratios.append(ratio)
                    order_ok = order_ok and abs(ratio - 4.0) < 0.4
    ok = worst < 1e-8 and order_ok
    rtxt = f"{min(ratios):.3f}..{max(ratios):.3f}" if ratios else "exact"
    assert report(8, ok, f"residual {worst:.1e} (< 1e-8); step-halving ratio {rtxt} (4 +- 0.4)")


def test_criterion_09_bopp(report):
    g = box_grid(64, 10.0)
    X, P = g.coords()
    psi = Field(g, np.exp(-((X - 0.3) ** 2 + (P + 0.2) ** 2) / 2 + 0.4j * X))
    x, p = PolySymbol.x(), PolySymbol.p()
    comm = max(commutator_residual(a, b, [psi]) for a, b in ((bopp_left(x), bopp_left(p)),
                                                              (bopp_right(x), bopp_right(p)),
                                                              (bopp_left(x), bopp_right(p)),
                                                              (bopp_left(p), bopp_right(x))))
    w0 = coherent_wigner(g, (1.0, 0.0))
    hist = bopp_propagate(HO, w0, 2 * np.pi, 1e-3, 1000)
    tw = propagate(HO, w0, 2 * np.pi, 1e-3, 1000)
    prop = _rel(hist.final.values, tw.final.values * np.sqrt(2 * np.pi))
    gq = make_grid([(64, -7.0, 7.0), (64, -12.0, 12.0)])
    hq = parse_poly("0.5*p^2 + 0.25*x^4")
    wq = coherent_wigner(gq, (0.5, 0.0))
    propq = _rel(bopp_propagate(hq, wq, 0.1, 1e-4, 1000).final.values,
                 propagate(hq, wq, 0.1, 1e-4, 1000).final.values * np.sqrt(2 * np.pi))
    cl = [v for _, v in classical_limit_residual(parse_poly("0.5*p^2 + x^3"),
                                                 Field(g, coherent_wigner(g, (0.5, 0.3)).values.astype(complex)),
                                                 [1.0, 0.5, 0.25, 0.125])]
    ratios = [b / a for a, b in zip(cl, cl[1:])]
    ok = comm < 1e-10 and max(prop, propq) < 1e-8 and all(abs(r - 0.25) < 0.025 for r in ratios)
    assert report(9, ok, f"commutators {comm:.1e} (< 1e-10); propagation oscillator {prop:.1e}, quartic "
                         f"{propq:.1e} (< 1e-8); classical-limit ratios {', '.join(f'{r:.4f}' for r in ratios)}")


def test_criterion_10_negativity(report):
    g = make_grid([(128, -6.0, 6.0), (128, -20.0, 20.0)])
    h = parse_poly("0.5*p^2 + 0.25*x^4")
    tw = propagate(h, coherent_wigner(g, (0.0, 0.0)), 2.0, 2.5e-4, 200)
    wmin = min(float(s.values.min()) for s in tw.states)
    qrel = min(float(q.values.min() / q.values.max()) for q in (smooth_state(State(s.field, Representation.WIGNER, {}))
                                                                  for s in tw.states))
    ok = wmin < -1e-3 and qrel >= -1e-10
    assert report(10, ok, f"min W {wmin:.2e} (< -1e-3); min Q / max Q {qrel:.1e} (>= -1e-10)")


def test_criterion_11_internal_gauge(report):
    g = box_grid(64, 10.0)
    X, P = g.coords()
    q = coherent_husimi(g, (1.0, 0.0))
    J = default_flux(HO, q)
    base = GaugeSpec.custom(A=Field(g, 0.1 * np.exp(-(X**2 + P**2))))
    J0 = gauge_flux(J, base, q).array()
    shifts = (np.exp(-((X - 1) ** 2 + P**2) / 2),
              0.3 * np.sin(2 * np.pi * X / 20) * np.cos(2 * np.pi * P / 20),
              (X * P) * np.exp(-(X**2 + P**2) / 4))
    err = max(float(np.abs(gauge_flux(J, internal_gauge_shift(base, Field(g, f + 0 * X)), q).array() - J0).max())
              for f in shifts)
    ok = err < 1e-9
    assert report(11, ok, f"max pointwise flux change {err:.1e} over three shifts (< 1e-9)")

"""Default invariant suite: small, fast instances of the package's core identities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action import Label, variation_identity_check
from .bopp import bopp_left, commutator_residual
from .dynamics import propagate
from .flux import GaugeSpec, default_flux, gauge_flux, internal_gauge_shift, velocity_from_flux
from .grid import Field, box_grid, gaussian_smooth
from .states import (classical_density, coherent_husimi, coherent_wigner, fock_husimi,
                     mixture, purity_residual, smooth_state)
from .symbols import PolySymbol, parse_poly

HO = "0.5*p^2 + 0.5*x^2"


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    below: bool = True  # pass when value < threshold; otherwise value > threshold

    @property
    def passed(self) -> bool:
        ok = self.value < self.threshold if self.below else self.value > self.threshold
        return bool(np.isfinite(self.value) and ok)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "threshold": self.threshold,
                "relation": "<" if self.below else ">", "pass": self.passed}


def _rel(a, b) -> float:
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / np.abs(np.asarray(b)).max())


def check_purity() -> list[Check]:
    g = box_grid(64, 10)
    w = coherent_wigner(g, (0.5, -0.3))
    q = coherent_husimi(g, (0.5, -0.3))
    m = mixture([coherent_wigner(g, (-2.0, 0.0)), coherent_wigner(g, (2.0, 0.0))])
    return [Check("purity_coherent_wigner", purity_residual(w), 1e-8),
            Check("purity_coherent_husimi", purity_residual(q), 1e-8),
            Check("purity_mixture_detected", purity_residual(m), 0.1, below=False)]


def check_quadratic_coincidence() -> list[Check]:
    g = box_grid(64, 10)
    h = parse_poly(HO)
    tw = propagate(h, coherent_wigner(g, (1.0, 0.0)), 1.0, 1e-3, 1000)
    tc = propagate(h, classical_density(g, (1.0, 0.0)), 1.0, 1e-3, 1000)
    return [Check("wigner_equals_classical_quadratic", _rel(tw.final.values, tc.final.values), 1e-10),
            Check("mean_x_tracks_cos_t", abs(tw.observable(parse_poly("x"))[-1] - np.cos(1.0)), 1e-6)]


def check_smoothing_commutes() -> list[Check]:
    g = box_grid(64, 10)
    h = parse_poly(HO)
    w0 = coherent_wigner(g, (1.0, 0.5))
    a = gaussian_smooth(propagate(h, w0, 0.5, 1e-3, 500).final.field).values
    b = propagate(h, smooth_state(w0), 0.5, 1e-3, 500).final.values
    return [Check("smoothing_commutes_with_evolution", _rel(a, b), 1e-7)]


def check_ground_state_circulation() -> list[Check]:
    g = box_grid(64, 10)
    h = parse_poly(HO)
    q = fock_husimi(g, 0)
    vel = velocity_from_flux(default_flux(h, q), q)
    X, P = g.coords()
    ok = ~vel.mask
    err = max(float(np.abs(vel.components[0].values - P / 2)[ok].max()),
              float(np.abs(vel.components[1].values + X / 2)[ok].max()))
    return [Check("ground_state_velocity", err, 1e-6)]


def check_steady_gauges() -> list[Check]:
    g = box_grid(64, 10)
    h = parse_poly(HO)
    out = []
    for n in (0, 1):
        q = fock_husimi(g, n)
        J = default_flux(h, q)
        ref = J.max_abs()
        for kind in ("radial", "poisson"):
            Jg = gauge_flux(J, GaugeSpec(kind), q)
            out.append(Check(f"steady_{kind}_flux_fock{n}", Jg.max_abs() / ref, 1e-8))
    return out


def check_continuity() -> list[Check]:
    from .flux import continuity_residual, trajectory_fluxes

    g = box_grid(64, 10)
    h = parse_poly(HO)
    tr = propagate(h, coherent_husimi(g, (1.0, 0.0)), 0.2, 1e-3, 10)
    return [Check(f"continuity_{kind}", continuity_residual(tr, trajectory_fluxes(tr, h, GaugeSpec(kind))), 1e-5)
            for kind in ("default", "poisson")]


def check_variation_identity() -> list[Check]:
    g = box_grid(64, 10)
    q = coherent_husimi(g, (0.5, 0.2))
    labels = [Label("x", parse_poly("x")), Label("p^2", parse_poly("p^2"))]
    r = variation_identity_check(labels, parse_poly(HO), q, (0.6, 0.8))
    return [Check("variation_identity", r, 1e-8)]


def check_bopp() -> list[Check]:
    g = box_grid(64, 10)
    X, P = g.coords()
    psi = Field(g, np.exp(-((X - 0.3) ** 2 + (P + 0.2) ** 2) / 2 + 0.4j * X))
    x, p = PolySymbol.x(), PolySymbol.p()
    r = commutator_residual(bopp_left(x), bopp_left(p), [psi])
    return [Check("bopp_commutator_xp", r, 1e-10)]


def check_internal_gauge() -> list[Check]:
    g = box_grid(64, 10)
    h = parse_poly(HO)
    q = coherent_husimi(g, (1.0, 0.0))
    J = default_flux(h, q)
    X, P = g.coords()
    base = GaugeSpec.custom(A=Field(g, 0.1 * np.exp(-(X**2 + P**2))))
    J0 = gauge_flux(J, base, q)
    f = Field(g, np.exp(-((X - 1) ** 2 + P**2) / 2))
    J1 = gauge_flux(J, internal_gauge_shift(base, f), q)
    return [Check("internal_gauge_shift", float(np.abs(J1.array() - J0.array()).max()), 1e-9)]


SUITE = (check_purity, check_quadratic_coincidence, check_smoothing_commutes, check_ground_state_circulation,
         check_steady_gauges, check_continuity, check_variation_identity, check_bopp, check_internal_gauge)


def run_suite(suite=SUITE) -> list[Check]:
    out: list[Check] = []
    for fn in suite:
        out.extend(fn())
    return out

"""Husimi action functional and a-posteriori checks of its stationarity.

The action of a labelled flow is

    S[L] = int dt ( <<L p.xdot Q>> - <<L (G (.) Q)>> + <<L (z~ . Lam)>> )

with ``xdot`` the gauge velocity, ``G`` the Hamilton generator and the last
term present only for non-default gauges. Admissible variations translate
the whole record by ``dz(t)`` that vanishes at both ends.

Variations are evaluated in the co-moving frame ``y = z - dz(t)``: all
phase-space integrals are translation invariant, so the varied action only
needs the generator with its symbol shifted by ``dz`` and the kinetic factor
``(p + dp).(V + dz')``. Both are exact (the symbols are polynomials), so no
field has to be resampled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson, trapezoid

from .algebra import BidirectionalSeries, FluxField
from .bopp import PolyDiffOperator
from .errors import BoundaryLeak, MaskDominates, RepresentationError
from .flux import (
    VELOCITY_FLOOR,
    GaugeSpec,
    _grid_points,
    _spline_sample,
    advect_fields,
    default_flux,
    gauge_flux,
    transport_velocity,
    velocity_from_flux,
)
from . import grid as _g
from .grid import Field, Grid, outer_mass_fraction, translate
from .states import Representation, State
from .symbols import PolySymbol, format_poly, husimi_symbol

MASS_SHARE = 0.999
STATIONARITY_RTOL = 1e-4
LEAK_LIMIT = 1e-6

__all__ = [
    "VariationProfile",
    "Label",
    "default_labels",
    "ActionRecord",
    "prepare_action",
    "evaluate_action",
    "apply_admissible_variation",
    "stationarity_scan",
    "variation_identity_check",
]


# variation profiles -------------------------------------------------------------

_SHAPES = {
    "sine": (lambda s: np.sin(math.pi * s), lambda s: math.pi * np.cos(math.pi * s)),
    "sine2": (lambda s: np.sin(2 * math.pi * s), lambda s: 2 * math.pi * np.cos(2 * math.pi * s)),
    "bump": (lambda s: np.sin(math.pi * s) ** 2, lambda s: math.pi * np.sin(2 * math.pi * s)),
}


@dataclass(frozen=True)
class VariationProfile:
    """``dz(t) = eps * direction * f((t - t_i) / (t_f - t_i))`` with f(0) = f(1) = 0.

    ``shape`` is one of ``sine``, ``sine2``, ``bump`` or a pair of callables
    ``(f, df/ds)``. Shapes that do not vanish at both ends are rejected.
    """

    direction: tuple
    t_i: float
    t_f: float
    shape: object = "sine"
    eps: float = 1.0

    def __post_init__(self):
        if not self.t_f > self.t_i:
            raise ValueError("variation interval must have t_f > t_i")
        f, _ = self._funcs()
        ends = abs(float(f(0.0))) + abs(float(f(1.0)))
        if ends > 1e-12:
            raise ValueError("admissible variations must vanish at the initial and final times")
        object.__setattr__(self, "direction", tuple(float(d) for d in self.direction))

    def _funcs(self):
        if isinstance(self.shape, str):
            if self.shape not in _SHAPES:
                raise ValueError(f"unknown profile shape {self.shape!r}")
            return _SHAPES[self.shape]
        f, df = self.shape
        return f, df

    def scaled(self, eps: float) -> "VariationProfile":
        return VariationProfile(self.direction, self.t_i, self.t_f, self.shape, eps)

    def delta(self, t) -> np.ndarray:
        f, _ = self._funcs()
        s = (t - self.t_i) / (self.t_f - self.t_i)
        return self.eps * float(f(s)) * np.asarray(self.direction)

    def rate(self, t) -> np.ndarray:
        _, df = self._funcs()
        span = self.t_f - self.t_i
        s = (t - self.t_i) / span
        return self.eps * float(df(s)) / span * np.asarray(self.direction)


# labels -------------------------------------------------------------------------


@dataclass
class Label:
    name: str
    value: object  # PolySymbol or Field

    def sample(self, grid: Grid) -> np.ndarray:
        if isinstance(self.value, PolySymbol):
            return np.real(self.value.evaluate(grid))
        return np.asarray(self.value.values, dtype=float)


def _as_labels(labels) -> list[Label]:
    out = []
    for i, lab in enumerate(labels):
        if isinstance(lab, Label):
            out.append(lab)
        elif isinstance(lab, PolySymbol):
            out.append(Label(format_poly(lab), lab))
        elif isinstance(lab, Field):
            out.append(Label(f"field{i}", lab))
        else:
            raise TypeError(f"unsupported label {lab!r}")
    if not out:
        raise ValueError("label basis must not be empty")
    return out


def default_labels(grid: Grid, bump_center=None) -> list[Label]:
    """1, x, p, x^2, xp, p^2 (first dof) plus one off-centre Gaussian bump."""
    n = grid.n_dof
    x, p = PolySymbol.x(0, n), PolySymbol.p(0, n)
    one = PolySymbol.constant(n, 1.0)
    labels = [Label("1", one), Label("x", x), Label("p", p), Label("x^2", x * x),
              Label("x*p", x * p), Label("p^2", p * p)]
    c = np.full(grid.ndim, 0.5) if bump_center is None else np.asarray(bump_center, dtype=float)
    r2 = sum((grid.coord(a) - c[a]) ** 2 for a in range(grid.ndim))
    labels.append(Label("bump", Field(grid, np.broadcast_to(np.exp(-0.5 * r2), grid.shape).copy())))
    return labels


# record -------------------------------------------------------------------------


@dataclass
class ActionRecord:
    """Everything the action needs, sampled at the saved times of one run."""

    grid: Grid
    times: np.ndarray
    q: list  # arrays
    velocity: list  # arrays (ndim, *shape), zero on the mask
    masks: list
    vector_gauge: list | None  # Lam arrays (ndim, *shape) or None for the default gauge
    labels: list  # Label
    label_values: list  # [label][snapshot] arrays
    hamiltonian: PolySymbol
    generator: str
    gauge: str
    mask_share: float  # largest mass fraction on the mask over the record
    # meta["flux_mask_share"]: largest share of |J_gauge| on the mask; the
    # kinetic term drops it
    meta: dict = dc_field(default_factory=dict)


def _generator_name(rep: Representation) -> str:
    if rep == Representation.HUSIMI:
        return "quantum_generator"
    if rep == Representation.CLASSICAL_HUSIMI:
        return "classical_generator"
    raise RepresentationError(f"the action needs a Husimi-kind trajectory, got {rep.value}")


def prepare_action(traj, gauge: GaugeSpec | None = None, labels=None, h: PolySymbol | None = None,
                   label_dt: float | None = None, floor: float = VELOCITY_FLOOR) -> ActionRecord:
    """Fluxes, masked velocities and advected labels for every saved snapshot.

    Non-default gauges carry the vector term ``Lam = -(V Q - J_default)``,
    the divergence-free change of the effective flux.
    """
    gauge = gauge or GaugeSpec()
    grid = traj.grid
    name = _generator_name(traj.representation)
    h = traj.hamiltonian if h is None else h
    labels = _as_labels(labels if labels is not None else default_labels(grid))
    times = np.asarray(traj.times, dtype=float)
    q, vel, masks, lam, carry = [], [], [], [], []
    worst_share = flux_share = 0.0
    for t, s in zip(times, traj.states):
        J = default_flux(h, s, t)
        Jg = gauge_flux(J, gauge, s)
        v = velocity_from_flux(Jg, s, floor * float(s.values.max()))
        share = float(np.sum(np.where(v.mask, np.abs(s.values), 0.0)) / np.sum(np.abs(s.values)))
        if 1.0 - share < MASS_SHARE:
            raise MaskDominates(f"unmasked region holds only {1 - share:.6f} of the mass at t={t:.6g}")
        worst_share = max(worst_share, share)
        mag = np.sqrt(np.sum(Jg.array() ** 2, axis=0))
        if mag.sum() > 0:
            flux_share = max(flux_share, float(mag[v.mask].sum() / mag.sum()))
        V = v.array()
        q.append(np.asarray(s.values, dtype=float))
        vel.append(V)
        masks.append(v.mask)
        carry.append(transport_velocity(Jg, s, floor * float(s.values.max())))
        if gauge.kind != "default":
            lam.append(-(V * s.values - J.array()))
    if label_dt is None:
        # the label transport error floor scales with label_dt^2
        label_dt = 0.5 * float(np.min(np.diff(times))) if len(times) > 1 else 1.0
    L0 = [lab.sample(grid) for lab in labels]
    label_values = advect_fields(L0, carry, times, grid, label_dt) if len(times) > 1 else [[L] for L in L0]
    return ActionRecord(grid, times, q, vel, masks, lam if lam else None, labels, label_values,
                        h, name, gauge.kind, worst_share, {"label_dt": label_dt, "flux_mask_share": flux_share})


# action evaluation ----------------------------------------------------------------


def _time_integral(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    if len(times) < 2:
        return np.zeros(values.shape[1:])
    if len(times) < 3:
        return trapezoid(values, x=times, axis=0)
    return simpson(values, x=times, axis=0)


def _integrands(rec: ActionRecord, profile: VariationProfile | None):
    """Per-snapshot, per-label (kinetic, generator, extended) integrands in the y-frame."""
    g = rec.grid
    N = g.n_dof
    dV = g.dV
    hs = husimi_symbol(rec.hamiltonian, g)
    coords = g.coords()
    nl, nt = len(rec.labels), len(rec.times)
    kin = np.zeros((nt, nl))
    gen = np.zeros((nt, nl))
    ext = np.zeros((nt, nl))
    for k, t in enumerate(rec.times):
        dz = profile.delta(t) if profile is not None else np.zeros(g.ndim)
        dzdot = profile.rate(t) if profile is not None else np.zeros(g.ndim)
        Q, V = rec.q[k], rec.velocity[k]
        kin_field = 0.0
        for n in range(N):
            kin_field = kin_field + (coords[g.p_axis(n)] + dz[g.p_axis(n)]) * (V[n] + dzdot[n]) * Q
        gsym = hs.shift(dz) if np.any(dz) else hs
        gq = BidirectionalSeries.named(gsym, rec.generator, g).apply(Field(g, Q)).values
        gq = np.real(gq)
        ext_field = None
        if rec.vector_gauge is not None:
            lam = rec.vector_gauge[k]
            ext_field = 0.0
            for n in range(N):
                # z~ = (p, -x)
                ext_field = ext_field + (coords[g.p_axis(n)] + dz[g.p_axis(n)]) * lam[g.x_axis(n)]
                ext_field = ext_field - (coords[g.x_axis(n)] + dz[g.x_axis(n)]) * lam[g.p_axis(n)]
        for j in range(nl):
            L = rec.label_values[j][k]
            kin[k, j] = np.sum(L * kin_field) * dV
            gen[k, j] = np.sum(L * gq) * dV
            if ext_field is not None:
                ext[k, j] = np.sum(L * ext_field) * dV
    return kin, gen, ext


@dataclass
class ActionResult:
    labels: list
    S: np.ndarray
    kinetic: np.ndarray
    generator: np.ndarray
    extended: np.ndarray
    mask_share: float

    def as_dict(self) -> dict:
        return {lab.name: float(s) for lab, s in zip(self.labels, self.S)}


def evaluate_action(traj, gauge: GaugeSpec | None = None, labels=None, profile: VariationProfile | None = None,
                    record: ActionRecord | None = None) -> ActionResult:
    """Per-label action by Simpson quadrature over the saved times.

    With ``profile`` the admissibly varied record is evaluated instead.
    ``mask_share`` is the largest state mass on the velocity mask, the
    part of the kinetic term that is dropped.
    """
    rec = record if record is not None else prepare_action(traj, gauge, labels)
    kin, gen, ext = _integrands(rec, profile)
    K = _time_integral(kin, rec.times)
    G = _time_integral(gen, rec.times)
    E = _time_integral(ext, rec.times)
    return ActionResult(rec.labels, K - G + E, K, G, E, rec.mask_share)


# explicit varied record -----------------------------------------------------------


@dataclass
class VariedRecord:
    times: np.ndarray
    states: list  # translated State objects
    velocity: list  # arrays, V(z - dz) + dz'
    labels: list  # [label][snapshot] arrays


def apply_admissible_variation(traj, gauge: GaugeSpec | None, profile: VariationProfile,
                               labels=None, h=None) -> VariedRecord:
    """Translate densities (spectrally), velocities and labels by ``dz(t)``.

    The result is not a solution of the equations of motion unless
    ``eps = 0``. Labels are shifted with quintic splines since they need
    not be periodic.
    """
    gauge = gauge or GaugeSpec()
    grid = traj.grid
    h = traj.hamiltonian if h is None else h
    labs = _as_labels(labels if labels is not None else default_labels(grid))
    pts = _grid_points(grid)
    states, vel, lv = [], [], [[] for _ in labs]
    for t, s in zip(traj.times, traj.states):
        dz = profile.delta(t)
        rate = profile.rate(t)
        if not np.any(dz) and not np.any(rate):
            qs = s
            J = gauge_flux(default_flux(h, s, t), gauge, s)
            V = velocity_from_flux(J, s).array()
            states.append(qs)
            vel.append(V)
            for j, lab in enumerate(labs):
                lv[j].append(lab.sample(grid))
            continue
        qv = translate(s.field, dz)
        leak = outer_mass_fraction(qv.values, grid)
        if leak > LEAK_LIMIT:
            raise BoundaryLeak(f"translated state leaks {leak:.2e} of its mass at t={t:.6g}")
        qs = s.with_field(qv)
        J = gauge_flux(default_flux(h, s, t), gauge, s)
        Jt = FluxField(grid, tuple(translate(c, dz) for c in J.components), t)
        v = velocity_from_flux(Jt, qs)
        V = v.array() + rate.reshape((-1,) + (1,) * grid.ndim) * (~v.mask)
        states.append(qs)
        vel.append(V)
        for j, lab in enumerate(labs):
            lv[j].append(_spline_sample(lab.sample(grid), grid, pts - dz).reshape(grid.shape))
    return VariedRecord(np.asarray(traj.times, dtype=float), states, vel, lv)


# stationarity scan -------------------------------------------------------------------


@dataclass
class ScanRow:
    label: str
    gauge: str
    epsilon: float
    dS: float
    fit_a: float
    fit_b: float
    passed: bool


@dataclass
class StationarityScan:
    rows: list
    fits: dict  # label -> {"a", "b", "scale", "threshold", "pass"}
    mask_share: float
    flux_mask_share: float = 0.0

    @property
    def all_pass(self) -> bool:
        return all(f["pass"] for f in self.fits.values())

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "gauge", "epsilon", "dS", "fit_a", "fit_b", "pass"])
            for r in self.rows:
                w.writerow([r.label, r.gauge, repr(r.epsilon), repr(r.dS), repr(r.fit_a), repr(r.fit_b),
                            "true" if r.passed else "false"])
        return path


def _first_order_scale(rec: ActionRecord, profile: VariationProfile) -> np.ndarray:
    """Magnitude of the terms whose cancellation makes the first variation vanish."""
    g = rec.grid
    N = g.n_dof
    coords = g.coords()
    rows = []
    for k, t in enumerate(rec.times):
        f = profile.scaled(1.0).delta(t)
        fd = profile.scaled(1.0).rate(t)
        Q, V = rec.q[k], rec.velocity[k]
        vals = []
        for j in range(len(rec.labels)):
            L = rec.label_values[j][k]
            acc = 0.0
            for n in range(N):
                px, pp = g.x_axis(n), g.p_axis(n)
                acc += abs(f[pp]) * abs(np.sum(L * V[px] * Q))
                acc += abs(f[px]) * abs(np.sum(L * V[pp] * Q))
                acc += abs(fd[px]) * abs(np.sum(L * coords[pp] * Q))
            vals.append(acc * g.dV)
        rows.append(vals)
    return _time_integral(np.array(rows), rec.times)


def stationarity_scan(traj, gauge: GaugeSpec | None = None, labels=None, profile_shape="sine",
                      eps_list=(0.02, 0.01, 0.005), direction=None, record: ActionRecord | None = None,
                      rtol: float = STATIONARITY_RTOL) -> StationarityScan:
    """dS(eps) = S[varied] - S for each label and a fit dS = a eps + b eps^2.

    A label passes when ``|a| < rtol * max(|b| eps_min, scale)`` where
    ``scale`` is the size of the individual first-order contributions.
    """
    gauge = gauge or GaugeSpec()
    rec = record if record is not None else prepare_action(traj, gauge, labels)
    g = rec.grid
    if direction is None:
        direction = np.ones(g.ndim) / math.sqrt(g.ndim)
    base = VariationProfile(tuple(direction), float(rec.times[0]), float(rec.times[-1]), profile_shape, 1.0)
    S0 = evaluate_action(None, record=rec).S
    eps = np.array([e for e in eps_list if e != 0], dtype=float)
    if len(eps) < 2:
        raise ValueError("need at least two nonzero eps values")
    dS = np.array([evaluate_action(None, record=rec, profile=base.scaled(e)).S - S0 for e in eps])
    A = np.stack([eps, eps**2], axis=1)
    coef, *_ = np.linalg.lstsq(A, dS, rcond=None)
    scale = _first_order_scale(rec, base)
    eps_min = float(np.min(np.abs(eps)))
    rows, fits = [], {}
    for j, lab in enumerate(rec.labels):
        a, b = float(coef[0, j]), float(coef[1, j])
        thr = rtol * max(abs(b) * eps_min, float(scale[j]))
        ok = abs(a) < thr
        fits[lab.name] = {"a": a, "b": b, "scale": float(scale[j]), "threshold": thr, "pass": bool(ok)}
        rows.append(ScanRow(lab.name, gauge.kind, 0.0, 0.0, a, b, ok))
        for e, d in zip(eps, dS[:, j]):
            rows.append(ScanRow(lab.name, gauge.kind, float(e), float(d), a, b, ok))
    return StationarityScan(rows, fits, rec.mask_share, rec.meta.get("flux_mask_share", 0.0))


# variation identity --------------------------------------------------------------------


def _as_operator(op, n_dof: int) -> PolyDiffOperator:
    if isinstance(op, PolyDiffOperator):
        return op
    if isinstance(op, PolySymbol):
        return PolyDiffOperator.multiplication(op)
    raise TypeError("operator must be a PolySymbol or a PolyDiffOperator")


def _pair(L: Label, op: PolyDiffOperator, q: Field, shift) -> float:
    """<< L(z - s) [O Q(. - s)](z) >>."""
    g = q.grid
    qs = translate(q, shift) if np.any(shift) else q
    if isinstance(L.value, PolySymbol):
        Lv = np.real(L.value.shift(-np.asarray(shift)).evaluate(g))
    else:
        Lv = translate(L.value, shift).values if np.any(shift) else L.value.values
    oq = op.apply(Field(g, np.asarray(qs.values, dtype=complex))).values
    return float(np.real(np.sum(Lv * oq)) * g.dV)


def _split_translate(values: np.ndarray, grid: Grid, shift) -> tuple[np.ndarray, np.ndarray]:
    """``v(z - s) + v(z + s)`` and ``v(z - s) - v(z + s)``, the difference formed spectrally."""
    phase = np.zeros(grid.shape)
    for a, d in enumerate(shift):
        if d:
            phase = phase + grid.wavenumbers(a, nyquist=False) * d
    vh = _g.fftn(np.asarray(values, dtype=complex))
    return _g.ifftn(2 * np.cos(phase) * vh).real, _g.ifftn(-2j * np.sin(phase) * vh).real


def _pair_difference(L: Label, op: PolyDiffOperator, q: Field, shift) -> float:
    """``_pair(+shift) - _pair(-shift)`` without cancellation.

    The two translated copies are never formed separately, so FFT roundoff
    is relative to the difference rather than to the fields.
    """
    g = q.grid
    shift = np.asarray(shift, dtype=float)
    qs, qd = _split_translate(q.values, g, shift)
    if isinstance(L.value, PolySymbol):
        lp, lm = L.value.shift(-shift), L.value.shift(shift)
        ls, ld = np.real((lp + lm).evaluate(g)), np.real((lp - lm).evaluate(g))
    else:
        ls, ld = _split_translate(L.value.values, g, shift)
    os_ = op.apply(Field(g, qs.astype(complex))).values
    od = op.apply(Field(g, qd.astype(complex))).values
    return float(np.real(np.sum(0.5 * ld * os_ + 0.5 * ls * od)) * g.dV)


def variation_identity_check(labels, operator, s, dz, h_fd: float = 1e-2, return_details: bool = False):
    """max over labels of |central FD of <<L O Q>> - <<L (dz . dO/dz) Q>>|.

    The variation translates ``Q`` and ``L`` together; ``O`` keeps its
    explicit coordinate dependence. ``dz`` is a direction; the finite
    difference uses steps ``h_fd`` and ``h_fd / 2`` and the smaller-step
    value is reported.
    """
    q = s.field if isinstance(s, State) else s
    g = q.grid
    op = _as_operator(operator, g.n_dof)
    labs = _as_labels(labels)
    dz = np.asarray(dz, dtype=float)
    dop = PolyDiffOperator(g.n_dof, {})
    for a in range(g.ndim):
        if dz[a]:
            dop = dop + op.coefficient_derivative(a) * float(dz[a])
    worst, worst_h, details = 0.0, 0.0, []
    for L in labs:
        rhs = _pair(L, dop, q, np.zeros(g.ndim)) if dop.terms else 0.0

        def fd(hh):
            return _pair_difference(L, op, q, hh * dz) / (2 * hh)

        r1 = abs(fd(h_fd) - rhs)
        r2 = abs(fd(h_fd / 2) - rhs)
        details.append({"label": L.name, "rhs": rhs, "residual_h": r1, "residual_h2": r2})
        worst = max(worst, r2)
        worst_h = max(worst_h, r1)
    if return_details:
        return worst, {"residual_h": worst_h, "residual_h2": worst, "labels": details}
    return worst

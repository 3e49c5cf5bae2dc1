"""Phase-space states: constructors, purity diagnostics and expectation values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from enum import Enum

import numpy as np
from scipy.special import eval_laguerre

from . import algebra
from .errors import BoundaryLeak, CenterOutOfBox, RepresentationError, UnsupportedLevel
from .grid import Field, Grid, gaussian_smooth, outer_mass_fraction, phase_integral
from .symbols import PolySymbol, eval_on_grid, husimi_symbol

MAX_FOCK_LEVEL = 4
CONSTRUCTION_LEAK = 1e-10
PURE_TOL = 1e-6


class Representation(str, Enum):
    WIGNER = "Wigner"
    HUSIMI = "Husimi"
    CLASSICAL_DENSITY = "ClassicalDensity"
    CLASSICAL_HUSIMI = "ClassicalHusimi"

    @property
    def is_husimi_kind(self) -> bool:
        return self in (Representation.HUSIMI, Representation.CLASSICAL_HUSIMI)

    @property
    def is_quantum(self) -> bool:
        return self in (Representation.WIGNER, Representation.HUSIMI)

    @property
    def smoothed(self) -> "Representation":
        """Representation obtained by Gaussian smoothing."""
        return {
            Representation.WIGNER: Representation.HUSIMI,
            Representation.CLASSICAL_DENSITY: Representation.CLASSICAL_HUSIMI,
        }.get(self, self)


@dataclass(frozen=True, eq=False)
class State:
    field: Field
    representation: Representation
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "representation", Representation(self.representation))

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def mass(self) -> float:
        return float(phase_integral(self.field))

    def retag(self, representation) -> "State":
        return replace(self, representation=Representation(representation))

    def with_field(self, f: Field, **meta) -> "State":
        md = {k: v for k, v in self.metadata.items() if k != "gaussians"}
        md.update(meta)
        return State(f, self.representation, md)

    def check(self, norm_tol: float = 1e-9, neg_tol: float = 1e-10) -> None:
        """Raise ``ValueError`` if normalization or nonnegativity fails."""
        m = self.mass()
        if abs(m - 1) > norm_tol:
            raise ValueError(f"state mass {m!r} differs from 1 by more than {norm_tol:g}")
        if self.representation != Representation.WIGNER:
            v = self.values
            if v.min() < -neg_tol * v.max():
                raise ValueError(f"{self.representation.value} state has negative values ({v.min():.3e})")


def gaussian_terms(state: State):
    """Analytic Gaussian-mixture description carried in the metadata, if any."""
    raw = state.metadata.get("gaussians")
    if not raw:
        return None
    return [algebra.GaussianTerm(float(g["weight"]), tuple(g["mean"]), tuple(g["var"])) for g in raw]


def _gauss_meta(weight, mean, var):
    return {"weight": float(weight), "mean": [float(m) for m in mean], "var": [float(v) for v in var]}


def _per_dof(value, n_dof, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, n_dof)
    if arr.size != n_dof:
        raise ValueError(f"{name} needs {n_dof} entries")
    return arr


def _center_vector(grid: Grid, center) -> np.ndarray:
    c = np.asarray(center if center is not None else np.zeros(grid.ndim), dtype=float).ravel()
    if c.size != grid.ndim:
        raise ValueError(f"center needs {grid.ndim} coordinates (x..., p...)")
    for a, ax in enumerate(grid.axes):
        if not ax.lo <= c[a] < ax.hi:
            raise CenterOutOfBox(f"center {c[a]} outside axis {ax.name} [{ax.lo}, {ax.hi})")
    return c


def _build(grid, rep, terms, meta) -> State:
    values = algebra.gaussian_mixture_values(terms, grid)
    leak = outer_mass_fraction(values, grid)
    if leak > CONSTRUCTION_LEAK:
        raise BoundaryLeak(f"state mass outside the inner box is {leak:.2e}; enlarge the grid")
    meta = dict(meta)
    meta["gaussians"] = [_gauss_meta(t.weight, t.mean, t.var) for t in terms]
    return State(Field(grid, values), rep, meta)


def coherent_variances(grid: Grid, w_c=1.0):
    """Wigner variances ``(var_x..., var_p...)`` of the squeezed coherent state."""
    wc = _per_dof(w_c, grid.n_dof, "w_c")
    if np.any(wc <= 0):
        raise ValueError("w_c must be positive")
    hb = grid.hbar
    return tuple(wc**2 / 2) + tuple(hb**2 / (2 * wc**2))


def coherent_wigner(grid: Grid, center=None, w_c=1.0) -> State:
    """Wigner function of a squeezed coherent state (product over dofs)."""
    c = _center_vector(grid, center)
    var = coherent_variances(grid, w_c)
    term = algebra.GaussianTerm(1.0, tuple(c), var)
    return _build(grid, Representation.WIGNER, [term],
                  {"kind": "coherent_wigner", "center": c.tolist(), "w_c": _per_dof(w_c, grid.n_dof, "w_c").tolist()})


def _widths_var(grid: Grid):
    return tuple(w[0] ** 2 for w in grid.widths) + tuple(w[1] ** 2 for w in grid.widths)


def coherent_husimi(grid: Grid, center=None, w_c=1.0) -> State:
    """Husimi function of a squeezed coherent state: Wigner variances plus the smoothing widths."""
    c = _center_vector(grid, center)
    var = tuple(v + w for v, w in zip(coherent_variances(grid, w_c), _widths_var(grid)))
    term = algebra.GaussianTerm(1.0, tuple(c), var)
    return _build(grid, Representation.HUSIMI, [term],
                  {"kind": "coherent_husimi", "center": c.tolist(), "w_c": _per_dof(w_c, grid.n_dof, "w_c").tolist()})


def classical_blob(grid: Grid, center=None) -> State:
    """Minimal classical pure state: a Gaussian with the grid's smoothing widths."""
    c = _center_vector(grid, center)
    term = algebra.GaussianTerm(1.0, tuple(c), _widths_var(grid))
    return _build(grid, Representation.CLASSICAL_HUSIMI, [term], {"kind": "classical_blob", "center": c.tolist()})


def classical_density(grid: Grid, center=None, w_c=1.0) -> State:
    """Classical density with the same Gaussian profile as ``coherent_wigner``."""
    s = coherent_wigner(grid, center, w_c)
    return State(s.field, Representation.CLASSICAL_DENSITY, dict(s.metadata, kind="classical_density"))


def fock_wigner(grid: Grid, n_level: int) -> State:
    """Wigner function of the n-th harmonic-oscillator eigenstate (unit mass and frequency).

    W_n = (-1)^n / (pi hbar) * L_n(2 r^2 / hbar) * exp(-r^2 / hbar), r^2 = |x|^2 + |p|^2,
    taken as a product over degrees of freedom.
    """
    levels = np.atleast_1d(np.asarray(n_level, dtype=int))
    if levels.size == 1:
        levels = np.repeat(levels, grid.n_dof)
    if np.any(levels < 0) or np.any(levels > MAX_FOCK_LEVEL):
        raise UnsupportedLevel(f"Fock levels must lie in 0..{MAX_FOCK_LEVEL}, got {levels.tolist()}")
    hb = grid.hbar
    values = 1.0
    for n, lv in enumerate(levels):
        r2 = grid.coord(grid.x_axis(n)) ** 2 + grid.coord(grid.p_axis(n)) ** 2
        values = values * (-1) ** int(lv) / (math.pi * hb) * eval_laguerre(int(lv), 2 * r2 / hb) * np.exp(-r2 / hb)
    values = np.broadcast_to(values, grid.shape).copy()
    leak = outer_mass_fraction(values, grid)
    if leak > CONSTRUCTION_LEAK:
        raise BoundaryLeak(f"state mass outside the inner box is {leak:.2e}; enlarge the grid")
    meta = {"kind": "fock", "level": levels.tolist()}
    if np.all(levels == 0):
        meta["gaussians"] = [_gauss_meta(1.0, [0.0] * grid.ndim, [hb / 2] * grid.ndim)]
    return State(Field(grid, values), Representation.WIGNER, meta)


def smooth_state(s: State) -> State:
    """Gaussian-smooth a Wigner or classical density into its Husimi-kind counterpart."""
    if s.representation.is_husimi_kind:
        raise RepresentationError("state is already smoothed")
    out = gaussian_smooth(s.field)
    meta = {k: v for k, v in s.metadata.items() if k != "gaussians"}
    terms = gaussian_terms(s)
    if terms:
        wv = _widths_var(s.grid)
        meta["gaussians"] = [_gauss_meta(t.weight, t.mean, [v + w for v, w in zip(t.var, wv)]) for t in terms]
    return State(out, s.representation.smoothed, meta)


def fock_husimi(grid: Grid, n_level: int) -> State:
    return smooth_state(fock_wigner(grid, n_level))


def mixture(states, weights=None) -> State:
    """Convex combination of states sharing a grid and representation."""
    states = list(states)
    if not states:
        raise ValueError("mixture needs at least one state")
    if weights is None:
        weights = [1.0 / len(states)] * len(states)
    weights = [float(w) for w in weights]
    if any(w < 0 for w in weights) or abs(sum(weights) - 1) > 1e-12:
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    rep = states[0].representation
    if any(s.representation != rep for s in states):
        raise RepresentationError("mixture components have different representations")
    values = sum(w * s.values for w, s in zip(weights, states))
    meta = {"kind": "mixture", "weights": weights}
    parts = [gaussian_terms(s) for s in states]
    if all(parts):
        meta["gaussians"] = [_gauss_meta(w * t.weight, t.mean, t.var) for w, ts in zip(weights, parts) for t in ts]
    return State(Field(states[0].grid, values), rep, meta)


# purity ---------------------------------------------------------------------


def _left_terms(s: State):
    terms = gaussian_terms(s)
    if terms is None:
        raise RepresentationError("purity check needs a state with a known Gaussian-mixture form")
    ref = algebra.gaussian_mixture_values(terms, s.grid)
    scale = float(np.abs(s.values).max())
    if float(np.abs(ref - s.values).max()) > 1e-10 * scale:
        raise RepresentationError("state values no longer match their Gaussian-mixture description")
    return terms


def purity_report(s: State, order: int = 24) -> dict:
    """Purity residual with convergence information.

    Wigner states use the exact Gaussian Moyal path. Husimi states use the
    truncated rank-one series at ``order`` and ``2*order``; the finer value
    is reported and ``gap`` is the difference between the two.
    """
    if not s.representation.is_quantum:
        raise RepresentationError(f"quantum purity is undefined for {s.representation.value} states")
    terms = _left_terms(s)
    g = s.grid
    scale = (2 * math.pi * g.hbar) ** g.n_dof
    norm = np.linalg.norm(s.values)

    def resid(prod):
        return float(np.linalg.norm(scale * prod.values - s.values) / norm)

    if s.representation == Representation.WIGNER:
        r = resid(algebra.gaussian_moyal(terms, s.field))
        return {"residual": r, "method": "exact-shift", "order": None, "gap": 0.0,
                "converged": True, "pure": r < PURE_TOL}
    r1 = resid(algebra.gaussian_husimi_star(terms, s.field, order))
    r2 = resid(algebra.gaussian_husimi_star(terms, s.field, 2 * order))
    gap = abs(r2 - r1)
    # a product that does not exist (e.g. narrower than a coherent state)
    # shows up as a series that keeps moving when the order doubles
    converged = bool(np.isfinite(r2) and gap <= 1e-6 + 1e-2 * r2)
    return {"residual": r2, "method": "rank-one-series", "order": 2 * order, "gap": gap,
            "converged": converged, "pure": converged and r2 < PURE_TOL}


def purity_residual(s: State, order: int = 24) -> float:
    """Relative L2 norm of (2 pi hbar)^N (s * s) - s, with the product matching the representation."""
    return purity_report(s, order)["residual"]


# expectation values -----------------------------------------------------------


def expectation(o: PolySymbol, s: State) -> float:
    """Mean of a polynomial observable.

    Wigner and classical densities pair the plain symbol with the state;
    Husimi-kind states use the smoothed symbol and the smoothing product.
    """
    if s.representation.is_husimi_kind:
        val = phase_integral(algebra.smoothing_product(husimi_symbol(o, s.grid), s.field))
    else:
        val = phase_integral(eval_on_grid(o, s.grid) * s.field)
    return float(np.real(val))

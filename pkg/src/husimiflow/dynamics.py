"""Liouville right-hand sides for the four representations and an RK4 propagator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .algebra import BidirectionalSeries, edge_window
from .errors import BlowUp, BoundaryLeak, GridMismatch
from .grid import Field, Grid, outer_mass_fraction, save_snapshot
from .states import Representation, State, expectation
from .symbols import PolySymbol, format_poly, husimi_symbol, parse_poly

LEAK_LIMIT = 1e-6
# Husimi-kind fields carry no content beyond sum_a w_a^2 k_a^2 / 2 ~ this
# value (their spectrum is a Gaussian-damped Wigner spectrum).
HUSIMI_BAND = 14.0

_RHS_KERNEL = {
    Representation.WIGNER: "wigner_liouville",
    Representation.HUSIMI: "husimi_liouville",
    Representation.CLASSICAL_DENSITY: "poisson",
    Representation.CLASSICAL_HUSIMI: "classical_husimi_liouville",
}


def compile_rhs(h: PolySymbol, grid: Grid, representation, taper: bool = False) -> BidirectionalSeries:
    """Series whose application to the state field gives dQ/dt.

    Husimi-kind representations use the smoothed Hamiltonian symbol. With
    ``taper`` the coefficient functions are rolled off near the box edge.
    """
    rep = Representation(representation)
    if h.n_dof != grid.n_dof:
        raise GridMismatch(f"Hamiltonian has n_dof={h.n_dof}, grid has {grid.n_dof}")
    left = husimi_symbol(h, grid) if rep.is_husimi_kind else h
    series = BidirectionalSeries.named(left, _RHS_KERNEL[rep], grid)
    if taper:
        series.window = edge_window(grid)
    return series


def liouville_rhs(h: PolySymbol, s: State) -> Field:
    """Time derivative of the state under Hamiltonian ``h`` (real field)."""
    out = compile_rhs(h, s.grid, s.representation).apply(s.field)
    return Field(s.grid, np.real(out.values) if np.iscomplexobj(out.values) else out.values)


@dataclass
class Trajectory:
    """Saved snapshots of one propagation run."""

    times: list
    states: list
    hamiltonian: PolySymbol
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        if self.states:
            g, rep = self.states[0].grid, self.states[0].representation
            for s in self.states:
                if not s.grid.compatible(g) or s.representation != rep:
                    raise GridMismatch("trajectory snapshots must share grid and representation")

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i) -> State:
        return self.states[i]

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    @property
    def representation(self) -> Representation:
        return self.states[0].representation

    @property
    def final(self) -> State:
        return self.states[-1]

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.states])

    def norm_drift(self) -> float:
        return max(abs(s.mass() - 1.0) for s in self.states)

    def observable(self, o: PolySymbol) -> np.ndarray:
        return np.array([expectation(o, s) for s in self.states])

    def export(self, out_dir, observables=(), prefix: str = "snap") -> list[Path]:
        """Write one snapshot per save point plus ``index.json``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        obs = [o if isinstance(o, PolySymbol) else parse_poly(o, self.grid.n_dof) for o in observables]
        files: list[Path] = []
        names = []
        table = {format_poly(o): [] for o in obs}
        for i, (t, s) in enumerate(zip(self.times, self.states)):
            stem = out_dir / f"{prefix}_{i:05d}"
            files += save_snapshot(stem, s.field, s.representation.value, {"time": t})
            names.append(stem.name + ".bin")
            for o in obs:
                table[format_poly(o)].append(expectation(o, s))
        index = {
            "times": list(self.times),
            "files": names,
            "observables": table,
            "representation": self.representation.value,
            "hamiltonian": format_poly(self.hamiltonian),
            "integrator": {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str))},
        }
        idx = out_dir / "index.json"
        idx.write_text(json.dumps(index, indent=2, sort_keys=True))
        return files + [idx]


def husimi_band_mask(grid: Grid, band: float = HUSIMI_BAND) -> np.ndarray:
    """Half-spectrum mask keeping modes with sum_a w_a^2 k_a^2 / 2 <= band."""
    from .algebra import _rfft_wavenumbers

    e = 0.0
    for a in range(grid.ndim):
        e = e + 0.5 * grid.axis_width(a) ** 2 * _rfft_wavenumbers(grid, a, True) ** 2
    return e <= band


def needs_band_filter(h: PolySymbol, representation) -> bool:
    """Smoothed dynamics with a non-quadratic Hamiltonian amplify high-k round-off."""
    return Representation(representation).is_husimi_kind and h.degree > 2


def _guard(values: np.ndarray, grid: Grid, t: float, leak_limit: float):
    if not np.all(np.isfinite(values)):
        raise BlowUp(f"non-finite samples at t={t:.6g}")
    leak = outer_mass_fraction(values, grid)
    if leak > leak_limit:
        raise BoundaryLeak(f"mass fraction {leak:.2e} outside the inner box at t={t:.6g}")


def rk4_steps(rhs, y: np.ndarray, dt: float, n: int) -> np.ndarray:
    for _ in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def propagate(h: PolySymbol, s0: State, t_final: float, dt: float = 1e-3, save_every: int = 1,
              t0: float = 0.0, leak_limit: float = LEAK_LIMIT, band: float | None = None,
              taper: bool | None = None) -> Trajectory:
    """Fixed-step RK4 integration of the Liouville equation matching ``s0``.

    The step is shrunk slightly if needed so that an integer number of steps
    lands on ``t_final``. Snapshots are stored every ``save_every`` steps and
    at both endpoints.

    Smoothed representations with a non-quadratic Hamiltonian are
    ill-conditioned: their series carries anti-diffusive mixed derivatives
    that amplify round-off at high wavenumber. For those the right-hand side
    is projected onto the band ``sum w^2 k^2 / 2 <= band`` and the
    coefficients are tapered at the box edge. This delays, but does not
    remove, the growth; long runs raise ``BlowUp``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    n_steps = int(math.ceil(t_final / dt - 1e-9)) if t_final > 0 else 0
    dt_eff = t_final / n_steps if n_steps else dt
    save_every = max(1, int(save_every))
    grid = s0.grid
    stiff = needs_band_filter(h, s0.representation)
    if taper is None:
        taper = stiff
    series = compile_rhs(h, grid, s0.representation, taper=taper)
    if band is None:
        band = HUSIMI_BAND if stiff else 0
    mask = husimi_band_mask(grid, band) if band else None

    def rhs(v):
        out = series.apply(v).values
        out = out.real if np.iscomplexobj(out) else out
        if mask is not None:
            out = sfft.irfftn(mask * sfft.rfftn(out), s=grid.shape)
        return out

    meta = {k: v for k, v in s0.metadata.items() if k != "gaussians"}
    y = np.array(s0.values, dtype=float)
    if mask is not None:
        y = sfft.irfftn(mask * sfft.rfftn(y), s=grid.shape)
    _guard(y, grid, t0, leak_limit)
    times = [t0]
    states = [State(Field(grid, y.copy()), s0.representation, dict(s0.metadata))]
    done = 0
    while done < n_steps:
        chunk = min(save_every, n_steps - done)
        y = rk4_steps(rhs, y, dt_eff, chunk)
        done += chunk
        t = t0 + done * dt_eff
        _guard(y, grid, t, leak_limit)
        times.append(t)
        states.append(State(Field(grid, y.copy()), s0.representation, dict(meta)))
    info = {"dt": dt_eff, "scheme": "rk4", "steps": n_steps, "save_every": save_every, "band": float(band or 0)}
    return Trajectory(times, states, h, info)

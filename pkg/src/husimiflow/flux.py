"""Hydrodynamic view of phase-space densities: flux, gauges, velocities, parcels, labels."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from . import grid as _g
from .algebra import FluxField, generator_flux
from .errors import BoundaryLeak, KindError, LengthMismatch, QuadratureNonConvergent, RepresentationError
from .grid import Field, Grid, gradient, interpolate_points, interpolate_tensor, poisson_solve, spectral_derivative
from .states import Representation, State
from .symbols import PolySymbol, husimi_symbol

VELOCITY_FLOOR = 1e-8
RADIAL_NODES = 32
RADIAL_TOL = 1e-7
FLUX_LEAK = 1e-6

__all__ = [
    "FluxField",
    "GaugeSpec",
    "default_flux",
    "gauge_flux",
    "internal_gauge_shift",
    "velocity_from_flux",
    "continuity_residual",
    "trace_parcels",
    "advect_labels",
]


@dataclass(frozen=True, eq=False)
class GaugeSpec:
    """Gauge selection.

    ``gamma`` stores the antisymmetric feature matrix by its lower triangle,
    ``{(i, j): Field}`` with ``i > j``; ``Gamma[j, i] = -Gamma[i, j]``.
    """

    kind: str = "default"
    A: Field | None = None
    gamma: dict = dc_field(default_factory=dict)
    origin: tuple | None = None
    nodes: int = RADIAL_NODES

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("default", "radial", "poisson", "custom"):
            raise KindError(f"unknown gauge kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        for (i, j) in self.gamma:
            if i <= j:
                raise ValueError("gamma entries are stored with i > j only")

    @classmethod
    def custom(cls, A: Field | None = None, gamma: dict | None = None) -> "GaugeSpec":
        """Build a custom gauge; ``gamma`` may list either triangle, it is folded to i > j."""
        folded = {}
        for (i, j), f in (gamma or {}).items():
            if i == j:
                raise ValueError("diagonal feature entries must vanish")
            if i > j:
                folded[(i, j)] = folded.get((i, j), 0) + f
            else:
                folded[(j, i)] = folded.get((j, i), 0) - f
        return cls("custom", A, folded)

    def gamma_entry(self, i: int, j: int, grid: Grid) -> np.ndarray:
        if i == j:
            return np.zeros(grid.shape)
        if i > j:
            f = self.gamma.get((i, j))
            return f.values if f is not None else np.zeros(grid.shape)
        f = self.gamma.get((j, i))
        return -f.values if f is not None else np.zeros(grid.shape)


def _as_state_field(q):
    if isinstance(q, State):
        return q.field
    return q


def default_flux(h: PolySymbol, s: State, time=None) -> FluxField:
    """Generator flux for a Husimi or classical-Husimi state; ``h`` is the raw Hamiltonian."""
    if s.representation == Representation.HUSIMI:
        kind = "quantum"
    elif s.representation == Representation.CLASSICAL_HUSIMI:
        kind = "classical"
    else:
        raise RepresentationError(f"flux needs a Husimi-kind state, got {s.representation.value}")
    return generator_flux(husimi_symbol(h, s.grid), s, kind, time)


# gauges ---------------------------------------------------------------------


def _leak_check(J: FluxField):
    mag = np.sqrt(np.sum(J.array() ** 2, axis=0))
    total = mag.sum()
    if total > 0:
        frac = mag[~J.grid.inner_mask()].sum() / total
        if frac > FLUX_LEAK:
            raise BoundaryLeak(f"flux is not decayed at the box edge (outer share {frac:.2e})")


def _radial_origin(gauge: GaugeSpec, grid: Grid) -> np.ndarray:
    return np.asarray(gauge.origin if gauge.origin is not None else grid.center, dtype=float)


def _radial_pass(fh: np.ndarray, grad_h, grid: Grid, z0, nodes: int):
    """Ray integrals I(z) = int_0^1 a^(2N-1) f(z0 + a (z - z0)) da and its divergence partner.

    Returns the flux components and ``div`` computed under the integral as
    int a^(2N-1) [2N f + a (z - z0) . grad f] da.
    """
    nd = grid.ndim
    a_nodes, a_w = np.polynomial.legendre.leggauss(nodes)
    a_nodes = 0.5 * (a_nodes + 1)
    a_w = 0.5 * a_w
    rel = [grid.axes[a].points - z0[a] for a in range(nd)]
    I = np.zeros(grid.shape)
    div = np.zeros(grid.shape)
    for al, wt in zip(a_nodes, a_w):
        pts = [z0[a] + al * rel[a] for a in range(nd)]
        f = interpolate_tensor(fh, grid, pts).real
        weight = wt * al ** (nd - 1)
        I += weight * f
        zdg = 0.0
        for a in range(nd):
            ga = interpolate_tensor(grad_h[a], grid, pts).real
            zdg = zdg + rel[a].reshape(grid._bshape(a)) * ga
        div += weight * (nd * f + al * zdg)
    comps = [rel[a].reshape(grid._bshape(a)) * I for a in range(nd)]
    comps = [np.broadcast_to(c, grid.shape).copy() for c in comps]
    return comps, div


def radial_gauge(J: FluxField, gauge: GaugeSpec) -> FluxField:
    grid = J.grid
    _leak_check(J)
    divJ = J.divergence().values
    fh = _g.fftn(divJ)
    grad_h = [1j * grid.wavenumbers(a, nyquist=False) * fh for a in range(grid.ndim)]
    z0 = _radial_origin(gauge, grid)
    comps, _ = _radial_pass(fh, grad_h, grid, z0, gauge.nodes)
    comps2, div = _radial_pass(fh, grad_h, grid, z0, 2 * gauge.nodes)
    scale = max(J.max_abs(), 1e-300)
    change = max(float(np.max(np.abs(a - b))) for a, b in zip(comps, comps2)) / scale
    if change > RADIAL_TOL:
        raise QuadratureNonConvergent(f"radial quadrature changed by {change:.2e} on doubling the node count")
    return FluxField(grid, tuple(comps2), J.time, divergence_override=div)


def poisson_gauge(J: FluxField) -> FluxField:
    """Curl-free part of J on the torus: J' = -grad U + mean(J), lap U = -(div J - mean).

    The constant term is the harmonic part of the decomposition; it keeps
    the total flux, which a pure gradient cannot carry on a periodic box.
    """
    U = poisson_solve(J.divergence())
    comps = [-g.values + float(np.mean(c.values)) for g, c in zip(gradient(U), J.components)]
    return FluxField(J.grid, tuple(Field(J.grid, c) for c in comps), J.time)


def custom_gauge(J: FluxField, gauge: GaugeSpec) -> FluxField:
    grid = J.grid
    N = grid.n_dof
    comps = [c.values.copy() for c in J.components]
    if gauge.A is not None:
        A = gauge.A
        for n in range(N):
            comps[n] = comps[n] + spectral_derivative(A, grid.p_axis(n)).values
            comps[N + n] = comps[N + n] - spectral_derivative(A, grid.x_axis(n)).values
    if gauge.gamma:
        for i in range(grid.ndim):
            for j in range(grid.ndim):
                if i == j:
                    continue
                g_ij = gauge.gamma_entry(i, j, grid)
                if np.any(g_ij):
                    comps[i] = comps[i] + spectral_derivative(Field(grid, g_ij), j).values
    return FluxField(grid, tuple(comps), J.time)


def gauge_flux(J: FluxField, gauge: GaugeSpec, q=None) -> FluxField:
    """Flux in the requested gauge; every kind keeps div J unchanged."""
    q = _as_state_field(q)
    if q is not None and not np.any(q.values > 0):
        raise ValueError("density has no positive samples")
    if gauge.kind == "default":
        return J
    if gauge.kind == "poisson":
        return poisson_gauge(J)
    if gauge.kind == "radial":
        return radial_gauge(J, gauge)
    return custom_gauge(J, gauge)


def internal_gauge_shift(gauge: GaugeSpec, f: Field) -> GaugeSpec:
    """A -> A + f, Gamma[x_n, p_n] -> - f, Gamma[p_n, x_n] -> + f; the flux is unchanged."""
    if gauge.kind != "custom":
        raise KindError("internal gauge shifts apply to custom gauges only")
    grid = f.grid
    N = grid.n_dof
    A = f if gauge.A is None else gauge.A + f
    gamma = dict(gauge.gamma)
    for n in range(N):
        key = (grid.p_axis(n), grid.x_axis(n))  # lower triangle: (p_n, x_n)
        gamma[key] = gamma[key] + f if key in gamma else f
    return replace(gauge, A=A, gamma=gamma)


# velocities -----------------------------------------------------------------


@dataclass
class VelocityField:
    components: list  # Fields, zero inside the mask
    mask: np.ndarray  # True where the velocity is undefined
    floor: float

    def array(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])


def velocity_from_flux(J: FluxField, q, floor: float | None = None) -> VelocityField:
    """V = J / q where q >= floor (default 1e-8 max q); masked elsewhere."""
    q = _as_state_field(q)
    qv = q.values
    if floor is None:
        floor = VELOCITY_FLOOR * float(qv.max())
    mask = ~(qv >= floor) if floor > 0 else np.ones(qv.shape, dtype=bool)
    safe = np.where(mask, 1.0, qv)
    comps = [Field(J.grid, np.where(mask, 0.0, c.values / safe)) for c in J.components]
    return VelocityField(comps, mask, floor)


def transport_velocity(J: FluxField, q, floor: float | None = None) -> np.ndarray:
    """Smooth stand-in for J / q that carries labels: J q / (q^2 + floor^2).

    It equals the velocity wherever q >> floor and decays smoothly where
    the density vanishes, so the characteristics see no jump at the mask
    edge.
    """
    qv = _as_state_field(q).values
    if floor is None:
        floor = VELOCITY_FLOOR * float(qv.max())
    return J.array() * (qv / (qv**2 + floor**2))


# continuity -----------------------------------------------------------------


def _fd_weights(nodes: np.ndarray, t: float) -> np.ndarray:
    """Weights w with sum w_k f(nodes_k) ~ f'(t), exact for polynomials of degree < len(nodes)."""
    m = len(nodes)
    s = nodes - t
    V = np.vander(s, m, increasing=True).T  # row j: s_k^j
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


def continuity_residual(traj, fluxes, points: int = 5) -> float:
    """max over snapshots of ||dQ/dt + div J|| / ||dQ/dt||.

    dQ/dt is a finite difference over the ``points`` nearest saves (central
    in the interior, one-sided at the ends, any spacing).
    """
    fluxes = list(fluxes)
    if len(fluxes) != len(traj):
        raise LengthMismatch(f"{len(fluxes)} fluxes for {len(traj)} snapshots")
    if len(traj) < 3:
        raise LengthMismatch("need at least three snapshots for a time derivative")
    t = np.asarray(traj.times, dtype=float)
    m = min(points, len(t))
    # interior snapshots only; the end values are one-sided and less accurate
    idx = range(1, len(t) - 1)
    worst = 0.0
    for i in idx:
        lo = min(max(i - m // 2, 0), len(t) - m)
        w = _fd_weights(t[lo:lo + m], t[i])
        dq = sum(wk * traj[lo + k].values for k, wk in enumerate(w))
        q0 = traj[i].values
        r = dq + fluxes[i].divergence().values
        nd = float(np.linalg.norm(dq))
        nr = float(np.linalg.norm(r))
        # static record: the relative residual is 0/0, fall back to absolute
        val = nr / nd if nd > 1e-12 * max(1.0, float(np.abs(q0).max())) * math.sqrt(q0.size) else nr
        worst = max(worst, val)
    return worst


def trajectory_fluxes(traj, h: PolySymbol | None = None, gauge: GaugeSpec | None = None):
    """Default (then gauged) flux for every snapshot of a Husimi-kind trajectory."""
    h = traj.hamiltonian if h is None else h
    gauge = gauge or GaugeSpec()
    out = []
    for t, s in zip(traj.times, traj.states):
        J = default_flux(h, s, t)
        out.append(gauge_flux(J, gauge, s))
    return out


# point evaluation -------------------------------------------------------------


class SnapshotSampler:
    """Evaluate density and gauge flux of one snapshot at scattered points.

    Periodic fluxes use Fourier interpolation. The radial gauge is not
    periodic, so it is evaluated point-wise from its ray integral instead.
    """

    def __init__(self, q: Field, J: FluxField, gauge: GaugeSpec, gauged: FluxField | None = None):
        self.grid = q.grid
        self.gauge = gauge
        g = self.grid
        self.q_hat = _g.fftn(q.values)
        self.floor = VELOCITY_FLOOR * float(q.values.max())
        if gauge.kind == "radial":
            self.f_hat = _g.fftn(J.divergence().values)
            self.z0 = _radial_origin(gauge, g)
            nodes, w = np.polynomial.legendre.leggauss(gauge.nodes * 2)
            self.a_nodes, self.a_w = 0.5 * (nodes + 1), 0.5 * w
        else:
            gauged = gauged if gauged is not None else gauge_flux(J, gauge, q)
            self.j_hat = np.stack([_g.fftn(c.values) for c in gauged.components])

    def density(self, pts) -> np.ndarray:
        return interpolate_points(self.q_hat, self.grid, pts)

    def flux(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.gauge.kind != "radial":
            return interpolate_points(self.j_hat, self.grid, pts).T
        nd = self.grid.ndim
        rel = pts - self.z0
        acc = np.zeros(len(pts))
        for al, w in zip(self.a_nodes, self.a_w):
            acc += w * al ** (nd - 1) * interpolate_points(self.f_hat, self.grid, self.z0 + al * rel)
        return rel * acc[:, None]


def _snapshot_samplers(traj, gauge: GaugeSpec, h=None):
    h = traj.hamiltonian if h is None else h
    out = []
    for t, s in zip(traj.times, traj.states):
        J = default_flux(h, s, t)
        out.append(SnapshotSampler(s.field, J, gauge))
    return out


def _bracket(times, t):
    i = int(np.searchsorted(times, t, side="right") - 1)
    i = min(max(i, 0), len(times) - 2) if len(times) > 1 else 0
    if len(times) == 1:
        return 0, 0, 0.0
    th = (t - times[i]) / (times[i + 1] - times[i])
    return i, i + 1, float(np.clip(th, 0.0, 1.0))


# parcels ----------------------------------------------------------------------


@dataclass
class Parcel:
    label: float
    start: np.ndarray
    times: list
    points: list
    escaped: bool = False
    reason: str = ""

    @property
    def path(self) -> np.ndarray:
        return np.array(self.points)


@dataclass
class ParcelSet:
    parcels: list
    scheme: str = "rk4/fourier"

    def __len__(self):
        return len(self.parcels)

    def __getitem__(self, i) -> Parcel:
        return self.parcels[i]

    def any_escaped(self) -> bool:
        return any(p.escaped for p in self.parcels)

    def write_csv(self, path, n_dof: int) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        xs = ["x"] if n_dof == 1 else [f"x{i + 1}" for i in range(n_dof)]
        ps = ["p"] if n_dof == 1 else [f"p{i + 1}" for i in range(n_dof)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parcel_id", "label", "t", *xs, *ps, "escaped_flag"])
            for pid, p in enumerate(self.parcels):
                for t, z in zip(p.times, p.points):
                    w.writerow([pid, repr(float(p.label)), repr(float(t)), *[repr(float(v)) for v in z], int(p.escaped)])
        return path


class _VelocityInTime:
    def __init__(self, traj, gauge, h=None):
        self.times = np.asarray(traj.times, dtype=float)
        self.samplers = _snapshot_samplers(traj, gauge, h)
        self.grid = traj.grid

    def __call__(self, pts, t):
        i, j, th = _bracket(self.times, t)
        a, b = self.samplers[i], self.samplers[j]
        qa, qb = a.density(pts), b.density(pts)
        Ja, Jb = a.flux(pts), b.flux(pts)
        q = (1 - th) * qa + th * qb
        J = (1 - th) * Ja + th * Jb
        floor = (1 - th) * a.floor + th * b.floor
        ok = q >= floor
        V = np.where(ok[:, None], J / np.where(ok, q, 1.0)[:, None], 0.0)
        return V, ok


def _inside(grid: Grid, z, fraction=0.8) -> np.ndarray:
    z = np.atleast_2d(z)
    ok = np.ones(len(z), dtype=bool)
    for a, ax in enumerate(grid.axes):
        ok &= np.abs(z[:, a] - ax.center) <= 0.5 * fraction * ax.length
    return ok


def trace_parcels(traj, gauge: GaugeSpec, seeds, dt: float, labels=None, h=None,
                  t_start=None, t_end=None) -> ParcelSet:
    """Integrate dz/dt = V(z, t) with RK4 for every seed.

    V is J/q with J, q interpolated in space (Fourier) and linearly in time.
    A parcel that enters the masked region or leaves the inner box stops
    there and is flagged as escaped.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    grid = traj.grid
    vel = _VelocityInTime(traj, gauge, h)
    t0 = traj.times[0] if t_start is None else t_start
    t1 = traj.times[-1] if t_end is None else t_end
    n = int(math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    step = (t1 - t0) / n if n else 0.0
    labels = list(range(len(seeds))) if labels is None else list(labels)
    parcels = [Parcel(float(lab), s.copy(), [t0], [s.copy()]) for lab, s in zip(labels, seeds)]
    z = seeds.copy()
    alive = np.ones(len(seeds), dtype=bool)
    _, ok0 = vel(z, t0)
    for k, p in enumerate(parcels):
        if not ok0[k] or not _inside(grid, z[k])[0]:
            p.escaped, p.reason, alive[k] = True, "seed outside the unmasked inner region", False
    for i in range(n):
        if not alive.any():
            break
        t = t0 + i * step
        za = z[alive]
        k1, o1 = vel(za, t)
        k2, o2 = vel(za + 0.5 * step * k1, t + 0.5 * step)
        k3, o3 = vel(za + 0.5 * step * k2, t + 0.5 * step)
        k4, o4 = vel(za + step * k3, t + step)
        znew = za + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ok = o1 & o2 & o3 & o4 & _inside(grid, znew)
        idx = np.flatnonzero(alive)
        for m, k in enumerate(idx):
            if ok[m]:
                z[k] = znew[m]
                parcels[k].times.append(t + step)
                parcels[k].points.append(znew[m].copy())
            else:
                parcels[k].escaped = True
                parcels[k].reason = "entered the masked region or left the inner box"
                alive[k] = False
    return ParcelSet(parcels)


# labels -----------------------------------------------------------------------


@dataclass
class LabelHistory:
    times: list
    fields: list
    mask: list

    def at(self, i) -> Field:
        return self.fields[i]

    def sample(self, i, pts) -> np.ndarray:
        f = self.fields[i]
        return _spline_sample(f.values, f.grid, np.atleast_2d(pts))


def _index_coords(grid: Grid, pts: np.ndarray) -> np.ndarray:
    return np.stack([(pts[:, a] - ax.lo) / ax.spacing for a, ax in enumerate(grid.axes)])


def _spline_sample(values, grid, pts, order=5):
    return map_coordinates(values, _index_coords(grid, pts), order=order, mode="nearest")


def _grid_points(grid: Grid) -> np.ndarray:
    mesh = np.meshgrid(*[ax.points for ax in grid.axes], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _lagrange_weights(times: np.ndarray, t: float):
    """Four-point Lagrange weights around ``t`` (fewer points near short records)."""
    n = len(times)
    if n == 1:
        return [0], [1.0]
    i, _, _ = _bracket(times, t)
    lo = max(0, min(i - 1, n - 4))
    idx = list(range(lo, min(lo + 4, n)))
    w = []
    for j in idx:
        c = 1.0
        for m in idx:
            if m != j:
                c *= (t - times[m]) / (times[j] - times[m])
        w.append(c)
    return idx, w


class LocalStencil:
    """Tensor-product Lagrange interpolation on ``order + 1`` nodes per axis.

    A global spline would spread the unresolved structure that the shear
    near the density edge builds into a label across the whole grid; a
    local stencil keeps it within a few nodes. Coordinates are clamped to
    the box and stencils shifted inwards at the edges.
    """

    def __init__(self, grid: Grid, pts: np.ndarray, order: int = 3):
        m = order + 1
        ic = _index_coords(grid, np.atleast_2d(pts))
        offs = np.arange(m)
        self.m = m
        self.ndim = grid.ndim
        self.base, self.weights = [], []
        for a, n in enumerate(grid.shape):
            u = np.clip(ic[a], 0.0, n - 1.0)
            b = np.clip(np.floor(u).astype(int) - (m // 2 - 1), 0, n - m)
            d = u[:, None] - (b[:, None] + offs)
            w = np.ones((len(u), m))
            for k in range(m):
                for j in range(m):
                    if j != k:
                        w[:, k] *= d[:, j] / (k - j)
            self.base.append(b)
            self.weights.append(w)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        out = 0.0
        for combo in np.ndindex(*(self.m,) * self.ndim):
            w = 1.0
            for wa, c in zip(self.weights, combo):
                w = w * wa[:, c]
            out = out + w * values[tuple(b + c for b, c in zip(self.base, combo))]
        return out


def advect_fields(L0: list, vel: list, times, grid: Grid, dt: float, order: int = 3) -> list:
    """Semi-Lagrangian transport of several label arrays at once.

    ``vel[k]`` is the (2N, ...) transport velocity at ``times[k]``. What is
    transported is the foot-point map (where each node's characteristic
    started); labels are then read off their initial arrays once per save
    with quintic splines. Resampling the labels themselves every step would
    diffuse anything that is not a low-degree polynomial.

    Characteristics are traced back with the midpoint rule. Velocities and
    the map are resampled with a :class:`LocalStencil` (a global spline
    would ring off the steep edge of the transport velocity) and
    interpolated in time with cubic Lagrange polynomials. Returns one list of arrays per
    label, one entry per saved time.
    """
    times = np.asarray(times, dtype=float)
    pts = _grid_points(grid)
    coefs = [spline_filter(np.asarray(L, dtype=float), order=5, mode="nearest") for L in L0]

    def V_at(points, t):
        idx, w = _lagrange_weights(times, t)
        st = LocalStencil(grid, points, order)
        v = sum(wj * np.asarray(vel[j], dtype=float) for j, wj in zip(idx, w))
        return np.stack([st(v[c]) for c in range(grid.ndim)], axis=1)

    def read(foot):
        ic = _index_coords(grid, foot)
        return [map_coordinates(c, ic, order=5, mode="nearest", prefilter=False).reshape(grid.shape) for c in coefs]

    foot = [pts[:, c].reshape(grid.shape).copy() for c in range(grid.ndim)]
    hist = [[np.array(L, dtype=float)] for L in L0]
    for k in range(len(times) - 1):
        ta, tb = times[k], times[k + 1]
        n = max(1, int(math.ceil((tb - ta) / dt - 1e-9)))
        step = (tb - ta) / n
        for m in range(n):
            t_new = ta + (m + 1) * step
            zm = pts - 0.5 * step * V_at(pts, t_new)
            zd = pts - step * V_at(zm, t_new - 0.5 * step)
            st = LocalStencil(grid, zd, order)
            foot = [st(f).reshape(grid.shape) for f in foot]
        for h, L in zip(hist, read(np.stack([f.ravel() for f in foot], axis=1))):
            h.append(L)
    return hist


def advect_labels(L0, traj, gauge: GaugeSpec, dt: float, h=None, order: int = 3) -> LabelHistory:
    """Transport a label field along the gauge flow of a Husimi-kind trajectory.

    The carrying velocity is :func:`transport_velocity`; ``mask`` records
    where the true velocity is undefined, i.e. where label values have no
    density to describe.
    """
    grid = traj.grid
    if isinstance(L0, PolySymbol):
        L0 = Field(grid, L0.evaluate(grid))
    h = traj.hamiltonian if h is None else h
    vel, masks = [], []
    for t, s in zip(traj.times, traj.states):
        J = gauge_flux(default_flux(h, s, t), gauge, s)
        vel.append(transport_velocity(J, s))
        masks.append(velocity_from_flux(J, s).mask)
    hist = advect_fields([L0.values], vel, traj.times, grid, dt, order)[0]
    return LabelHistory(list(traj.times), [Field(grid, L) for L in hist], masks)

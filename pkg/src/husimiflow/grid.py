"""Periodic phase-space grid, sampled fields and the spectral kernels on them.

Axes are ordered ``x1..xN, p1..pN``; arrays are stored row-major in that
order. Every operation here is a Fourier multiplier or a Riemann sum, so it
is exact for band-limited periodic data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import BadAxis, GridMismatch, WidthConstraintViolated

WIDTH_RTOL = 1e-9

_fft_workers = 1


def set_workers(n: int) -> None:
    """Thread count for FFTs. ``1`` is the bitwise-reproducible reference mode."""
    global _fft_workers
    _fft_workers = max(1, int(n))


def fftn(a):
    return sfft.fftn(a, workers=_fft_workers)


def ifftn(a):
    return sfft.ifftn(a, workers=_fft_workers)


@dataclass(frozen=True)
class Axis:
    name: str
    count: int
    lo: float
    hi: float

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.count

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def points(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.count)

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class Grid:
    """Discretized 2N-dimensional periodic phase space.

    ``widths[n] = (w_x, w_p)`` are the smoothing widths of degree of freedom
    ``n``; they obey ``w_x * w_p = hbar / 2``.
    """

    n_dof: int
    axes: tuple[Axis, ...]
    hbar: float
    widths: tuple[tuple[float, float], ...]
    _cache: dict = dc_field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def ndim(self) -> int:
        return 2 * self.n_dof

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dV(self) -> float:
        return float(np.prod([a.spacing for a in self.axes]))

    @property
    def volume(self) -> float:
        return float(np.prod([a.length for a in self.axes]))

    @property
    def center(self) -> np.ndarray:
        return np.array([a.center for a in self.axes])

    def x_axis(self, n: int) -> int:
        return n

    def p_axis(self, n: int) -> int:
        return self.n_dof + n

    def axis_width(self, axis: int) -> float:
        """Smoothing width attached to a phase-space axis."""
        n, is_p = axis % self.n_dof, axis >= self.n_dof
        return self.widths[n][1 if is_p else 0]

    def axis_index(self, axis) -> int:
        if isinstance(axis, str):
            for i, a in enumerate(self.axes):
                if a.name == axis:
                    return i
            raise BadAxis(f"unknown axis name {axis!r}")
        axis = int(axis)
        if not 0 <= axis < self.ndim:
            raise BadAxis(f"axis {axis} out of range for {self.ndim}-dimensional grid")
        return axis

    def _bshape(self, axis: int) -> list[int]:
        shape = [1] * self.ndim
        shape[axis] = self.axes[axis].count
        return shape

    def coord(self, axis: int) -> np.ndarray:
        """Sample coordinates along ``axis``, shaped for broadcasting."""
        key = ("coord", axis)
        if key not in self._cache:
            self._cache[key] = self.axes[axis].points.reshape(self._bshape(axis))
        return self._cache[key]

    def coords(self) -> list[np.ndarray]:
        return [self.coord(a) for a in range(self.ndim)]

    def wavenumbers(self, axis: int, nyquist: bool = True) -> np.ndarray:
        """Angular wavenumbers along ``axis`` (broadcastable).

        With ``nyquist=False`` the unpaired Nyquist mode is zeroed, which is
        the right choice for odd-order and mixed derivatives of real data.
        """
        key = ("k", axis, nyquist)
        if key not in self._cache:
            ax = self.axes[axis]
            k = 2 * np.pi * np.fft.fftfreq(ax.count, d=ax.spacing)
            if not nyquist and ax.count % 2 == 0:
                k[ax.count // 2] = 0.0
            self._cache[key] = k.reshape(self._bshape(axis))
        return self._cache[key]

    def inner_mask(self, fraction: float = 0.8) -> np.ndarray:
        """Boolean mask of the central box covering ``fraction`` of every axis."""
        key = ("inner", fraction)
        if key not in self._cache:
            mask = np.ones(self.shape, dtype=bool)
            for i, ax in enumerate(self.axes):
                half = 0.5 * fraction * ax.length
                inside = np.abs(ax.points - ax.center) <= half
                mask &= inside.reshape(self._bshape(i))
            self._cache[key] = mask
        return self._cache[key]

    def with_hbar(self, hbar: float) -> "Grid":
        """Same axes at a different hbar; widths rescaled to keep w_x*w_p = hbar/2."""
        s = math.sqrt(hbar / self.hbar)
        return Grid(self.n_dof, self.axes, float(hbar), tuple((wx * s, wp * s) for wx, wp in self.widths))

    def compatible(self, other: "Grid") -> bool:
        return self is other or self == other

    def to_json(self) -> dict:
        return {
            "axes": [{"name": a.name, "count": a.count, "min": a.lo, "max": a.hi} for a in self.axes],
            "hbar": self.hbar,
            "widths": [list(w) for w in self.widths],
        }


def _axis_names(n_dof: int) -> list[str]:
    if n_dof == 1:
        return ["x", "p"]
    return [f"x{i + 1}" for i in range(n_dof)] + [f"p{i + 1}" for i in range(n_dof)]


def make_grid(axes_spec, hbar: float = 1.0, widths=None) -> Grid:
    """Build a :class:`Grid`.

    Parameters
    ----------
    axes_spec : sequence
        One ``(count, lo, hi)`` triple (or dict with those keys, ``min``/``max``
        accepted) per phase-space axis, ordered x1..xN, p1..pN.
    hbar : float
        Reduced Planck constant.
    widths : sequence of (w_x, w_p), optional
        Smoothing widths per degree of freedom; defaults to the symmetric
        choice ``sqrt(hbar/2)``.
    """
    specs = []
    for s in axes_spec:
        if isinstance(s, dict):
            s = (s["count"], s.get("lo", s.get("min")), s.get("hi", s.get("max")))
        specs.append((int(s[0]), float(s[1]), float(s[2])))
    if len(specs) == 0 or len(specs) % 2:
        raise BadAxis("phase space needs an even, nonzero number of axes")
    if not hbar > 0:
        raise WidthConstraintViolated(f"hbar must be positive, got {hbar}")
    n_dof = len(specs) // 2
    names = _axis_names(n_dof)
    axes = []
    for name, (count, lo, hi) in zip(names, specs):
        if count < 8 or count & (count - 1):
            raise BadAxis(f"axis {name}: count must be a power of two >= 8, got {count}")
        if not hi > lo:
            raise BadAxis(f"axis {name}: bounds inverted ({lo}, {hi})")
        axes.append(Axis(name, count, lo, hi))
    if widths is None:
        w = math.sqrt(hbar / 2)
        widths = [(w, w)] * n_dof
    widths = tuple((float(wx), float(wp)) for wx, wp in widths)
    if len(widths) != n_dof:
        raise WidthConstraintViolated(f"expected {n_dof} width pairs, got {len(widths)}")
    for n, (wx, wp) in enumerate(widths):
        if not (wx > 0 and wp > 0):
            raise WidthConstraintViolated(f"dof {n}: widths must be positive")
        if abs(wx * wp - hbar / 2) > WIDTH_RTOL * hbar / 2:
            raise WidthConstraintViolated(
                f"dof {n}: w_x*w_p = {wx * wp!r} differs from hbar/2 = {hbar / 2!r}"
            )
    return Grid(n_dof, tuple(axes), float(hbar), widths)


def box_grid(count: int, half_width: float, hbar: float = 1.0, n_dof: int = 1, widths=None) -> Grid:
    """Square grid ``[-half_width, half_width)`` on every axis."""
    return make_grid([(count, -half_width, half_width)] * (2 * n_dof), hbar, widths)


@dataclass(frozen=True, eq=False)
class Field:
    """Real or complex scalar samples on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.shape:
            if values.size == self.grid.size:
                values = values.reshape(self.grid.shape)
            else:
                raise GridMismatch(f"array shape {values.shape} does not match grid {self.grid.shape}")
        if not np.iscomplexobj(values):
            values = values.astype(float, copy=False)
        object.__setattr__(self, "values", values)

    @property
    def kind(self) -> str:
        return "complex" if np.iscomplexobj(self.values) else "real"

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def _other(self, other):
        if isinstance(other, Field):
            check_grids(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    @property
    def real(self) -> "Field":
        return Field(self.grid, self.values.real)

    @property
    def imag(self) -> "Field":
        return Field(self.grid, self.values.imag)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def norm(self) -> float:
        """Discrete L2 norm including the volume element."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dV))


def check_grids(a: Grid, b: Grid) -> None:
    if not a.compatible(b):
        raise GridMismatch("operands live on different grids")


def as_real(values: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Drop an imaginary part that is round-off; raise if it is not."""
    if not np.iscomplexobj(values):
        return values
    scale = float(np.max(np.abs(values))) or 1.0
    resid = float(np.max(np.abs(values.imag)))
    if resid > rtol * scale:
        raise ArithmeticError(f"imaginary residue {resid:.3e} exceeds {rtol:g} of max {scale:.3e}")
    return values.real.copy()


def _values(f):
    return f.values if isinstance(f, Field) else np.asarray(f)


def spectral_derivative(f: Field, axis, order: int = 1) -> Field:
    """``order``-th derivative of ``f`` along ``axis`` by Fourier differentiation."""
    if order < 1:
        raise ValueError("order must be >= 1")
    g = f.grid
    axis = g.axis_index(axis)
    k = g.wavenumbers(axis, nyquist=order % 2 == 0)
    out = ifftn((1j * k) ** order * fftn(f.values))
    if f.kind == "real":
        out = out.real
    return Field(g, out)


def gradient(f: Field) -> list[Field]:
    return [spectral_derivative(f, a) for a in range(f.grid.ndim)]


def divergence(components) -> Field:
    """Spectral divergence of a vector of fields ordered like the grid axes."""
    g = components[0].grid
    total = np.zeros(g.shape, dtype=np.result_type(*[c.values for c in components]))
    for a, c in enumerate(components):
        total = total + spectral_derivative(c, a).values
    return Field(g, total)


def gaussian_multiplier(grid: Grid, widths=None) -> np.ndarray:
    """Fourier transform of the product-Gaussian smoothing kernel."""
    widths = grid.widths if widths is None else widths
    mult = np.ones(grid.shape)
    for n, (wx, wp) in enumerate(widths):
        kx = grid.wavenumbers(grid.x_axis(n))
        kp = grid.wavenumbers(grid.p_axis(n))
        mult = mult * np.exp(-0.5 * (wx * kx) ** 2 - 0.5 * (wp * kp) ** 2)
    return mult


def gaussian_smooth(f: Field, widths=None) -> Field:
    """Convolve ``f`` with the normalized product-Gaussian kernel.

    ``widths`` is a per-dof sequence of ``(w_x, w_p)``; it defaults to the
    grid's Husimi widths but need not satisfy the ``hbar/2`` constraint.
    """
    out = ifftn(gaussian_multiplier(f.grid, widths) * fftn(f.values))
    return Field(f.grid, out.real if f.kind == "real" else out)


def poisson_solve(f: Field) -> Field:
    """Zero-mean ``U`` with ``laplacian(U) = -(f - mean(f))`` on the torus."""
    g = f.grid
    k2 = sum(g.wavenumbers(a) ** 2 for a in range(g.ndim))
    fh = fftn(f.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        uh = np.where(k2 > 0, fh / np.where(k2 > 0, k2, 1.0), 0.0)
    out = ifftn(uh)
    return Field(g, out.real if f.kind == "real" else out)


def laplacian(f: Field) -> Field:
    g = f.grid
    k2 = sum(g.wavenumbers(a) ** 2 for a in range(g.ndim))
    out = ifftn(-k2 * fftn(f.values))
    return Field(g, out.real if f.kind == "real" else out)


def phase_integral(f):
    """Riemann-sum integral over the whole box."""
    if isinstance(f, Field):
        total = np.sum(f.values) * f.grid.dV
    else:
        raise TypeError("phase_integral expects a Field")
    return complex(total) if np.iscomplexobj(total) else float(total)


def outer_mass_fraction(values: np.ndarray, grid: Grid, fraction: float = 0.8) -> float:
    """Share of ``sum|values|`` lying outside the inner ``fraction`` box."""
    a = np.abs(values)
    total = a.sum()
    if total == 0:
        return 0.0
    return float(a[~grid.inner_mask(fraction)].sum() / total)


def translate(f: Field, shift) -> Field:
    """Spectral translation ``f(z - shift)`` (exact for band-limited data)."""
    g = f.grid
    phase = np.zeros(g.shape)
    for a, s in enumerate(shift):
        if s:
            phase = phase + g.wavenumbers(a, nyquist=False) * s
    out = ifftn(np.exp(-1j * phase) * fftn(f.values))
    return Field(g, out.real if f.kind == "real" else out)


def _axis_phase(grid: Grid, axis: int, pts: np.ndarray) -> np.ndarray:
    ax = grid.axes[axis]
    k = 2 * np.pi * np.fft.fftfreq(ax.count, d=ax.spacing)
    return np.exp(1j * np.multiply.outer(np.asarray(pts) - ax.lo, k)) / ax.count


def interpolate_points(coeffs: np.ndarray, grid: Grid, points: np.ndarray, real: bool = True) -> np.ndarray:
    """Evaluate the Fourier interpolant at scattered points.

    ``coeffs`` is the FFT of the sampled field (one or several stacked along a
    leading axis); ``points`` has shape ``(m, 2N)``. Cost is O(m * grid size).
    """
    points = np.atleast_2d(points)
    batched = coeffs.ndim == grid.ndim + 1
    c = coeffs if batched else coeffs[None]
    # contract the leading axis, keep the point index in front
    e0 = _axis_phase(grid, 0, points[:, 0])
    out = np.einsum("mk,fk...->fm...", e0, c)
    for a in range(1, grid.ndim):
        ea = _axis_phase(grid, a, points[:, a])
        out = np.einsum("mk,fmk...->fm...", ea, out)
    if real:
        out = out.real
    return out if batched else out[0]


def interpolate_tensor(coeffs: np.ndarray, grid: Grid, axis_points) -> np.ndarray:
    """Evaluate the Fourier interpolant on the tensor grid ``axis_points[0] x ...``."""
    out = coeffs
    for a, pts in enumerate(axis_points):
        e = _axis_phase(grid, a, pts)
        out = np.moveaxis(np.tensordot(e, out, axes=([1], [a])), 0, a)
    return out


# snapshot files -----------------------------------------------------------


def save_snapshot(stem, f: Field, representation=None, extra=None) -> list[Path]:
    """Write ``<stem>.bin`` (little-endian float64, row-major) and ``<stem>.json``.

    Complex fields are stored as interleaved (real, imag) pairs.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(f.values)
    if f.kind == "complex":
        data = data.astype("<c16").view("<f8")
    else:
        data = data.astype("<f8")
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(data.tobytes(order="C"))
    meta = f.grid.to_json()
    meta["scalar_kind"] = f.kind
    meta["representation"] = representation
    if extra:
        meta.update(extra)
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return [bin_path, json_path]


def load_snapshot(stem) -> tuple[Field, dict]:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    grid = make_grid(meta["axes"], meta["hbar"], meta["widths"])
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    if meta["scalar_kind"] == "complex":
        raw = raw.view("<c16")
    return Field(grid, raw.reshape(grid.shape).copy()), meta

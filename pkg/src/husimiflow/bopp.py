"""Bopp operators: star multiplication written as a differential operator.

``O * psi`` (left) and ``psi * O`` (right) for a polynomial symbol ``O``
are finite sums ``sum_gamma c_gamma(z) d^gamma psi`` with polynomial
coefficients. Propagating ``psi`` with ``-(i/hbar)(H_L - H_R)`` is the
Schrodinger-like form of the Wigner equation; its hbar -> 0 limit is the
Poisson bracket (Koopman-von Neumann) generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as _g
from .algebra import build_kernel, derivative_multiplier, poisson_form
from .errors import BlowUp, GridMismatch
from .grid import Field
from .symbols import PolySymbol

__all__ = [
    "PolyDiffOperator",
    "BoppOperator",
    "bopp_left",
    "bopp_right",
    "bopp_apply",
    "commutator_residual",
    "bopp_propagate",
    "classical_limit_residual",
]


@dataclass
class PolyDiffOperator:
    """``sum_gamma c_gamma(z) d^gamma`` with polynomial coefficients."""

    n_dof: int
    terms: dict  # gamma (tuple of 2N ints) -> PolySymbol

    def __post_init__(self):
        self.terms = {tuple(g): c for g, c in self.terms.items() if not c.is_zero()}

    @classmethod
    def multiplication(cls, s: PolySymbol) -> "PolyDiffOperator":
        return cls(s.n_dof, {(0,) * (2 * s.n_dof): s})

    @classmethod
    def derivative(cls, n_dof: int, axis: int, order: int = 1) -> "PolyDiffOperator":
        gamma = [0] * (2 * n_dof)
        gamma[axis] = order
        return cls(n_dof, {tuple(gamma): PolySymbol.constant(n_dof, 1.0)})

    @property
    def order(self) -> int:
        return max((sum(g) for g in self.terms), default=0)

    def coefficient_derivative(self, axis: int) -> "PolyDiffOperator":
        """Explicit z-derivative: differentiate the coefficients only."""
        return PolyDiffOperator(self.n_dof, {g: c.derivative(axis) for g, c in self.terms.items()})

    def shift(self, delta) -> "PolyDiffOperator":
        """Operator with coefficients c(z + delta)."""
        return PolyDiffOperator(self.n_dof, {g: c.shift(delta) for g, c in self.terms.items()})

    def __add__(self, other: "PolyDiffOperator") -> "PolyDiffOperator":
        out = dict(self.terms)
        for g, c in other.terms.items():
            out[g] = out[g] + c if g in out else c
        return PolyDiffOperator(self.n_dof, out)

    def __mul__(self, s) -> "PolyDiffOperator":
        return PolyDiffOperator(self.n_dof, {g: c * s for g, c in self.terms.items()})

    __rmul__ = __mul__

    def __sub__(self, other: "PolyDiffOperator") -> "PolyDiffOperator":
        return self + other * (-1.0)

    def apply(self, psi: Field) -> Field:
        """Spectral derivatives times sampled coefficients (complex result)."""
        grid = psi.grid
        if grid.n_dof != self.n_dof:
            raise GridMismatch(f"operator has n_dof={self.n_dof}, grid has {grid.n_dof}")
        ph = _g.fftn(psi.values)
        out = np.zeros(grid.shape, dtype=complex)
        for gamma, c in self.terms.items():
            d = _g.ifftn(derivative_multiplier(grid, gamma) * ph) if any(gamma) else psi.values
            out = out + c.evaluate(grid) * d
        return Field(grid, out)

    def __call__(self, psi: Field) -> Field:
        return self.apply(psi)


@dataclass
class BoppOperator(PolyDiffOperator):
    source: PolySymbol | None = None
    side: str = "left"
    hbar: float = 1.0


def _bopp(source: PolySymbol, hbar: float, side: str) -> BoppOperator:
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    n_dof = source.n_dof
    nd = 2 * n_dof
    # the kernel only needs hbar; any grid with that hbar will do
    g = _g.box_grid(8, 1.0, hbar=hbar, n_dof=n_dof)
    kernel = build_kernel("moyal" if side == "left" else "moyal_right", g, source.degree)
    terms: dict = {}
    for (alpha, gamma), c in kernel.items():
        if sum(alpha) > source.degree:
            continue
        coef = source.multi_derivative(alpha)
        if coef.is_zero():
            continue
        coef = coef * c
        terms[gamma] = terms[gamma] + coef if gamma in terms else coef
    if not terms:
        terms[(0,) * nd] = PolySymbol(n_dof)
    return BoppOperator(n_dof, terms, source, side, hbar)


def bopp_left(source: PolySymbol, hbar: float = 1.0) -> BoppOperator:
    """Operator form of ``source * (.)``; for ``p`` this is ``p - (i hbar/2) d/dx``."""
    return _bopp(source, hbar, "left")


def bopp_right(source: PolySymbol, hbar: float = 1.0) -> BoppOperator:
    """Operator form of ``(.) * source``."""
    return _bopp(source, hbar, "right")


def bopp_apply(op: PolyDiffOperator, psi: Field) -> Field:
    if isinstance(op, BoppOperator) and abs(op.hbar - psi.grid.hbar) > 1e-15 * max(1.0, op.hbar):
        raise GridMismatch(f"operator built for hbar={op.hbar}, field grid has hbar={psi.grid.hbar}")
    return op.apply(psi)


def _expected_bracket(a: BoppOperator, b: BoppOperator) -> complex:
    """Constant value of [A, B] for degree-one sources; zero for mixed sides."""
    if a.side != b.side:
        return 0.0
    if a.source.degree > 1 or b.source.degree > 1:
        raise ValueError("expected commutator is tabulated for linear sources only")
    # [a_L, b_L] = (a * b - b * a)(.) -> i hbar {a, b}; right pair flips sign
    n = a.n_dof
    lam = poisson_form(n)
    bracket = 0.0
    for (alpha, gamma), c in lam.items():
        bracket += c * a.source.multi_derivative(alpha).constant_term() * b.source.multi_derivative(gamma).constant_term()
    val = 1j * a.hbar * bracket
    return val if a.side == "left" else -val


def commutator_residual(a: BoppOperator, b: BoppOperator, tests, expected=None) -> float:
    """max over tests of ||(AB - BA) psi - expected psi|| / ||psi||.

    ``expected`` defaults to the tabulated constant: ``i hbar {a, b}`` for a
    left pair, its negative for a right pair, zero for a left/right mix.
    """
    tests = list(tests)
    if not tests:
        raise ValueError("commutator_residual needs at least one test field")
    e = _expected_bracket(a, b) if expected is None else expected
    worst = 0.0
    for psi in tests:
        ab = bopp_apply(a, bopp_apply(b, psi)).values
        ba = bopp_apply(b, bopp_apply(a, psi)).values
        r = ab - ba - e * psi.values
        worst = max(worst, float(np.linalg.norm(r) / np.linalg.norm(psi.values)))
    return worst


def bopp_generator(h: PolySymbol, hbar: float) -> PolyDiffOperator:
    """``-(i/hbar)(H_L - H_R)``."""
    return (bopp_left(h, hbar) - bopp_right(h, hbar)) * (-1j / hbar)


@dataclass
class BoppHistory:
    times: list
    fields: list
    imag_residue: list  # max |Im psi| / max |psi| per snapshot

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def norms(self) -> np.ndarray:
        return np.array([float(np.sum(np.abs(f.values) ** 2) * f.grid.dV) for f in self.fields])


def bopp_propagate(h: PolySymbol, psi0, t_final: float, dt: float = 1e-3, save_every: int = 1) -> BoppHistory:
    """RK4 integration of d psi/dt = -(i/hbar)(H_L - H_R) psi.

    ``psi0`` is a Field or a pure Wigner State; a state is scaled by
    (2 pi hbar)^(N/2) so that ``<psi|psi> = 1``.
    """
    from .states import State

    if isinstance(psi0, State):
        g = psi0.grid
        psi0 = Field(g, psi0.values * (2 * math.pi * g.hbar) ** (g.n_dof / 2))
    grid = psi0.grid
    gen = bopp_generator(h, grid.hbar)
    # precompile: coefficient samples and multipliers
    parts = [(c.evaluate(grid), derivative_multiplier(grid, gamma) if any(gamma) else None)
             for gamma, c in gen.terms.items()]

    def rhs(y):
        yh = _g.fftn(y)
        out = np.zeros(grid.shape, dtype=complex)
        for cv, m in parts:
            out = out + cv * (_g.ifftn(m * yh) if m is not None else y)
        return out

    n = int(math.ceil(t_final / dt - 1e-9)) if t_final > 0 else 0
    step = t_final / n if n else dt
    save_every = max(1, int(save_every))
    y = np.array(psi0.values, dtype=complex)
    scale = float(np.abs(y).max()) or 1.0
    times, fields, resid = [0.0], [Field(grid, y.copy())], [float(np.abs(y.imag).max()) / scale]
    for i in range(1, n + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * step * k1)
        k3 = rhs(y + 0.5 * step * k2)
        k4 = rhs(y + step * k3)
        y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if i % save_every == 0 or i == n:
            if not np.all(np.isfinite(y)):
                raise BlowUp(f"non-finite samples at t={i * step:.6g}")
            times.append(i * step)
            fields.append(Field(grid, y.copy()))
            resid.append(float(np.abs(y.imag).max()) / scale)
    return BoppHistory(times, fields, resid)


def classical_limit_residual(h: PolySymbol, psi: Field, hbar_list) -> list[tuple[float, float]]:
    """Relative distance between the Bopp generator and the Poisson bracket per hbar.

    ``psi`` is sampled on a grid whose hbar is replaced for each entry; the
    field values are kept, only the generator changes.
    """
    out = []
    ref_grid = psi.grid
    for hbar in hbar_list:
        g = ref_grid.with_hbar(hbar)
        f = Field(g, np.asarray(psi.values, dtype=complex))
        quantum = bopp_generator(h, hbar).apply(f).values
        classical = _poisson_operator(h).apply(f).values
        den = float(np.linalg.norm(classical))
        num = float(np.linalg.norm(quantum - classical))
        out.append((float(hbar), num / den if den > 0 else num))
    return out


def _poisson_operator(h: PolySymbol) -> PolyDiffOperator:
    """``{h, .}`` as ``sum_n dh/dx_n d/dp_n - dh/dp_n d/dx_n``."""
    n = h.n_dof
    op = PolyDiffOperator(n, {})
    for k in range(n):
        op = op + PolyDiffOperator.derivative(n, n + k) * h.derivative(k)
        op = op - PolyDiffOperator.derivative(n, k) * h.derivative(n + k)
    return op

"""Polynomial phase-space symbols with exact calculus and a small text parser.

A :class:`PolySymbol` maps exponent tuples ``(a_x1..a_xN, b_p1..b_pN)`` to
coefficients. Coefficients are real for anything the parser produces; the
algebra module may build complex ones internally (e.g. Bopp expansions).
"""

from __future__ import annotations

import math
import re
from itertools import product as iproduct

import numpy as np

from .errors import BadAxis, ParseError
from .grid import Field, Grid

Exp = tuple[int, ...]


def _clean(terms: dict, n_dof: int) -> dict:
    out = {}
    for e, c in terms.items():
        if len(e) != 2 * n_dof:
            raise ValueError(f"exponent {e} does not match n_dof={n_dof}")
        if c != 0:
            if isinstance(c, complex) and c.imag == 0:
                c = c.real
            out[tuple(int(k) for k in e)] = c
    return out


class PolySymbol:
    """Sparse multivariate polynomial in (x1..xN, p1..pN)."""

    __slots__ = ("n_dof", "terms")

    def __init__(self, n_dof: int, terms=None):
        self.n_dof = int(n_dof)
        self.terms = _clean(dict(terms or {}), self.n_dof)

    # construction helpers
    @classmethod
    def constant(cls, n_dof: int, c) -> "PolySymbol":
        return cls(n_dof, {(0,) * (2 * n_dof): c})

    @classmethod
    def variable(cls, n_dof: int, axis: int) -> "PolySymbol":
        e = [0] * (2 * n_dof)
        e[axis] = 1
        return cls(n_dof, {tuple(e): 1.0})

    @classmethod
    def x(cls, n: int = 0, n_dof: int = 1) -> "PolySymbol":
        return cls.variable(n_dof, n)

    @classmethod
    def p(cls, n: int = 0, n_dof: int = 1) -> "PolySymbol":
        return cls.variable(n_dof, n_dof + n)

    # structure
    @property
    def ndim(self) -> int:
        return 2 * self.n_dof

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def degree_in(self, axis: int) -> int:
        return max((e[axis] for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def is_real(self) -> bool:
        return all(not isinstance(c, complex) for c in self.terms.values())

    def constant_term(self):
        return self.terms.get((0,) * self.ndim, 0.0)

    def __eq__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PolySymbol.constant(self.n_dof, other)
        if not isinstance(other, PolySymbol):
            return NotImplemented
        return self.n_dof == other.n_dof and self.terms == other.terms

    def __hash__(self):
        return hash((self.n_dof, frozenset(self.terms.items())))

    def __repr__(self):
        if self.is_real():
            return f"PolySymbol({format_poly(self)!r})"
        return f"PolySymbol(n_dof={self.n_dof}, terms={self.terms!r})"

    def allclose(self, other: "PolySymbol", atol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0) - other.terms.get(k, 0)) <= atol for k in keys)

    # arithmetic
    def _coerce(self, other) -> "PolySymbol":
        if isinstance(other, PolySymbol):
            if other.n_dof != self.n_dof:
                raise ValueError("symbols have different n_dof")
            return other
        return PolySymbol.constant(self.n_dof, other)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0) + c
        return PolySymbol(self.n_dof, terms)

    __radd__ = __add__

    def __neg__(self):
        return PolySymbol(self.n_dof, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, PolySymbol):
            return PolySymbol(self.n_dof, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return PolySymbol(self.n_dof, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = PolySymbol.constant(self.n_dof, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def conj(self) -> "PolySymbol":
        return PolySymbol(self.n_dof, {e: np.conj(c).item() if isinstance(c, complex) else c for e, c in self.terms.items()})

    # calculus
    def derivative(self, axis: int, order: int = 1) -> "PolySymbol":
        terms = {}
        for e, c in self.terms.items():
            k = e[axis]
            if k < order:
                continue
            f = math.perm(k, order)
            ne = list(e)
            ne[axis] = k - order
            terms[tuple(ne)] = terms.get(tuple(ne), 0) + c * f
        return PolySymbol(self.n_dof, terms)

    def multi_derivative(self, orders) -> "PolySymbol":
        out = self
        for axis, k in enumerate(orders):
            if k:
                out = out.derivative(axis, k)
                if out.is_zero():
                    break
        return out

    def shift(self, delta) -> "PolySymbol":
        """Return ``s(z + delta)``."""
        delta = list(delta)
        out = PolySymbol(self.n_dof)
        for e, c in self.terms.items():
            term = PolySymbol.constant(self.n_dof, c)
            for axis, k in enumerate(e):
                if k:
                    lin = PolySymbol.variable(self.n_dof, axis) + delta[axis]
                    term = term * lin**k
            out = out + term
        return out

    def derivative_orders(self):
        """All multi-orders alpha with a possibly nonzero derivative."""
        caps = [self.degree_in(a) for a in range(self.ndim)]
        for alpha in iproduct(*[range(c + 1) for c in caps]):
            if sum(alpha) <= self.degree:
                yield alpha

    # evaluation
    def evaluate(self, grid: Grid) -> np.ndarray:
        if grid.n_dof != self.n_dof:
            raise ValueError(f"symbol has n_dof={self.n_dof}, grid has {grid.n_dof}")
        complex_ = not self.is_real()
        out = np.zeros(grid.shape, dtype=complex if complex_ else float)
        coords = grid.coords()
        powers: dict = {}
        for e, c in self.terms.items():
            term = c
            for axis, k in enumerate(e):
                if k:
                    key = (axis, k)
                    if key not in powers:
                        powers[key] = coords[axis] ** k
                    term = term * powers[key]
            out = out + term
        return out

    def evaluate_at(self, points) -> np.ndarray:
        """Evaluate at an ``(m, 2N)`` array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts), dtype=float if self.is_real() else complex)
        for e, c in self.terms.items():
            term = np.full(len(pts), c)
            for axis, k in enumerate(e):
                if k:
                    term = term * pts[:, axis] ** k
            out = out + term
        return out


def axis_names(n_dof: int) -> list[str]:
    if n_dof == 1:
        return ["x", "p"]
    return [f"x{i + 1}" for i in range(n_dof)] + [f"p{i + 1}" for i in range(n_dof)]


def resolve_variable(variable, n_dof: int) -> int:
    if isinstance(variable, str):
        names = axis_names(n_dof)
        if variable in names:
            return names.index(variable)
        if n_dof == 1 and variable in ("x1", "p1"):
            return 0 if variable == "x1" else 1
        raise BadAxis(f"unknown variable {variable!r}")
    variable = int(variable)
    if not 0 <= variable < 2 * n_dof:
        raise BadAxis(f"variable index {variable} out of range")
    return variable


def poly_derivative(s: PolySymbol, variable) -> PolySymbol:
    """Exact partial derivative with respect to a named or indexed variable."""
    return s.derivative(resolve_variable(variable, s.n_dof))


def eval_on_grid(s: PolySymbol, grid: Grid) -> Field:
    return Field(grid, s.evaluate(grid))


def smoothing_operator(s: PolySymbol, widths, sign: float = 1.0) -> PolySymbol:
    """Apply ``exp(sign * sum_a w_a^2/2 d^2/dz_a^2)``; terminates on polynomials."""
    n = s.n_dof
    w2 = [w[0] ** 2 for w in widths] + [w[1] ** 2 for w in widths]
    out = s
    term = s
    k = 0
    while not term.is_zero():
        k += 1
        nxt = PolySymbol(n)
        for axis in range(2 * n):
            nxt = nxt + term.derivative(axis, 2) * (0.5 * sign * w2[axis])
        term = nxt * (1.0 / k)
        out = out + term
    return out


def husimi_symbol(s: PolySymbol, grid: Grid) -> PolySymbol:
    """Gaussian-smoothed symbol using the grid's widths."""
    return smoothing_operator(s, grid.widths)


# parser --------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<var>[xp]\d*)
  | (?P<op>[-+*^])
  """,
    re.VERBOSE,
)


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos),
                             {"number", "variable", "+", "-", "*", "^"})
        if m.lastgroup != "ws":
            toks.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, n_dof):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.n_dof = n_dof

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, expected):
        kind, val, pos = self.peek()
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}, expected {' or '.join(sorted(expected))}",
                         _byte_offset(self.text, pos), set(expected))

    def parse(self):
        terms = []
        sign = 1.0
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
        terms.append(self.term(sign))
        while True:
            kind, val, _ = self.peek()
            if kind == "end":
                break
            if kind == "op" and val in "+-":
                self.take()
                terms.append(self.term(-1.0 if val == "-" else 1.0))
            else:
                self.fail({"+", "-", "end of input"})
        return terms

    def term(self, sign):
        coef = sign
        powers: dict[str, int] = {}
        coef *= self.factor(powers)
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            coef *= self.factor(powers)
        return coef, powers

    def factor(self, powers) -> float:
        """Consume one factor; variables go into ``powers``, numbers are returned."""
        kind, val, _ = self.peek()
        if kind == "num":
            self.take()
            base = float(val)
            if self.peek()[0] == "op" and self.peek()[1] == "^":
                self.take()
                base = base ** self.exponent()
            return base
        if kind == "var":
            self.take()
            k = 1
            if self.peek()[0] == "op" and self.peek()[1] == "^":
                self.take()
                k = self.exponent()
            powers[val] = powers.get(val, 0) + k
            return 1.0
        self.fail({"number", "variable"})

    def exponent(self) -> int:
        kind, val, _ = self.peek()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            self.fail({"non-negative integer exponent"})
        self.take()
        return int(val)


def _infer_n_dof(names) -> int:
    n = 1
    for name in names:
        if len(name) > 1:
            n = max(n, int(name[1:]))
    return n


def parse_poly(text: str, n_dof: int | None = None) -> PolySymbol:
    """Parse ``coef * x^a * p^b`` style sums into a :class:`PolySymbol`.

    Variables are ``x``/``p`` for one degree of freedom or ``x1..xN``,
    ``p1..pN``. ``n_dof`` is inferred from the highest index when omitted.
    """
    parser = _Parser(text, n_dof)
    raw = parser.parse()
    names = {name for _, powers in raw for name in powers}
    bare = {name for name in names if len(name) == 1}
    indexed = names - bare
    if n_dof is None:
        n_dof = _infer_n_dof(indexed)
    if bare and n_dof != 1:
        raise ParseError("bare x/p is only allowed for one degree of freedom", 0, {"indexed variable"})
    out_terms: dict = {}
    for coef, powers in raw:
        e = [0] * (2 * n_dof)
        for name, k in powers.items():
            idx = 0 if len(name) == 1 else int(name[1:]) - 1
            if not 0 <= idx < n_dof:
                pos = text.find(name)
                raise ParseError(f"variable {name} exceeds n_dof={n_dof}", _byte_offset(text, max(pos, 0)),
                                 {f"index 1..{n_dof}"})
            axis = idx if name[0] == "x" else n_dof + idx
            e[axis] += k
        e = tuple(e)
        out_terms[e] = out_terms.get(e, 0.0) + coef
    return PolySymbol(n_dof, out_terms)


def _fmt_coef(c) -> str:
    c = float(c)
    if c == int(c) and abs(c) < 1e15:
        return repr(float(c)).rstrip("0").rstrip(".") if c != 0 else "0"
    return repr(c)


def format_poly(s: PolySymbol) -> str:
    """Canonical text form; ``parse_poly(format_poly(s)) == s``."""
    if not s.terms:
        return "0"
    if not s.is_real():
        raise ValueError("only real symbols have a text form")
    names = axis_names(s.n_dof)
    keys = sorted(s.terms, key=lambda e: (sum(e), tuple(-k for k in e)))
    parts = []
    for i, e in enumerate(keys):
        c = s.terms[e]
        sign = "-" if c < 0 else "+"
        factors = []
        mag = abs(c)
        vars_ = [names[a] + (f"^{k}" if k > 1 else "") for a, k in enumerate(e) if k]
        if mag != 1.0 or not vars_:
            factors.append(_fmt_coef(mag))
        factors.extend(vars_)
        body = "*".join(factors)
        if i == 0:
            parts.append(body if sign == "+" else "-" + body)
        else:
            parts.append(f" {sign} {body}")
    return "".join(parts)

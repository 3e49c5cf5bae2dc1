import numpy as np
import pytest

from husimiflow.algebra import generator_flux, husimi_star, moyal_product, poisson_apply, smoothing_product
from husimiflow.grid import gaussian_smooth
from husimiflow.states import coherent_husimi, coherent_wigner
from husimiflow.symbols import PolySymbol, husimi_symbol, parse_poly

x, p = PolySymbol.x(), PolySymbol.p()


def test_moyal_commutator_of_x_and_p(g64):
    xp = moyal_product(x, p, grid=g64)
    px = moyal_product(p, x, grid=g64)
    assert (xp - px).allclose(PolySymbol.constant(1, 1j * g64.hbar))


def test_moyal_square_of_linear_symbol_is_pointwise(g64):
    assert moyal_product(x, x, grid=g64).allclose(parse_poly("x^2"))


def test_moyal_product_on_field_matches_bopp_form(g64):
    w = coherent_wigner(g64, (0.5, -0.2))
    X, P = g64.coords()
    # p * W = (p - i hbar/2 d/dx) W; for the Gaussian dW/dx = -2 (x - x0) W / hbar
    expect = (P - 0.5j * g64.hbar * (-2 * (X - 0.5) / g64.hbar)) * w.values
    got = moyal_product(p, w.field).values
    assert np.abs(got - expect).max() < 1e-10


def test_smoothing_product_with_constant_is_identity(g64):
    q = coherent_husimi(g64, (1.0, 0.0))
    out = smoothing_product(PolySymbol.constant(1, 1.0), q.field)
    assert np.abs(out.values - q.values).max() < 1e-15


def test_husimi_star_is_smoothing_of_moyal(g64):
    # K(a * W) = (K a) *_H (K W) for polynomial a
    w = coherent_wigner(g64, (0.7, 0.3))
    a = parse_poly("x^2 + x*p")
    lhs = gaussian_smooth(moyal_product(a, w.field)).values
    rhs = husimi_star(husimi_symbol(a, g64), gaussian_smooth(w.field)).values
    assert np.abs(lhs - rhs).max() < 1e-10 * np.abs(lhs).max()


def test_poisson_bracket_of_oscillator(g64):
    h = parse_poly("0.5*p^2 + 0.5*x^2")
    assert poisson_apply(h, x, grid=g64).allclose(-p)
    assert poisson_apply(h, p, grid=g64).allclose(x)


def test_generator_flux_requires_husimi(g64):
    w = coherent_wigner(g64, (0.0, 0.0))
    with pytest.raises(ValueError):
        generator_flux(parse_poly("x^2"), w)


def test_generator_flux_of_quadratic_is_classical(g64):
    q = coherent_husimi(g64, (1.0, 0.5))
    h = husimi_symbol(parse_poly("0.5*p^2 + 0.5*x^2"), g64)
    Jq = generator_flux(h, q, "quantum")
    Jc = generator_flux(h, q, "classical")
    assert np.abs(Jq.array() - Jc.array()).max() < 1e-14

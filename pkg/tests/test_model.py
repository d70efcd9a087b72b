import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipsoid_maps.errors import DomainError, ParameterError
from ellipsoid_maps.model import (
    ModelParams,
    PhaseState,
    PsiState,
    energy_density_psi,
    energy_density_x,
    h_second_derivative,
    identity_profile,
    lyapunov,
    lyapunov_rate,
    psi_to_x,
    rhs_psi,
    rhs_x,
    theta_rate,
    theta_rate_coefficients,
    theta_rate_limit,
    x_to_psi,
)


# -- parameters ---------------------------------------------------------------


def test_lambda_values():
    assert ModelParams(3, 1.0, 1).lam == 2
    assert ModelParams(4, 0.5, 2).lam == 8
    assert ModelParams(7, 1.0, 3).lam == 24


def test_threshold_exact():
    assert ModelParams(7, 1.0, 1).a_crit_sq_exact == Fraction(24, 25)
    assert ModelParams(3, 1.0, 1).a_crit_sq_exact == Fraction(8)
    assert ModelParams(8, 0.5, 1).a_crit_sq_exact == Fraction(7, 9)


@pytest.mark.parametrize(
    "k,a,d",
    [(2, 1.0, 1), (3, 0.0, 1), (3, float("nan"), 1), (3, float("inf"), 1), (3, 1.0, 0), (3.5, 1.0, 1), (3, 1.0, 1.5)],
)
def test_invalid_params_rejected(k, a, d):
    with pytest.raises(ParameterError):
        ModelParams(k, a, d)


def test_negative_a_same_as_positive():
    x, h, hp = 0.7, 0.3, -0.2
    assert h_second_derivative(ModelParams(4, -0.5, 2), x, h, hp) == h_second_derivative(ModelParams(4, 0.5, 2), x, h, hp)


# -- Euler-Lagrange oracle ----------------------------------------------------


def _lagrangians(k, a, d):
    """Energy densities built from the embedding geometry, not from the package formulas."""
    psi, xs, f = sp.symbols("psi x f", real=True)
    F = sp.Function("F")
    lam = d * (d + k - 2)
    # meridian of the ellipsoid: (sin psi, a cos psi); the parallel sphere has radius sin psi
    merid = sp.Matrix([sp.sin(psi), a * sp.cos(psi)])
    g_dom = sp.simplify(merid.diff(psi).dot(merid.diff(psi)))
    g_tgt = g_dom.subs(psi, f)
    fpsi = F(psi)
    dens = (fpsi.diff(psi) ** 2 * g_tgt.subs(f, fpsi) / g_dom + lam * sp.sin(fpsi) ** 2 / sp.sin(psi) ** 2)
    dens = dens * sp.sqrt(g_dom) * sp.sin(psi) ** (k - 1)
    return psi, F, dens


def _el_second_derivative(psi, F, dens):
    el = sp.euler_equations(dens, F(psi), psi)[0].lhs
    fpp = sp.solve(el, F(psi).diff(psi, 2))[0]
    return fpp


@pytest.mark.parametrize("k,a,d", [(4, 0.5, 2), (3, 1.3, 1), (6, 2.0, 3)])
def test_rhs_psi_matches_euler_lagrange(k, a, d):
    psi, F, dens = _lagrangians(k, sp.Rational(str(a)), d)
    fpp = _el_second_derivative(psi, F, dens)
    u, v = sp.symbols("u v")
    fpp = fpp.subs(F(psi).diff(psi), v).subs(F(psi), u)
    ev = sp.lambdify((psi, u, v), fpp, "math")
    params = ModelParams(k, a, d)
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = PsiState(rng.uniform(0.2, 2.9), rng.uniform(-1, 4), rng.uniform(-2, 2))
        want = ev(s.psi, s.f, s.fp)
        got = rhs_psi(params, s)[1]
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_rhs_x_sympy_point():
    # line chart: f(psi) = h(x) + pi/2 with psi = 2 arctan(e^x); transport the oracle
    k, a, d = 4, sp.Rational(1, 2), 2
    psi, F, dens = _lagrangians(k, a, d)
    fpp = _el_second_derivative(psi, F, dens)
    x0, h0, hp0 = sp.Rational(7, 10), sp.Rational(3, 10), sp.Rational(-1, 5)
    psi0 = 2 * sp.atan(sp.exp(x0))
    fp0 = hp0 / sp.sin(psi0)
    val = fpp.subs(F(psi).diff(psi), fp0).subs(F(psi), h0 + sp.pi / 2).subs(psi, psi0)
    hpp = val * sp.sin(psi0) ** 2 + fp0 * sp.sin(psi0) * sp.cos(psi0)
    want = float(sp.N(hpp, 30))
    got = rhs_x(ModelParams(4, 0.5, 2), PhaseState(0.7, 0.3, -0.2))[1]
    assert got == pytest.approx(want, rel=1e-13)


def test_line_chart_euler_lagrange_from_density():
    # EL of the line-chart density reproduces h'' (checks energy_density_x too)
    k, a, d = 5, 0.8, 1
    params = ModelParams(k, a, d)
    x = sp.symbols("x", real=True)
    H = sp.Function("H")
    a2 = sp.Rational(4, 5) ** 2
    lam = d * (d + k - 2)
    D = a2 / sp.cosh(x) ** 2 + sp.tanh(x) ** 2
    G = a2 * sp.cos(H(x)) ** 2 + sp.sin(H(x)) ** 2
    L = (H(x).diff(x) ** 2 * G / D + lam * sp.cos(H(x)) ** 2) * sp.sqrt(D) / sp.cosh(x) ** (k - 2)
    el = sp.euler_equations(L, H(x), x)[0].lhs
    hpp = sp.solve(el, H(x).diff(x, 2))[0]
    u, v = sp.symbols("u v")
    ev = sp.lambdify((x, u, v), hpp.subs(H(x).diff(x), v).subs(H(x), u), "math")
    rng = np.random.default_rng(2)
    for _ in range(10):
        xx, hh, vv = rng.uniform(-3, 3), rng.uniform(-1.5, 1.5), rng.uniform(-2, 2)
        assert h_second_derivative(params, xx, hh, vv) == pytest.approx(ev(xx, hh, vv), rel=1e-11, abs=1e-12)
        dens = float(L.subs(H(x).diff(x), vv).subs(H(x), hh).subs(x, xx))
        assert energy_density_x(params, PhaseState(xx, hh, vv)) == pytest.approx(dens, rel=1e-12)


# -- chart transport ----------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(
    k=st.integers(3, 9),
    a=st.floats(0.2, 4.0),
    d=st.integers(1, 3),
    psi=st.floats(0.05, math.pi - 0.05),
    f=st.floats(-2.0, 5.0),
    fp=st.floats(-3.0, 3.0),
)
def test_charts_agree(k, a, d, psi, f, fp):
    params = ModelParams(k, a, d)
    _, fpp = rhs_psi(params, PsiState(psi, f, fp))
    x = psi_to_x(psi)
    s = math.sin(psi)
    via_psi = fpp * s * s + fp * s * math.cos(psi)
    via_x = h_second_derivative(params, x, f - math.pi / 2, fp * s)
    assert via_x == pytest.approx(via_psi, rel=1e-10, abs=1e-10 * max(1.0, abs(via_psi)))


@settings(max_examples=100, deadline=None)
@given(psi=st.floats(1e-6, math.pi - 1e-6), f=st.floats(-2, 5), fp=st.floats(-3, 3))
def test_energy_densities_transport(psi, f, fp):
    # dx = dpsi / sin psi
    params = ModelParams(4, 0.6, 2)
    x = psi_to_x(psi)
    e_psi = energy_density_psi(params, PsiState(psi, f, fp))
    e_x = energy_density_x(params, PhaseState(x, f - math.pi / 2, fp * math.sin(psi)))
    assert e_x == pytest.approx(e_psi * math.sin(psi), rel=1e-9, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-30, 30))
def test_psi_x_round_trip(x):
    assert psi_to_x(x_to_psi(x)) == pytest.approx(x, abs=1e-12 * max(1.0, math.exp(abs(x))))


@pytest.mark.parametrize("psi", [0.0, math.pi, -0.1, 4.0, float("nan")])
def test_psi_domain(psi):
    with pytest.raises(DomainError):
        psi_to_x(psi)


def test_rhs_psi_domain():
    with pytest.raises(DomainError):
        rhs_psi(ModelParams(3, 1.0), PsiState(0.0, 1.0, 0.0))
    with pytest.raises(DomainError):
        rhs_x(ModelParams(3, 1.0), PhaseState(0.0, float("nan"), 0.0))


# -- identity map -------------------------------------------------------------


@pytest.mark.parametrize("k", [3, 4, 5, 7])
@pytest.mark.parametrize("a", [0.3, 0.5, 1.0, 2.0, 5.0])
def test_identity_solves_equation(k, a):
    x = np.arange(-15, 15.0001, 0.01)
    s = identity_profile(x)
    resid = -s.hp * np.tanh(x) - h_second_derivative(ModelParams(k, a, 1), x, s.h, s.hp)
    assert np.max(np.abs(resid)) <= 1e-9


def test_identity_limits():
    s = identity_profile(20.0)
    assert s.h == pytest.approx(math.pi / 2, abs=1e-8)
    assert s.hp == pytest.approx(2 * math.exp(-20), rel=1e-8)
    s = identity_profile(-20.0)
    assert s.h == pytest.approx(-math.pi / 2, abs=1e-8)
    assert identity_profile(0.0).hp == 1.0


def test_identity_extreme_x_finite():
    s = identity_profile(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(s.h)) and np.all(np.isfinite(s.hp))
    assert np.all(np.isfinite(h_second_derivative(ModelParams(3, 0.5), np.array([800.0]), 1.5, 1e-300)))


# -- structural properties ----------------------------------------------------


def test_round_sphere_reduction():
    # a = 1: h'' = (k-2) tanh x h' - lam/2 sin 2h
    p = ModelParams(5, 1.0, 2)
    x, h, hp = 0.4, 0.9, -0.3
    assert h_second_derivative(p, x, h, hp) == pytest.approx(3 * math.tanh(x) * hp - 0.5 * p.lam * math.sin(2 * h), rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-10, 10), h=st.floats(-3, 3), hp=st.floats(-3, 3))
def test_oddness(x, h, hp):
    # (x, h, h') -> (-x, -h, h') sends h'' to -h''
    p = ModelParams(4, 0.7, 1)
    assert h_second_derivative(p, -x, -h, hp) == pytest.approx(-h_second_derivative(p, x, h, hp), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-10, 10), h=st.floats(-3, 3), hp=st.floats(-3, 3))
def test_lyapunov_rate_matches_chain_rule(x, h, hp):
    # independent route: W' via partial derivatives and the equation
    p = ModelParams(6, 0.45, 2)
    a2 = p.a_sq
    t = math.tanh(x)
    sech2 = 1.0 / math.cosh(x) ** 2
    D = a2 * sech2 + t * t
    dD = 2 * t * sech2 * (1 - a2)
    G = a2 * math.cos(h) ** 2 + math.sin(h) ** 2
    dG = (1 - a2) * math.sin(2 * h)
    hpp = h_second_derivative(p, x, h, hp)
    dW = 2 * hp * hpp * G / D + hp**3 * dG / D - hp**2 * G * dD / D**2 + p.lam * math.sin(2 * h) * hp
    got = lyapunov_rate(p, PhaseState(x, h, hp))
    assert got == pytest.approx(dW, rel=1e-9, abs=1e-9)


def test_lyapunov_nonnegative_and_zero():
    p = ModelParams(3, 0.5)
    assert lyapunov(p, PhaseState(0.3, 0.0, 0.0)) == 0.0
    assert lyapunov(p, PhaseState(0.3, math.pi, 0.0)) == pytest.approx(0.0, abs=1e-30)
    rng = np.random.default_rng(0)
    s = PhaseState(rng.normal(size=1000), rng.normal(size=1000), rng.normal(size=1000))
    assert np.all(lyapunov(p, s) >= 0)


# -- phase angle --------------------------------------------------------------


def _remainder(p, x, h, th):
    """Remainder of the regrouped angle equation, written out term by term."""
    a2, lam, k = p.a_sq, p.lam, p.k
    G = a2 * math.cos(h) ** 2 + math.sin(h) ** 2
    D = a2 / math.cosh(x) ** 2 + math.tanh(x) ** 2
    T = math.tanh(x) / (a2 + math.sinh(x) ** 2)
    sinc = math.sin(2 * h) / (2 * h)
    s2, as2 = math.sin(2 * th), abs(math.sin(2 * th))
    return (
        -(1 - a2) / G * sinc * h * h * math.sin(th) ** 2
        + lam * D * (1 / a2 - sinc / G) * math.cos(th) ** 2
        + 0.5 * (k - 2) * (math.tanh(x) * s2 - as2)
        + 0.5 * (1 - a2) * (T * s2 - T * as2)
    )


@settings(max_examples=200, deadline=None)
@given(
    k=st.integers(3, 8),
    a=st.floats(0.2, 3.0),
    x=st.floats(-6, 6),
    r=st.floats(1e-3, 1.2),
    th=st.floats(-math.pi, math.pi),
)
def test_theta_decomposition(k, a, x, r, th):
    p = ModelParams(k, a, 1)
    h, hp = r * math.cos(th), r * math.sin(th)
    if abs(h) < 1e-8:
        return
    c0, A, B = theta_rate_coefficients(p, x)
    want = c0 + A * abs(math.sin(2 * th)) + B * math.cos(2 * th) + _remainder(p, x, h, th)
    assert theta_rate(p, PhaseState(x, h, hp)) == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_theta_rate_on_vertical_axis():
    # h = 0, h' != 0 at x = 0: only -sin^2 theta survives
    assert theta_rate(ModelParams(3, 0.5), PhaseState(0.0, 0.0, 0.7)) == pytest.approx(-1.0, abs=1e-15)


def test_theta_rate_origin_rejected():
    with pytest.raises(DomainError):
        theta_rate(ModelParams(3, 1.0), PhaseState(0.0, 0.0, 0.0))


@pytest.mark.parametrize("k,a,d", [(3, 1.0, 1), (7, 1.0, 1), (8, 0.5, 1), (3, 4.0, 1), (5, 1.7, 2)])
def test_theta_limit_sign_matches_regime(k, a, d):
    p = ModelParams(k, a, d)
    assert (theta_rate_limit(p) < 0) == p.oscillatory
    c0, A, B = theta_rate_coefficients(p, 40.0)
    assert c0 + math.hypot(A, B) == pytest.approx(theta_rate_limit(p), abs=1e-12)

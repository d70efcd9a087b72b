"""Reduced equations for equivariant harmonic self-maps of the ellipsoid E_a.

Two charts are used.  The polar chart works with ``f(psi)`` on ``(0, pi)``;
the line chart uses ``x = log tan(psi/2)`` and ``h = f - pi/2`` so that the
poles are pushed to ``x = -inf`` and ``x = +inf``.  All functions here are
pure and accept NumPy arrays wherever a scalar is documented, so they can be
evaluated on whole grids.

Notation used throughout::

    lam   = d (d + k - 2)                 eigenvalue of the eigenmap
    G(h)  = a^2 cos^2 h + sin^2 h         target metric factor
    D(x)  = a^2 sech^2 x + tanh^2 x       domain metric factor
    T(x)  = tanh x / (a^2 + sinh^2 x)     = tanh x sech^2 x / D(x)
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "ModelParams",
    "PhaseState",
    "PsiState",
    "rhs_x",
    "rhs_psi",
    "h_second_derivative",
    "lyapunov",
    "lyapunov_rate",
    "theta_rate",
    "theta_rate_coefficients",
    "theta_rate_limit",
    "energy_density_x",
    "energy_density_psi",
    "psi_to_x",
    "x_to_psi",
    "identity_profile",
    "sech2",
    "domain_factor",
    "target_factor",
]


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``k``, semi-axis ``a`` and eigenmap degree ``d``."""

    k: int
    a: float
    d: int = 1

    def __post_init__(self):
        try:
            k = operator.index(self.k)
            d = operator.index(self.d)
        except TypeError as exc:
            raise ParameterError(f"k and d must be integers, got k={self.k!r}, d={self.d!r}") from exc
        a = float(self.a)
        if k < 3:
            raise ParameterError(f"k must be >= 3, got {k}")
        if d < 1:
            raise ParameterError(f"d must be >= 1, got {d}")
        if not math.isfinite(a) or a == 0.0:
            raise ParameterError(f"a must be finite and nonzero, got {self.a!r}")
        object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "a", a)

    @property
    def lam(self) -> int:
        return self.d * (self.d + self.k - 2)

    @property
    def a_sq(self) -> float:
        return self.a * self.a

    @property
    def a_crit_sq_exact(self) -> Fraction:
        """Threshold ``4 lam / (k-2)^2`` as an exact rational."""
        return Fraction(4 * self.lam, (self.k - 2) ** 2)

    @property
    def a_crit_sq(self) -> float:
        return float(self.a_crit_sq_exact)

    @property
    def oscillatory(self) -> bool:
        """Exact test of ``a^2 < a_crit_sq`` (the float ``a`` is a dyadic rational)."""
        return Fraction(self.a) ** 2 < self.a_crit_sq_exact


@dataclass(frozen=True)
class PhaseState:
    """Point ``(x, h, h')`` of the line-chart equation."""

    x: float
    h: float
    hp: float


@dataclass(frozen=True)
class PsiState:
    """Point ``(psi, f, f')`` of the polar-chart equation."""

    psi: float
    f: float
    fp: float


def _require_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite input: {v!r}")


# -- coefficient functions ----------------------------------------------------


def sech2(x):
    """``sech^2 x`` evaluated without overflow for large ``|x|``."""
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def domain_factor(a_sq: float, x):
    """``D(x) = a^2 sech^2 x + tanh^2 x``."""
    t = np.tanh(x)
    return a_sq * sech2(x) + t * t


def target_factor(a_sq: float, h):
    """``G(h) = a^2 cos^2 h + sin^2 h``."""
    c = np.cos(h)
    s = np.sin(h)
    return a_sq * c * c + s * s


def _geometry(a_sq, x):
    t = np.tanh(x)
    s2 = sech2(x)
    dom = a_sq * s2 + t * t
    # tanh x / (a^2 + sinh^2 x) rewritten to stay finite for |x| > 350
    tt = t * s2 / dom
    return t, s2, dom, tt


def h_second_derivative(params: ModelParams, x, h, hp):
    """``h''`` solved from the line-chart Euler-Lagrange equation."""
    a_sq = params.a_sq
    t, _, dom, tt = _geometry(a_sq, x)
    g = target_factor(a_sq, h)
    s2h = np.sin(2.0 * h)
    one_m = 1.0 - a_sq
    return (
        -0.5 * one_m * s2h / g * hp * hp
        + one_m * tt * hp
        + (params.k - 2) * t * hp
        - 0.5 * params.lam * dom / g * s2h
    )


def rhs_x(params: ModelParams, s: PhaseState):
    """First-order form ``(h', h'')`` of the line-chart equation.

    Raises
    ------
    DomainError
        If any component of ``s`` is not finite.
    """
    _require_finite(s.x, s.h, s.hp)
    return s.hp, h_second_derivative(params, s.x, s.h, s.hp)


def rhs_psi(params: ModelParams, s: PsiState):
    """First-order form ``(f', f'')`` of the polar-chart equation.

    The chart is singular at the poles, so ``psi`` must lie strictly inside
    ``(0, pi)``.
    """
    _require_finite(s.psi, s.f, s.fp)
    psi = np.asarray(s.psi, dtype=float)
    if np.any(psi <= 0.0) or np.any(psi >= math.pi):
        raise DomainError(f"psi must lie in (0, pi), got {s.psi!r}")
    a_sq = params.a_sq
    f, fp = s.f, s.fp
    sp, cp = np.sin(psi), np.cos(psi)
    gp = a_sq * sp * sp + cp * cp
    gf = a_sq * np.sin(f) ** 2 + np.cos(f) ** 2
    s2f = np.sin(2.0 * f)
    fpp = (
        0.5 * params.lam * gp / gf * s2f / (sp * sp)
        - (params.k - 1) * cp / sp * fp
        - 0.5 * (a_sq - 1.0) * s2f / gf * fp * fp
        + 0.5 * (a_sq - 1.0) * np.sin(2.0 * psi) / gp * fp
    )
    return fp, fpp


# -- Lyapunov function --------------------------------------------------------


def _kinetic(params, x, h, hp):
    a_sq = params.a_sq
    return hp * hp * target_factor(a_sq, h) / domain_factor(a_sq, x)


def lyapunov(params: ModelParams, s: PhaseState):
    """``W = h'^2 G(h)/D(x) + lam sin^2 h``; nonnegative, zero only at rest on h = m pi."""
    _require_finite(s.x, s.h, s.hp)
    return _kinetic(params, s.x, s.h, s.hp) + params.lam * np.sin(s.h) ** 2


def lyapunov_rate(params: ModelParams, s: PhaseState):
    """``dW/dx = 2 (k-2) tanh(x) h'^2 G(h)/D(x)``."""
    _require_finite(s.x, s.h, s.hp)
    return 2.0 * (params.k - 2) * np.tanh(s.x) * _kinetic(params, s.x, s.h, s.hp)


# -- phase angle --------------------------------------------------------------


def theta_rate(params: ModelParams, s: PhaseState, theta=None):
    """Rate of the phase angle ``theta = arctan(h'/h)`` along an orbit.

    Computed as ``(h'' h - h'^2) / (h^2 + h'^2)``.  ``theta`` is accepted
    for signature symmetry with integrators carrying it as a state component;
    the rate does not depend on the branch of the angle.
    """
    _require_finite(s.x, s.h, s.hp)
    r2 = s.h * s.h + s.hp * s.hp
    if np.any(r2 == 0.0):
        raise DomainError("phase angle undefined at (h, h') = (0, 0)")
    hpp = h_second_derivative(params, s.x, s.h, s.hp)
    return (hpp * s.h - s.hp * s.hp) / r2


def theta_rate_coefficients(params: ModelParams, x):
    """Coefficients ``(c0, A, B)`` of the regrouped angle equation.

    ``theta' = c0 + A |sin 2 theta| + B cos 2 theta + remainder``, where the
    remainder vanishes as the orbit shrinks to the origin.
    """
    lam = params.lam
    a_sq = params.a_sq
    t, _, _, tt = _geometry(a_sq, x)
    stretch = lam * t * t * (1.0 / a_sq - 1.0)
    c0 = -0.5 * (1.0 + lam + stretch)
    A = 0.5 * ((params.k - 2) + (1.0 - a_sq) * tt)
    B = -0.5 * (lam - 1.0 + stretch)
    return c0, A, B


def theta_rate_limit(params: ModelParams) -> float:
    """Large-x limit of ``c0 + sqrt(A^2 + B^2)``; negative iff the oscillatory regime holds."""
    a_sq = params.a_sq
    lam = params.lam
    return -0.5 * (1.0 + lam / a_sq) + math.sqrt((params.k - 2) ** 2 * a_sq**2 + (a_sq - lam) ** 2) / (2.0 * a_sq)


# -- energy -------------------------------------------------------------------


def energy_density_x(params: ModelParams, s: PhaseState):
    """Energy integrand in the line chart (normalising constant set to 1)."""
    _require_finite(s.x, s.h, s.hp)
    a_sq = params.a_sq
    dom = domain_factor(a_sq, s.x)
    bracket = s.hp**2 * target_factor(a_sq, s.h) / dom + params.lam * np.cos(s.h) ** 2
    return bracket * np.sqrt(dom) * sech2(s.x) ** (0.5 * (params.k - 2))


def energy_density_psi(params: ModelParams, s: PsiState):
    """Energy integrand in the polar chart (normalising constant set to 1)."""
    _require_finite(s.psi, s.f, s.fp)
    a_sq = params.a_sq
    sp, cp = np.sin(s.psi), np.cos(s.psi)
    gp = a_sq * sp * sp + cp * cp
    gf = a_sq * np.sin(s.f) ** 2 + np.cos(s.f) ** 2
    bracket = s.fp**2 * gf / gp + params.lam * np.sin(s.f) ** 2 / (sp * sp)
    return bracket * np.sqrt(gp) * sp ** (params.k - 1)


# -- coordinates --------------------------------------------------------------


def psi_to_x(psi):
    """``x = log tan(psi/2)`` on ``(0, pi)``."""
    p = np.asarray(psi, dtype=float)
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= math.pi):
        raise DomainError(f"psi must lie in (0, pi), got {psi!r}")
    out = np.log(np.tan(0.5 * p))
    return float(out) if out.ndim == 0 else out


def x_to_psi(x):
    """Inverse of :func:`psi_to_x`: ``psi = 2 arctan(e^x)``."""
    xa = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = 2.0 * np.arctan(np.exp(xa))
    return float(out) if out.ndim == 0 else out


def identity_profile(x) -> PhaseState:
    """The identity map in line-chart variables: ``h = gd(x)``, ``h' = sech x``."""
    _require_finite(x)
    with np.errstate(over="ignore"):
        h = np.arctan(np.sinh(x))
    hp = np.sqrt(sech2(x))
    if np.ndim(x) == 0:
        return PhaseState(float(x), float(h), float(hp))
    return PhaseState(np.asarray(x, dtype=float), h, hp)

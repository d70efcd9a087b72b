"""Linearisation at h = 0 and the Jacobi operator about the identity map.

The eigenvalue problem is written as ``J xi + lam_J w xi = 0`` where ``J``
is the non-weight part of the Jacobi operator,
``J xi = xi'' + p(x) xi' + q(x) xi``, and ``w = 1/(a^2 + sinh^2 x)`` is the
weight.  For the identity map the closed-form ground state is
``xi = (a^2 + sinh^2 x)^(-1/2)`` with ``lam_J = a^2 (2 - k)``.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, NonConvergenceError
from .model import ModelParams, PhaseState, domain_factor, sech2, target_factor

__all__ = [
    "Regime",
    "RootReport",
    "JacobiGrid",
    "EigenReport",
    "regime_classify",
    "linearized_rhs_origin",
    "jacobi_weight",
    "identity_coefficients",
    "jacobi_coefficients",
    "make_grid",
    "jacobi_apply",
    "jacobi_general_apply",
    "closed_form_eigenfunction",
    "sturm_count",
    "lowest_eigenvalue",
]


class Regime(str, enum.Enum):
    OSCILLATORY = "oscillatory"
    CRITICAL = "critical"
    NON_OSCILLATORY = "non_oscillatory"


@dataclass(frozen=True)
class RootReport:
    """Roots of ``alpha^2 - (k-2) alpha + lam/a^2 = 0``."""

    alpha_plus: complex
    alpha_minus: complex
    discriminant: float
    discriminant_exact: Fraction
    regime: Regime
    a_crit_sq: float


def regime_classify(params: ModelParams) -> RootReport:
    """Characteristic roots of the large-x linearisation at ``h = 0``.

    The regime is decided in exact rational arithmetic, so it agrees with
    ``params.oscillatory`` for every float ``a``.
    """
    k2 = params.k - 2
    disc_exact = Fraction(k2 * k2) - Fraction(4 * params.lam) / Fraction(params.a) ** 2
    if disc_exact < 0:
        regime = Regime.OSCILLATORY
    elif disc_exact == 0:
        regime = Regime.CRITICAL
    else:
        regime = Regime.NON_OSCILLATORY
    disc = k2 * k2 - 4.0 * params.lam / params.a_sq
    root = 0.5 * cmath.sqrt(complex(disc))
    return RootReport(
        alpha_plus=0.5 * k2 + root,
        alpha_minus=0.5 * k2 - root,
        discriminant=disc,
        discriminant_exact=disc_exact,
        regime=regime,
        a_crit_sq=params.a_crit_sq,
    )


def linearized_rhs_origin(params: ModelParams, x, state):
    """``(eta', eta'')`` for the exact (x-dependent) linearisation at ``h = 0``."""
    eta, etap = state
    a_sq = params.a_sq
    t = np.tanh(x)
    s2 = sech2(x)
    dom = a_sq * s2 + t * t
    etapp = (1.0 - a_sq) * t * s2 / dom * etap + (params.k - 2) * t * etap - params.lam / a_sq * dom * eta
    return etap, etapp


# -- coefficients -------------------------------------------------------------


def jacobi_weight(params: ModelParams, x):
    """Eigenvalue weight ``1/(cosh^2 x (a^2 sech^2 x + tanh^2 x)) = 1/(a^2 + sinh^2 x)``."""
    return sech2(x) / domain_factor(params.a_sq, x)


def _require_identity(params: ModelParams):
    if params.d != 1:
        raise DomainError(f"the identity map needs d = 1, got d = {params.d}")


def identity_coefficients(params: ModelParams, x):
    """``(p, q)`` of the Jacobi operator about the identity map."""
    _require_identity(params)
    a_sq = params.a_sq
    t = np.tanh(x)
    s2 = sech2(x)
    dom = a_sq * s2 + t * t
    ratio = (a_sq * s2 - t * t) / dom  # (a^2 - sinh^2) / (a^2 + sinh^2)
    p = -(params.k - 2) * t + (1.0 - a_sq) * t * s2 / dom
    q = (1.0 - a_sq) * ratio * s2 / dom + (params.k - 1) * ratio
    return p, q


def jacobi_coefficients(params: ModelParams, x, h, hp):
    """``(p, q)`` of the Jacobi operator about an arbitrary solution ``h``."""
    a_sq = params.a_sq
    one_m = 1.0 - a_sq
    lam = params.lam
    t = np.tanh(x)
    s2 = sech2(x)
    dom = a_sq * s2 + t * t
    g = target_factor(a_sq, h)
    s2h = np.sin(2.0 * h)
    c2h = np.cos(2.0 * h)
    p = one_m * s2h / g * hp - one_m * t * s2 / dom - (params.k - 2) * t
    q = (
        one_m * c2h / g * hp * hp
        - 0.5 * one_m**2 * s2h**2 / g**2 * hp * hp
        - 0.5 * lam * one_m * dom * s2h**2 / g**2
        + lam * dom * c2h / g
    )
    return p, q


# -- grids and operators ------------------------------------------------------


@dataclass
class JacobiGrid:
    """Uniform symmetric grid on ``[-X, X]`` with Dirichlet ends.

    Operators act on the full node vector and return values on the interior
    nodes ``x[1:-1]``.
    """

    x: np.ndarray
    dx: float
    X: float
    weight: np.ndarray
    p: np.ndarray
    q: np.ndarray

    @property
    def interior(self) -> np.ndarray:
        return self.x[1:-1]


def make_grid(params: ModelParams, X: float = 12.0, m: int = 12001) -> JacobiGrid:
    """Grid of ``m`` nodes (boundaries included) with identity-map coefficients."""
    if m < 3:
        raise ValueError("need at least 3 nodes")
    x = np.linspace(-X, X, m)
    # exact mirror symmetry of the abscissae
    x = 0.5 * (x - x[::-1])
    p, q = identity_coefficients(params, x)
    return JacobiGrid(x=x, dx=2.0 * X / (m - 1), X=float(X), weight=jacobi_weight(params, x), p=p, q=q)


def _apply(xi, dx, p, q):
    d2 = (xi[2:] - 2.0 * xi[1:-1] + xi[:-2]) / (dx * dx)
    d1 = (xi[2:] - xi[:-2]) / (2.0 * dx)
    return d2 + p[1:-1] * d1 + q[1:-1] * xi[1:-1]


def jacobi_apply(params: ModelParams, grid: JacobiGrid, xi) -> np.ndarray:
    """Second-order central-difference action of the identity-map operator (interior nodes)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != grid.x.shape:
        raise ValueError(f"xi has shape {xi.shape}, grid has {grid.x.shape}")
    return _apply(xi, grid.dx, grid.p, grid.q)


def jacobi_general_apply(params: ModelParams, h_profile: PhaseState, xi) -> np.ndarray:
    """Action of the Jacobi operator about the profile ``h`` on a uniform grid (interior nodes)."""
    x = np.asarray(h_profile.x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != x.shape or np.shape(h_profile.h) != x.shape or np.shape(h_profile.hp) != x.shape:
        raise ValueError("profile and xi must share one grid")
    steps = np.diff(x)
    dx = float(steps.mean())
    if not np.allclose(steps, dx, rtol=1e-9, atol=0.0):
        raise ValueError("profile grid must be uniform")
    p, q = jacobi_coefficients(params, x, np.asarray(h_profile.h), np.asarray(h_profile.hp))
    return _apply(xi, dx, p, q)


def closed_form_eigenfunction(params: ModelParams, x):
    """``(a^2 + sinh^2 x)^(-1/2)``, written as ``sech x / sqrt(D(x))``."""
    return np.sqrt(sech2(x) / domain_factor(params.a_sq, x))


# -- eigenvalue ---------------------------------------------------------------


@dataclass
class EigenReport:
    """Analytic versus discrete lowest Jacobi eigenvalue about the identity.

    ``exploratory`` lists the next discrete eigenvalues; they are not
    validated against anything.
    """

    k: int
    a: float
    X: float
    m: int
    dx: float
    lambda_analytic: float
    lambda_numeric: float
    rel_error: float
    eigfn_residual: float
    eigvec_asymmetry: float
    bracket: tuple[float, float]
    exploratory: list[float] = field(default_factory=list)
    eigvec: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "a": self.a,
            "X": self.X,
            "m": self.m,
            "dx": self.dx,
            "lambda_analytic": self.lambda_analytic,
            "lambda_numeric": self.lambda_numeric,
            "rel_error": self.rel_error,
            "eigfn_residual": self.eigfn_residual,
            "eigvec_asymmetry": self.eigvec_asymmetry,
            "bracket": list(self.bracket),
            "exploratory": list(self.exploratory),
        }


_GL5 = np.polynomial.legendre.leggauss(5)


def _log_mu(params: ModelParams, pts: np.ndarray) -> np.ndarray:
    """Cumulative integral of ``p`` from ``pts[0]`` (5-point Gauss-Legendre per cell)."""
    a, b = pts[:-1], pts[1:]
    half = 0.5 * (b - a)
    nodes, weights = _GL5
    xq = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    p, _ = identity_coefficients(params, xq)
    cell = half * (p @ weights)
    return np.concatenate([[0.0], np.cumsum(cell)])


def _pencil(params: ModelParams, X: float, m: int):
    """Symmetrised tridiagonal pencil ``(diag, off, weight)`` on the interior nodes.

    The self-adjoint form ``(mu xi')' + mu q xi + lam mu w xi = 0`` with
    ``mu = exp(int p)`` is discretised conservatively and congruence-scaled
    by ``mu^(-1/2)``, so only differences of ``log mu`` enter.
    """
    x = np.linspace(-X, X, m)
    x = 0.5 * (x - x[::-1])
    dx = 2.0 * X / (m - 1)
    half_pts = np.empty(2 * m - 1)
    half_pts[0::2] = x
    half_pts[1::2] = 0.5 * (x[:-1] + x[1:])
    L = _log_mu(params, half_pts)
    L_node = L[0::2]
    L_half = L[1::2]  # between node j and j+1
    xi_ = x[1:-1]
    _, q = identity_coefficients(params, xi_)
    Li = L_node[1:-1]
    diag = (np.exp(L_half[1:] - Li) + np.exp(L_half[:-1] - Li)) / dx**2 - q
    off = -np.exp(L_half[1:-1] - 0.5 * (L_node[1:-2] + L_node[2:-1])) / dx**2
    w = jacobi_weight(params, xi_)
    return x, dx, diag, off, w, L_node


def sturm_count(diag, off, w, sigma: float) -> int:
    """Number of pencil eigenvalues below ``sigma`` (negative pivots of ``A - sigma B``)."""
    tiny = np.finfo(float).tiny ** 0.5
    off2 = off * off
    count = 0
    piv = diag[0] - sigma * w[0]
    if piv < 0.0:
        count += 1
    for i in range(1, len(diag)):
        if piv == 0.0:
            piv = tiny
        piv = diag[i] - sigma * w[i] - off2[i - 1] / piv
        if piv < 0.0:
            count += 1
    return count


def _bisect(diag, off, w, index: int, lo: float, hi: float, tol: float, max_iter: int = 300):
    """Bisection for the ``index``-th (1-based) pencil eigenvalue inside ``[lo, hi]``."""
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(lo), abs(hi)):
            return lo, hi
        mid = 0.5 * (lo + hi)
        if sturm_count(diag, off, w, mid) >= index:
            hi = mid
        else:
            lo = mid
    raise NonConvergenceError(f"eigenvalue bisection stalled in [{lo}, {hi}]", partial=(lo, hi))


def lowest_eigenvalue(params: ModelParams, X: float = 12.0, m: int = 6000, n_extra: int = 2, tol: float = 1e-13) -> EigenReport:
    """Lowest eigenvalue of the Jacobi operator about the identity map.

    Parameters
    ----------
    X : float
        Half-width of the truncated domain, Dirichlet conditions at ``+-X``.
    m : int
        Number of grid nodes including the two boundary nodes.
    n_extra : int
        Number of further (exploratory) eigenvalues to report.
    """
    _require_identity(params)
    if X < 10.0 or m < 1000:
        raise ValueError(f"need X >= 10 and m >= 1000, got X={X}, m={m}")
    x, dx, diag, off, w, L_node = _pencil(params, X, m)

    radius = np.zeros_like(diag)
    radius[:-1] += np.abs(off)
    radius[1:] += np.abs(off)
    lower = float(np.min((diag - radius) / w))
    upper = 0.0
    while sturm_count(diag, off, w, upper) < 1 + n_extra:
        upper = 2.0 * upper + 1.0
    lo, hi = _bisect(diag, off, w, 1, lower, upper, tol)
    lam_num = 0.5 * (lo + hi)

    exploratory = []
    prev = hi
    for j in range(2, 2 + n_extra):
        lo_j, hi_j = _bisect(diag, off, w, j, prev, upper, tol)
        exploratory.append(0.5 * (lo_j + hi_j))
        prev = hi_j

    # inverse iteration for the ground state (symmetrised variable)
    shift = lam_num - 1e-9 * max(1.0, abs(lam_num))
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag - shift * w
    ab[2, :-1] = off
    v = np.ones_like(diag)
    for _ in range(4):
        v = solve_banded((1, 1), ab, w * v)
        v /= np.linalg.norm(v)
    eig = v * np.exp(-0.5 * (L_node[1:-1] - L_node[(m - 1) // 2]))
    eig /= np.max(np.abs(eig))
    if eig[eig.size // 2] < 0:
        eig = -eig
    asym = float(np.linalg.norm(eig - eig[::-1]) / np.linalg.norm(eig))

    lam_an = params.a_sq * (2 - params.k)
    grid = make_grid(params, X, m)
    xi = closed_form_eigenfunction(params, grid.x)
    resid = jacobi_apply(params, grid, xi) + lam_an * grid.weight[1:-1] * xi[1:-1]

    return EigenReport(
        k=params.k,
        a=params.a,
        X=float(X),
        m=int(m),
        dx=float(dx),
        lambda_analytic=lam_an,
        lambda_numeric=float(lam_num),
        rel_error=abs(lam_num - lam_an) / abs(lam_an),
        eigfn_residual=float(np.max(np.abs(resid))),
        eigvec_asymmetry=asym,
        bracket=(float(lo), float(hi)),
        exploratory=exploratory,
        eigvec=np.column_stack([x[1:-1], eig]),
    )

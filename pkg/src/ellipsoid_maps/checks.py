"""Invariant battery behind ``ellipsoid-maps verify``.

Each check returns a :class:`CheckResult`; none of them raise on failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrator import IntegratorConfig
from .model import (
    ModelParams,
    PsiState,
    h_second_derivative,
    identity_profile,
    lyapunov,
    lyapunov_rate,
    rhs_psi,
)
from .shooting import DEFAULT_CONFIG, shoot
from .spectral import Regime, closed_form_eigenfunction, jacobi_apply, lowest_eigenvalue, make_grid, regime_classify


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""


def identity_residual(params: ModelParams, X: float = 15.0, dx: float = 0.01) -> float:
    """Sup-norm of ``h'' - rhs`` along the identity map (analytic ``h'' = -sech x tanh x``)."""
    x = np.arange(-X, X + 0.5 * dx, dx)
    s = identity_profile(x)
    hpp_exact = -s.hp * np.tanh(x)
    p1 = ModelParams(params.k, params.a, 1)
    return float(np.max(np.abs(hpp_exact - h_second_derivative(p1, x, s.h, s.hp))))


def chart_mismatch(params: ModelParams, n: int = 1000, seed: int = 0) -> float:
    """Largest relative disagreement between the two charts' second derivatives."""
    rng = np.random.default_rng(seed)
    psi = rng.uniform(0.05, math.pi - 0.05, n)
    f = rng.uniform(-2.0, 5.0, n)
    fp = rng.uniform(-3.0, 3.0, n)
    _, fpp = rhs_psi(params, PsiState(psi, f, fp))
    x = np.log(np.tan(0.5 * psi))
    sp = np.sin(psi)
    h, hp = f - 0.5 * math.pi, fp * sp
    # h'' = f'' sin^2 psi + f' sin psi cos psi  (since d psi/dx = sin psi)
    via_psi = fpp * sp * sp + fp * sp * np.cos(psi)
    via_x = h_second_derivative(params, x, h, hp)
    scale = np.maximum(1.0, np.maximum(np.abs(via_psi), np.abs(via_x)))
    return float(np.max(np.abs(via_psi - via_x) / scale))


def lyapunov_violations(params: ModelParams, bs, config: IntegratorConfig = DEFAULT_CONFIG):
    """Worst monotonicity drop and worst growth-bound excess over shots at ``bs``.

    Drops are measured in units of ``10 (abs_tol + rel_tol |W|)``; growth excess
    relative to ``b^2 exp(2 (k-2) x)``.
    """
    worst_drop = 0.0
    worst_growth = 0.0
    for b in bs:
        rec = shoot(params, b, config)
        x, w = rec.w_trace[:, 0], rec.w_trace[:, 1]
        allow = 10.0 * (config.abs_tol + config.rel_tol * np.abs(w[1:]))
        drop = np.max((w[:-1] - w[1:]) / allow)
        worst_drop = max(worst_drop, float(drop))
        bound = b * b * np.exp(2.0 * (params.k - 2) * x)
        worst_growth = max(worst_growth, float(np.max(w / bound - 1.0)))
    return worst_drop, worst_growth


def jacobi_residuals(params: ModelParams, X: float = 12.0, dx: float = 2e-3):
    """Residual of the closed-form eigenpair at ``dx`` and ``dx/2`` and the Richardson-extrapolated residual."""
    lam = params.a_sq * (2 - params.k)
    out = []
    for h in (dx, 0.5 * dx):
        m = int(round(2 * X / h)) + 1
        grid = make_grid(ModelParams(params.k, params.a, 1), X, m)
        xi = closed_form_eigenfunction(params, grid.x)
        out.append(jacobi_apply(params, grid, xi) + lam * grid.weight[1:-1] * xi[1:-1])
    coarse, fine = out
    fine_on_coarse = fine[1::2]
    extrap = (4.0 * fine_on_coarse - coarse) / 3.0
    r1, r2 = float(np.max(np.abs(coarse))), float(np.max(np.abs(fine)))
    return r1, r2, float(np.max(np.abs(extrap)))


def run_battery(params: ModelParams, config: IntegratorConfig = DEFAULT_CONFIG, quick: bool = False) -> list[CheckResult]:
    results = []
    r = identity_residual(params)
    results.append(CheckResult("identity residual", r <= 1e-9, r, 1e-9, "sup |h''-rhs| on [-15,15], d=1"))

    r = chart_mismatch(params)
    results.append(CheckResult("chart consistency", r <= 1e-10, r, 1e-10, "1000 random states"))

    bs = np.geomspace(1e-3, 1.5 * math.sqrt(params.lam), 6 if quick else 20)
    drop, growth = lyapunov_violations(params, bs, config)
    results.append(CheckResult("W monotone (x>=0)", drop <= 1.0, drop, 1.0, "worst drop / 10*tol"))
    results.append(CheckResult("W growth bound", growth <= 1e-8, growth, 1e-8, "max W/(b^2 e^{2(k-2)x}) - 1"))

    r1, r2, rex = jacobi_residuals(params)
    order = math.log2(r1 / r2) if r2 > 0 else float("inf")
    results.append(CheckResult("Jacobi residual order", abs(order - 2.0) <= 0.1, order, 2.0, f"r(2e-3)={r1:.3g}, r(1e-3)={r2:.3g}"))
    results.append(CheckResult("Jacobi extrapolated residual", rex <= 1e-6, rex, 1e-6, "Richardson (4 r_h/2 - r_h)/3"))

    rep = lowest_eigenvalue(ModelParams(params.k, params.a, 1), 12.0, 6000)
    results.append(CheckResult("lowest Jacobi eigenvalue", rep.rel_error <= 1e-3, rep.rel_error, 1e-3,
                               f"numeric {rep.lambda_numeric:.9g} vs a^2(2-k) = {rep.lambda_analytic:.9g}"))

    roots = regime_classify(params)
    coherent = (roots.regime is Regime.OSCILLATORY) == params.oscillatory
    vieta = max(abs(roots.alpha_plus + roots.alpha_minus - (params.k - 2)),
                abs(roots.alpha_plus * roots.alpha_minus - params.lam / params.a_sq))
    results.append(CheckResult("regime/threshold coherence", coherent and vieta <= 1e-12, vieta, 1e-12, roots.regime.value))

    # Lyapunov rate agrees with a centred difference of W along the identity orbit
    x = np.linspace(-5, 5, 101)
    s = identity_profile(x)
    p1 = ModelParams(params.k, params.a, 1)
    eps = 1e-5
    wp = lyapunov(p1, identity_profile(x + eps))
    wm = lyapunov(p1, identity_profile(x - eps))
    fd = (wp - wm) / (2 * eps)
    err = float(np.max(np.abs(fd - lyapunov_rate(p1, s))))
    results.append(CheckResult("W' formula on identity", err <= 1e-7, err, 1e-7, "centred difference, eps=1e-5"))
    return results

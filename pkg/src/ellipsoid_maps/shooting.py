"""Shooting construction of the connecting orbits.

A *b-orbit* is the odd solution with ``h(0) = 0, h'(0) = b``.  It is
integrated for ``x >= 0`` together with the phase angle
``theta = arctan(h'/h)`` (started at ``pi/2`` and unwound continuously) until
it leaves the strip ``|h| < pi/2`` or reaches the horizon.  The number of
sign changes of ``h`` before exit drops by one each time ``b`` crosses a
connecting orbit ``b_n``; bisection on that count converges to ``b_n``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, InconclusiveError, NonConvergenceError, RegimeError, SearchExhaustedError
from .integrator import Event, IntegratorConfig, Trajectory, integrate
from .model import ModelParams, PhaseState, energy_density_x, h_second_derivative, lyapunov, x_to_psi

__all__ = [
    "OrbitTag",
    "OrbitClass",
    "ShotRecord",
    "ConnectingOrbit",
    "shoot",
    "even_shoot",
    "rotation_number",
    "scan",
    "bracket_family",
    "find_bn",
    "reconstruct_f",
    "energy_of",
    "tail_rate_linear",
    "DEFAULT_CONFIG",
]

log = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi
DEFAULT_CONFIG = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, max_step=0.25, x_max=30.0, event_tol=1e-13)


class OrbitTag(str, enum.Enum):
    EXIT_UP = "exit_up"
    EXIT_DOWN = "exit_down"
    TRAPPED = "trapped"


@dataclass(frozen=True)
class OrbitClass:
    tag: OrbitTag
    exit_x: float | None
    zero_count: int


@dataclass
class ShotRecord:
    """Outcome of one shot.

    ``omega`` is evaluated at ``min(x_e, x_max)``; for trapped orbits it is
    only a lower bound on the limiting rotation number
    (``omega_is_lower_bound``).  ``b`` holds ``h(0)`` instead of ``h'(0)``
    for even shots.
    """

    b: float
    orbit_class: OrbitClass
    omega: float
    omega_is_lower_bound: bool
    w_trace: np.ndarray
    zero_xs: np.ndarray
    trajectory: Trajectory = field(repr=False)
    kind: str = "odd"

    @property
    def zero_count(self) -> int:
        return self.orbit_class.zero_count

    @property
    def tag(self) -> OrbitTag:
        return self.orbit_class.tag


@dataclass
class ConnectingOrbit:
    """Converged n-th member of the family.

    ``profile`` columns are ``x, h, h', W, theta`` on ``[0, x_cut]``;
    ``f_profile`` columns are ``psi, f`` over the whole of ``[0, pi]``,
    with the pole values extrapolated from the fitted tail.
    """

    n: int
    b_n: float
    bracket: tuple[float, float]
    bracket_width: float
    endpoint_sign: int
    omega: float
    zero_count: int
    tail_rate: float
    x_cut: float
    profile: np.ndarray
    zero_xs: np.ndarray = field(default_factory=lambda: np.empty(0))
    f_profile: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    energy: float = float("nan")
    energy_remainder: float = float("nan")
    params: ModelParams | None = None
    config: IntegratorConfig | None = None
    bracket_history: list[tuple[float, float]] = field(default_factory=list, repr=False)
    trajectory: Trajectory | None = field(default=None, repr=False)


# -- single shots -------------------------------------------------------------


def _exit_up(x, y):
    return y[0] - HALF_PI


def _exit_down(x, y):
    return y[0] + HALF_PI


def _zero(x, y):
    return y[0]


_EVENTS = (
    Event("exit_up", _exit_up, direction=+1, terminal=True),
    Event("exit_down", _exit_down, direction=-1, terminal=True),
    Event("zero", _zero, direction=0, terminal=False),
)


def _orbit_rhs(params: ModelParams):
    def rhs(x, y):
        h, hp = y[0], y[1]
        hpp = h_second_derivative(params, x, h, hp)
        r2 = h * h + hp * hp
        return np.array([hp, hpp, (hpp * h - hp * hp) / r2])

    return rhs


def _run(params: ModelParams, y0, theta0: float, b: float, config: IntegratorConfig, kind: str) -> ShotRecord:
    rhs = _orbit_rhs(params)
    try:
        traj = integrate(rhs, [y0[0], y0[1], theta0], 0.0, config, _EVENTS)
    except NonConvergenceError as exc:
        if isinstance(exc.partial, Trajectory) and len(exc.partial.xs) > 1:
            exc.partial = _record(params, exc.partial, theta0, b, kind)
        raise
    return _record(params, traj, theta0, b, kind)


def _record(params, traj: Trajectory, theta0, b, kind) -> ShotRecord:
    zeros = np.array([e.x for e in traj.hits("zero")])
    if traj.terminated_by == "exit_up":
        tag, exit_x = OrbitTag.EXIT_UP, traj.x_end
    elif traj.terminated_by == "exit_down":
        tag, exit_x = OrbitTag.EXIT_DOWN, traj.x_end
    else:
        tag, exit_x = OrbitTag.TRAPPED, None
    ys = traj.ys
    w = lyapunov(params, PhaseState(traj.xs, ys[:, 0], ys[:, 1]))
    omega = -(ys[-1, 2] - theta0) / math.pi
    return ShotRecord(
        b=b,
        orbit_class=OrbitClass(tag, exit_x, int(zeros.size)),
        omega=float(omega),
        omega_is_lower_bound=tag is OrbitTag.TRAPPED,
        w_trace=np.column_stack([traj.xs, w]),
        zero_xs=zeros,
        trajectory=traj,
        kind=kind,
    )


def shoot(params: ModelParams, b: float, config: IntegratorConfig = DEFAULT_CONFIG) -> ShotRecord:
    """Integrate the b-orbit from ``(h, h') = (0, b)`` at ``x = 0``.

    Raises
    ------
    DomainError
        If ``b <= 0`` (b = 0 is the trivial orbit; negative b mirrors positive b).
    NonConvergenceError
        From the integrator; ``exc.partial`` then holds a partial ShotRecord.
    """
    b = float(b)
    if not (math.isfinite(b) and b > 0.0):
        raise DomainError(f"b must be finite and > 0, got {b!r}")
    return _run(params, (0.0, b), HALF_PI, b, config, "odd")


def even_shoot(params: ModelParams, h0: float, config: IntegratorConfig = DEFAULT_CONFIG) -> ShotRecord:
    """Integrate the even orbit from ``(h, h') = (h0, 0)``, ``0 < h0 < pi/2``."""
    h0 = float(h0)
    if not (0.0 < h0 < HALF_PI):
        raise DomainError(f"h0 must lie in (0, pi/2), got {h0!r}")
    return _run(params, (h0, 0.0), 0.0, h0, config, "even")


def rotation_number(params: ModelParams, b: float, config: IntegratorConfig = DEFAULT_CONFIG) -> float:
    return shoot(params, b, config).omega


def scan(params: ModelParams, bs, config: IntegratorConfig = DEFAULT_CONFIG, workers: int = 1) -> list[ShotRecord]:
    """Shoot every ``b`` in ``bs``; ``workers > 1`` fans out over processes.

    Records returned from worker processes keep their trajectories.
    """
    bs = [float(b) for b in bs]
    if workers <= 1 or len(bs) < 2:
        return [shoot(params, b, config) for b in bs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(shoot, [params] * len(bs), bs, [config] * len(bs)))


# -- family construction ------------------------------------------------------


def _require_oscillatory(params: ModelParams):
    if not params.oscillatory:
        crit = params.a_crit_sq_exact
        raise RegimeError(
            f"no oscillating family for k={params.k}, a={params.a}, d={params.d}: "
            f"a^2 = {params.a_sq:.17g} >= a_crit^2 = 4d(d+k-2)/(k-2)^2 = {crit} ({float(crit):.6g}); "
            "the linearisation at h=0 has only real characteristic roots",
            params.a_sq,
            float(crit),
        )


def bracket_family(
    params: ModelParams,
    n_max: int,
    config: IntegratorConfig = DEFAULT_CONFIG,
    ratio: float = 0.85,
    b_floor: float = 1e-13,
) -> list[tuple[int, float, float]]:
    """Bracket ``b_1 > b_2 > ... > b_{n_max}`` by a geometric downward scan.

    Starts at ``1.01 sqrt(lam)``, where ``W(0) > lam`` forces an exit with no
    zeros, and returns ``(n, b_lo, b_hi)`` for the first consecutive pair whose
    zero counts straddle ``n - 1 / n``.

    Raises
    ------
    RegimeError
        Outside the oscillatory regime.
    SearchExhaustedError
        If ``b`` falls below ``b_floor`` before all brackets are found.
    """
    _require_oscillatory(params)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    b_prev = 1.01 * math.sqrt(params.lam)
    zc_prev = shoot(params, b_prev, config).zero_count
    found: dict[int, tuple[int, float, float]] = {}
    b = b_prev
    while len(found) < n_max:
        b *= ratio
        if b < b_floor:
            missing = sorted(set(range(1, n_max + 1)) - set(found))
            raise SearchExhaustedError(f"no bracket for n={missing} above b={b_floor:g}")
        zc = shoot(params, b, config).zero_count
        for n in range(1, n_max + 1):
            if n not in found and zc_prev <= n - 1 < zc:
                found[n] = (n, b, b_prev)
        log.debug("scan b=%.6g zero_count=%d", b, zc)
        b_prev, zc_prev = b, zc
    return [found[n] for n in range(1, n_max + 1)]


def tail_rate_linear(params: ModelParams) -> float:
    """Decay exponent of ``pi/2 - |h|`` predicted by linearising at ``h = pi/2``."""
    k2 = params.k - 2
    return 0.5 * k2 - 0.5 * math.sqrt(k2 * k2 + 4 * params.lam)


def find_bn(
    params: ModelParams,
    n: int,
    config: IntegratorConfig = DEFAULT_CONFIG,
    b_tol: float = 1e-13,
    bracket: tuple[float, float] | None = None,
    max_doublings: int = 2,
    x_ext: float = 20.0,
) -> ConnectingOrbit:
    """Bisect on the zero count to the n-th connecting orbit.

    Parameters
    ----------
    bracket : (b_lo, b_hi), optional
        ``b_lo`` must have at least ``n`` zeros, ``b_hi`` at most ``n - 1``
        and exit.  Found with :func:`bracket_family` when omitted.
    b_tol : float
        Stop when ``b_hi - b_lo <= b_tol * max(1, b_hi)``.

    Raises
    ------
    InconclusiveError
        When a probe stays trapped with fewer than ``n`` zeros even after
        ``max_doublings`` horizon doublings.
    """
    _require_oscillatory(params)
    if bracket is None:
        _, lo, hi = bracket_family(params, n, config)[n - 1]
    else:
        lo, hi = sorted(map(float, bracket))
    cfg = config

    def probe(b):
        nonlocal cfg
        for attempt in range(max_doublings + 1):
            rec = shoot(params, b, cfg)
            if rec.zero_count >= n:
                return "below", rec
            if rec.tag is not OrbitTag.TRAPPED:
                return "above", rec
            if attempt < max_doublings:
                cfg = cfg.replace(x_max=2.0 * cfg.x_max)
                log.info("b=%.17g trapped with %d zeros; horizon -> %g", b, rec.zero_count, cfg.x_max)
        raise InconclusiveError(
            f"b={b!r} stays trapped with {rec.zero_count} < {n} zeros up to x={cfg.x_max}; increase x_max"
        )

    side, rec_lo = probe(lo)
    if side != "below":
        raise ValueError(f"b_lo={lo!r} has {rec_lo.zero_count} zeros, expected >= {n}")
    side, rec_hi = probe(hi)
    if side != "above":
        raise ValueError(f"b_hi={hi!r} does not exit with < {n} zeros")

    history = [(lo, hi)]
    while hi - lo > b_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        side, rec = probe(mid)
        if side == "below":
            lo, rec_lo = mid, rec
        else:
            hi, rec_hi = mid, rec
        history.append((lo, hi))

    b_n = 0.5 * (lo + hi)
    mid_rec = shoot(params, b_n, cfg)
    orbit = _assemble(params, n, b_n, lo, hi, mid_rec, rec_lo, rec_hi, cfg)
    orbit.bracket_history = history
    orbit.f_profile = reconstruct_f(orbit, x_ext=x_ext)
    orbit.energy, orbit.energy_remainder = energy_of(orbit, params)
    return orbit


def _cut_point(mid: ShotRecord, lo: ShotRecord, hi: ShotRecord, rho: float = 1e-3, dx: float = 0.01) -> float:
    """First x where the bracketing orbits separate by ``rho`` of the remaining gap to pi/2."""
    x_end = min(mid.trajectory.x_end, lo.trajectory.x_end, hi.trajectory.x_end)
    xs = np.arange(0.0, x_end, dx)
    h_mid = mid.trajectory.sample(xs)[:, 0]
    sep = np.abs(lo.trajectory.sample(xs)[:, 0] - hi.trajectory.sample(xs)[:, 0])
    gap = HALF_PI - np.abs(h_mid)
    bad = np.nonzero(sep > rho * gap)[0]
    if bad.size == 0:
        return float(xs[-1])
    i = max(int(bad[0]) - 1, 1)
    return float(xs[i])


def _assemble(params, n, b_n, lo, hi, mid: ShotRecord, rec_lo, rec_hi, cfg) -> ConnectingOrbit:
    traj = mid.trajectory
    x_cut = _cut_point(mid, rec_lo, rec_hi)
    zeros = mid.zero_xs[mid.zero_xs < x_cut]
    grid = np.union1d(np.append(np.arange(0.0, x_cut, 0.005), x_cut), zeros)
    ys = traj.sample(grid)
    h, hp, theta = ys[:, 0], ys[:, 1], ys[:, 2]
    w = lyapunov(params, PhaseState(grid, h, hp))
    profile = np.column_stack([grid, h, hp, w, theta])

    # tail fit over the last decade of pi/2 - |h|
    start = zeros[-1] if zeros.size else 0.0
    u = HALF_PI - np.abs(h)
    u_cut = u[-1]
    window = (grid >= start) & (u <= 10.0 * u_cut)
    first = np.nonzero(window)[0]
    sel = slice(first[0], None) if first.size else slice(-50, None)
    if grid[sel].size < 3:
        sel = slice(-50, None)
    tail_rate = float(np.polyfit(grid[sel], np.log(u[sel]), 1)[0])

    return ConnectingOrbit(
        n=n,
        b_n=float(b_n),
        bracket=(float(lo), float(hi)),
        bracket_width=float(hi - lo),
        endpoint_sign=1 if h[-1] > 0 else -1,
        omega=float(-(theta[-1] - HALF_PI) / math.pi),
        zero_count=int(zeros.size),
        tail_rate=tail_rate,
        x_cut=float(x_cut),
        profile=profile,
        zero_xs=zeros,
        params=params,
        config=cfg,
        trajectory=traj,
    )


def _tail(orbit: ConnectingOrbit, xs):
    x_cut = orbit.profile[-1, 0]
    u_cut = HALF_PI - abs(orbit.profile[-1, 1])
    u = u_cut * np.exp(orbit.tail_rate * (xs - x_cut))
    return orbit.endpoint_sign * (HALF_PI - u), orbit.endpoint_sign * (-orbit.tail_rate * u)


def reconstruct_f(orbit: ConnectingOrbit, x_ext: float = 20.0, n_tail: int = 400) -> np.ndarray:
    """Profile ``f(psi) = h(x) + pi/2`` on ``[0, pi]``.

    Uses the stored half-profile on ``[0, x_cut]``, the fitted exponential
    tail out to ``max(x_ext, x_cut)`` and odd reflection for ``x < 0``.  The
    pole values ``f(0) = pi/2 - s pi/2`` and ``f(pi) = pi/2 + s pi/2`` (``s``
    the endpoint sign) are appended as the first and last rows.
    """
    x = orbit.profile[:, 0]
    h = orbit.profile[:, 1]
    x_cut = x[-1]
    x_far = max(x_ext, x_cut)
    if x_far > x_cut:
        xt = np.linspace(x_cut, x_far, n_tail + 1)[1:]
        ht, _ = _tail(orbit, xt)
        x = np.concatenate([x, xt])
        h = np.concatenate([h, ht])
    xs = np.concatenate([-x[:0:-1], x])
    hs = np.concatenate([-h[:0:-1], h])
    psi = x_to_psi(xs)
    f = hs + HALF_PI
    s = orbit.endpoint_sign
    psi = np.concatenate([[0.0], psi, [math.pi]])
    f = np.concatenate([[HALF_PI - s * HALF_PI], f, [HALF_PI + s * HALF_PI]])
    return np.column_stack([psi, f])


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def energy_of(orbit: ConnectingOrbit, params: ModelParams | None = None) -> tuple[float, float]:
    """Energy of the full (odd-extended) orbit and the tail contribution.

    The half-line ``[0, x_cut]`` is integrated with 8-point Gauss-Legendre per
    integrator step on the dense output when the trajectory is attached, and
    with Simpson's rule on the stored profile otherwise.  Beyond ``x_cut`` the
    linearised tail ``u = u_cut exp(beta (x - x_cut))`` is integrated in
    closed form; that part is returned as the remainder estimate.
    """
    params = params or orbit.params
    x_cut = orbit.x_cut
    traj = orbit.trajectory
    if traj is not None:
        edges = traj.xs[traj.xs < x_cut]
        edges = np.append(edges, x_cut)
        a, b = edges[:-1], edges[1:]
        half = 0.5 * (b - a)
        xq = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        yq = traj.sample(xq.ravel())
        dens = energy_density_x(params, PhaseState(xq.ravel(), yq[:, 0], yq[:, 1])).reshape(xq.shape)
        core = float(np.sum(half * (dens @ _GL_WEIGHTS)))
    else:
        p = orbit.profile
        dens = energy_density_x(params, PhaseState(p[:, 0], p[:, 1], p[:, 2]))
        core = float(simpson(dens, x=p[:, 0]))

    beta = orbit.tail_rate
    u_cut = HALF_PI - abs(orbit.profile[-1, 1])
    k2 = params.k - 2
    tail = (beta * beta + params.lam) * u_cut**2 * 2.0**k2 * math.exp(-k2 * x_cut) / (2.0 * abs(beta) + k2)
    return 2.0 * (core + tail), 2.0 * tail

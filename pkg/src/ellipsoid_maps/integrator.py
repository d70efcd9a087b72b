"""Adaptive Dormand-Prince 5(4) integrator with dense output and events.

The propagating solution is the 5th-order one (local extrapolation), the
embedded 4th-order solution only drives step-size control.  Steps are
controlled by a proportional-integral rule on the max-norm of the scaled
error estimate.  Every accepted step stores the coefficients of the
4th-order continuous extension, so the returned :class:`Trajectory` can be
evaluated anywhere on the integrated interval.

Only forward integration (``x_max > x0``) is supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, DomainError, NonConvergenceError

__all__ = ["IntegratorConfig", "Event", "EventHit", "Trajectory", "integrate", "refine_event"]


# Butcher tableau (Hairer, Norsett & Wanner, Table II.5.2)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4
# dense output: y(x0 + s*h) = y0 + h * K^T @ (_P @ [s, s^2, s^3, s^4])
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_ALPHA = 0.7 / 5  # PI gains (Gustafsson), exponents relative to order 5
_BETA = 0.4 / 5
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_MAX_STEPS = 2_000_000


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and horizon for :func:`integrate`.

    ``x_max`` is the absolute end abscissa of the integration.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.25
    x_max: float = 30.0
    event_tol: float = 1e-13

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "x_max", "event_tol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")

    def replace(self, **changes) -> "IntegratorConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Event:
    """Scalar event function ``fn(x, y)``.

    ``direction`` is +1 for upward crossings only, -1 for downward, 0 for
    both.  A terminal event stops the integration at the localized root.
    """

    name: str
    fn: Callable[[float, np.ndarray], float]
    direction: int = 0
    terminal: bool = False


@dataclass(frozen=True)
class EventHit:
    name: str
    x: float
    state: np.ndarray
    direction: int


@dataclass
class Trajectory:
    """Accepted nodes plus one dense interpolant per step.

    ``xs[i]``/``ys[i]`` are the node abscissae and states.  Step ``i`` spans
    ``[xs[i], xs[i+1]]``; its interpolant is parameterised over the full
    attempted step ``[xs[i], xs[i] + hs[i]]``, which may extend past
    ``xs[i+1]`` when a terminal event truncated the step.
    """

    xs: np.ndarray
    ys: np.ndarray
    hs: np.ndarray
    qs: np.ndarray  # (n_steps, dim, 4)
    events: list[EventHit] = field(default_factory=list)
    event_defs: tuple[Event, ...] = ()
    config: IntegratorConfig | None = None
    terminated_by: str | None = None

    @property
    def x_end(self) -> float:
        return float(self.xs[-1])

    @property
    def y_end(self) -> np.ndarray:
        return self.ys[-1]

    def hits(self, name: str) -> list[EventHit]:
        return [e for e in self.events if e.name == name]

    def _eval_step(self, i: int, x: float) -> np.ndarray:
        h = self.hs[i]
        s = (x - self.xs[i]) / h
        powers = np.array([s, s * s, s**3, s**4])
        return self.ys[i] + h * (self.qs[i] @ powers)

    def __call__(self, x):
        """Evaluate the dense output at scalar or array ``x``."""
        xa = np.asarray(x, dtype=float)
        if xa.ndim == 0:
            return self._at(float(xa))
        return np.array([self._at(float(v)) for v in xa])

    def _at(self, x: float) -> np.ndarray:
        x0, x1 = self.xs[0], self.xs[-1]
        if not (x0 <= x <= x1):
            raise DomainError(f"x={x} outside integrated interval [{x0}, {x1}]")
        i = int(np.searchsorted(self.xs, x, side="right")) - 1
        if i >= len(self.hs):
            return self.ys[-1].copy()
        if x == self.xs[i]:
            return self.ys[i].copy()
        return self._eval_step(i, x)

    def sample(self, xs) -> np.ndarray:
        """Vectorised evaluation at sorted abscissae."""
        xs = np.asarray(xs, dtype=float)
        idx = np.clip(np.searchsorted(self.xs, xs, side="right") - 1, 0, len(self.hs) - 1)
        h = self.hs[idx]
        s = (xs - self.xs[idx]) / h
        powers = np.stack([s, s * s, s**3, s**4], axis=-1)
        out = self.ys[idx] + h[:, None] * np.einsum("ndk,nk->nd", self.qs[idx], powers)
        exact = self.xs[idx] == xs
        out[exact] = self.ys[idx[exact]]
        last = xs == self.xs[-1]
        out[last] = self.ys[-1]
        return out


def _initial_step(rhs, x0, y0, f0, rtol, atol, max_step):
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + h0 * f0
    f1 = np.asarray(rhs(x0 + h0, y1), dtype=float)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, max_step)


def _event_value(ev: Event, x, y) -> float:
    v = float(ev.fn(x, y))
    if not math.isfinite(v):
        raise DomainError(f"event {ev.name!r} returned non-finite value at x={x}")
    return v


def _crossed(g0: float, g1: float, direction: int) -> bool:
    if g0 == 0.0:
        return False
    if g0 * g1 > 0.0:
        return False
    if direction > 0:
        return g0 < 0.0
    if direction < 0:
        return g0 > 0.0
    return True


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: Sequence[float],
    x0: float,
    config: IntegratorConfig,
    events: Sequence[Event] = (),
    dense_checks: int = 3,
) -> Trajectory:
    """Integrate ``y' = rhs(x, y)`` from ``x0`` to ``config.x_max``.

    ``dense_checks`` extra interior samples per step are used to catch event
    functions that cross twice within one step.

    Raises
    ------
    NonConvergenceError
        When the step size underflows; the error carries the last accepted state.
    DomainError
        When an event function evaluates to a non-finite value.
    """
    y = np.array(y0, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("y0 must be a non-empty 1-d state")
    if not np.all(np.isfinite(y)):
        raise DomainError("non-finite initial state")
    x = float(x0)
    x_end = float(config.x_max)
    if not x_end > x:
        raise ValueError(f"x_max={x_end} must exceed x0={x}")
    rtol, atol = config.rel_tol, config.abs_tol
    dim = y.size
    events = tuple(events)

    f = np.asarray(rhs(x, y), dtype=float)
    if not np.all(np.isfinite(f)):
        raise NonConvergenceError("non-finite derivative at initial state", x, y)
    h = _initial_step(rhs, x, y, f, rtol, atol, config.max_step)

    xs, ys, hs, qs = [x], [y.copy()], [], []
    hits: list[EventHit] = []
    g_prev = [_event_value(ev, x, y) for ev in events]
    K = np.empty((7, dim))
    err_prev = 1e-4
    terminated_by = None
    h_min_abs = 16 * np.finfo(float).eps

    for _ in range(_MAX_STEPS):
        if x >= x_end:
            break
        h = min(h, config.max_step, x_end - x)
        rejected = False
        while True:
            if h < h_min_abs * max(1.0, abs(x)):
                raise NonConvergenceError(
                    f"step size underflow at x={x:.6g}", x, y.copy(),
                    partial=Trajectory(np.array(xs), np.array(ys), np.array(hs), np.array(qs).reshape(-1, dim, 4), hits, events, config),
                )
            K[0] = f
            for i in range(1, 6):
                K[i] = rhs(x + _C[i] * h, y + h * (_A[i] @ K[:i]))
            y_new = y + h * (_B5[:6] @ K[:6])
            K[6] = rhs(x + h, y_new)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.abs(h * (_E @ K)) / scale))
            if not math.isfinite(err):
                h *= _MIN_FACTOR
                rejected = True
                continue
            if err <= 1.0:
                break
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-1 / 5))
            rejected = True

        q = (K.T @ _P)  # (dim, 4)
        x_new = x + h
        if x_end - x_new <= 1e-12 * max(1.0, abs(x_end)):
            x_new = x_end

        step_start = x
        # event detection on [x, x_new]
        stop_hit = None
        if events:
            step_hits = []
            sub = [step_start + (j / (dense_checks + 1)) * h for j in range(1, dense_checks + 1)] + [x_new]
            sub_states = [y + h * (q @ _powers((s - step_start) / h)) for s in sub[:-1]] + [y_new]
            for ie, ev in enumerate(events):
                g_a, x_a = g_prev[ie], step_start
                for s, ys_ in zip(sub, sub_states):
                    g_b = _event_value(ev, s, ys_)
                    if _crossed(g_a, g_b, ev.direction):
                        xh = _localize(ev, y, h, q, step_start, x_a, s, g_a, g_b, config.event_tol)
                        yh = y + h * (q @ _powers((xh - step_start) / h))
                        step_hits.append(EventHit(ev.name, xh, yh, 1 if g_b > g_a else -1))
                        if ev.terminal:
                            break
                    g_a, x_a = g_b, s
            step_hits.sort(key=lambda e: e.x)
            for hit in step_hits:
                ev = next(e for e in events if e.name == hit.name)
                hits.append(hit)
                if ev.terminal:
                    stop_hit = hit
                    break
            if stop_hit is not None:
                hits[:] = [e for e in hits if e.x <= stop_hit.x]

        hs.append(h)
        qs.append(q)
        if stop_hit is not None:
            xs.append(stop_hit.x)
            ys.append(stop_hit.state.copy())
            terminated_by = stop_hit.name
            break
        xs.append(x_new)
        ys.append(y_new.copy())
        if events:
            g_prev = [_event_value(ev, x_new, y_new) for ev in events]

        # PI controller
        err_c = max(err, 1e-10)
        fac = _SAFETY * err_c ** (-_ALPHA) * err_prev ** _BETA
        fac = min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
        if rejected:
            fac = min(1.0, fac)
        err_prev = err_c
        x, y, f = x_new, y_new, K[6].copy()
        h = h * fac
    else:
        raise NonConvergenceError("maximum number of steps exceeded", x, y.copy())

    return Trajectory(
        xs=np.array(xs),
        ys=np.array(ys),
        hs=np.array(hs),
        qs=np.array(qs).reshape(-1, dim, 4),
        events=hits,
        event_defs=events,
        config=config,
        terminated_by=terminated_by,
    )


def _powers(s: float) -> np.ndarray:
    return np.array([s, s * s, s**3, s**4])


def _localize(ev, y0, h, q, x_start, a, b, ga, gb, tol):
    if gb == 0.0:
        return b

    def g(xx):
        return _event_value(ev, xx, y0 + h * (q @ _powers((xx - x_start) / h)))

    return brentq(g, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)


def refine_event(trajectory: Trajectory, event: str | Event, bracket: tuple[float, float]):
    """Localize a root of an event function on the dense output.

    Parameters
    ----------
    trajectory : Trajectory
    event : str or Event
        Event name (looked up in ``trajectory.event_defs``) or an event object.
    bracket : (x_lo, x_hi)
        Interval within the trajectory over which the event changes sign.

    Returns
    -------
    (x_hit, state_hit)

    Raises
    ------
    BracketError
        If the event function does not change sign over the bracket.
    """
    if isinstance(event, str):
        try:
            ev = next(e for e in trajectory.event_defs if e.name == event)
        except StopIteration:
            raise KeyError(f"unknown event {event!r}") from None
    else:
        ev = event
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo > hi:
        lo, hi = hi, lo
    tol = trajectory.config.event_tol if trajectory.config else 1e-13
    y_lo = trajectory(lo)
    g_lo = _event_value(ev, lo, y_lo)
    if lo == hi:
        if g_lo != 0.0 and not np.any(trajectory.xs == lo):
            raise BracketError(f"degenerate bracket at x={lo} is not a root")
        return lo, y_lo
    g_hi = _event_value(ev, hi, trajectory(hi))
    if g_lo == 0.0:
        return lo, y_lo
    if g_hi == 0.0:
        return hi, trajectory(hi)
    if g_lo * g_hi > 0.0:
        raise BracketError(f"event {ev.name!r} does not change sign on [{lo}, {hi}]")
    xh = brentq(lambda xx: _event_value(ev, xx, trajectory(xx)), lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    return xh, trajectory(xh)

"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 invalid parameters,
3 numerical non-convergence or regime violation.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import io as rio
from .checks import run_battery
from .errors import (
    EllipsoidMapsError,
    InconclusiveError,
    NonConvergenceError,
    ParameterError,
    RegimeError,
    SearchExhaustedError,
)
from .integrator import IntegratorConfig
from .model import ModelParams
from .shooting import bracket_family, find_bn, scan
from .spectral import lowest_eigenvalue, regime_classify

log = logging.getLogger("ellipsoid_maps")

OUT_ENV = "ELLIPSOID_MAPS_OUT"
EXIT_OK, EXIT_VERIFY, EXIT_PARAMS, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    integrator: IntegratorConfig
    b_tol: float
    n_max: int
    out: Path
    fmt: str

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        params = ModelParams(args.k, args.a, args.d)
        try:
            integ = IntegratorConfig(rel_tol=args.rtol, abs_tol=args.atol, x_max=args.x_max)
        except ValueError as exc:
            raise ParameterError(str(exc)) from exc
        if not (args.b_tol > 0 and math.isfinite(args.b_tol)):
            raise ParameterError(f"--b-tol must be > 0, got {args.b_tol}")
        if args.n_max < 1:
            raise ParameterError(f"--n-max must be >= 1, got {args.n_max}")
        out = Path(args.out or os.environ.get(OUT_ENV) or "results")
        return cls(params, integ, args.b_tol, args.n_max, out, args.format)

    @property
    def stem(self) -> str:
        p = self.params
        return f"k{p.k}_a{p.a!r}_d{p.d}"


def _int_strict(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=_int_strict, default=3, help="ellipsoid dimension (>= 3)")
    common.add_argument("--a", type=float, default=1.0, help="semi-axis parameter (nonzero)")
    common.add_argument("--d", type=_int_strict, default=1, help="eigenmap degree (>= 1)")
    common.add_argument("--n", type=_int_strict, default=1, help="family index for 'solve'")
    common.add_argument("--n-max", type=_int_strict, default=3, help="largest family index for 'family'")
    common.add_argument("--x-max", type=float, default=30.0, help="integration horizon")
    common.add_argument("--rtol", type=float, default=1e-10)
    common.add_argument("--atol", type=float, default=1e-12)
    common.add_argument("--b-tol", type=float, default=1e-13, help="bisection stop: width <= b_tol*max(1,b)")
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./results)")
    common.add_argument("--format", choices=("csv", "json", "both"), default="both")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ellipsoid-maps", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run the invariant battery")
    v.add_argument("--quick", action="store_true", help="fewer Lyapunov shots")
    sub.add_parser("solve", parents=[common], help="construct the n-th connecting orbit")
    s = sub.add_parser("scan", parents=[common], help="shoot a log grid of b values")
    s.add_argument("--b-min", type=float, default=1e-6)
    s.add_argument("--b-max", type=float, default=None, help="default 1.01*sqrt(lambda)")
    s.add_argument("--num", type=_int_strict, default=60)
    s.add_argument("--workers", type=_int_strict, default=1)
    sub.add_parser("regime", parents=[common], help="threshold and characteristic roots")
    st = sub.add_parser("stability", parents=[common], help="lowest Jacobi eigenvalue of the identity")
    st.add_argument("--X", type=float, default=12.0)
    st.add_argument("--m", type=_int_strict, default=6000)
    fam = sub.add_parser("family", parents=[common], help="orbits n = 1..n_max and a summary table")
    fam.add_argument("--workers", type=_int_strict, default=1)
    return p


# -- commands -----------------------------------------------------------------


def cmd_verify(cfg: RunConfig, quick: bool = False) -> int:
    results = run_battery(cfg.params, cfg.integrator, quick=quick)
    width = max(len(r.name) for r in results)
    print(f"verify k={cfg.params.k} a={cfg.params.a!r} d={cfg.params.d}")
    for r in results:
        print(f"  {'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  value={r.value:.3e}  limit={r.limit:.1e}  {r.detail}")
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


def _write_orbit(cfg: RunConfig, orbit, timing) -> list[Path]:
    written = []
    name = f"solution_{cfg.stem}_n{orbit.n}"
    if cfg.fmt in ("json", "both"):
        rec = rio.solution_record(orbit, b_tol=cfg.b_tol, timing=timing)
        written.append(rio.atomic_write(cfg.out / f"{name}.json", rio.dumps(rec)))
    if cfg.fmt in ("csv", "both"):
        written.append(rio.atomic_write(cfg.out / f"profile_{cfg.stem}_n{orbit.n}.csv", rio.profile_csv(orbit)))
    return written


def _solve_one(cfg: RunConfig, n: int, bracket=None):
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    orbit = find_bn(cfg.params, n, cfg.integrator, b_tol=cfg.b_tol, bracket=bracket)
    timing = {"started_at": started, "wall_time_s": round(time.perf_counter() - t0, 3)}
    return orbit, timing


def _print_orbit(orbit):
    print(
        f"n={orbit.n}  b_n={orbit.b_n!r}  omega={orbit.omega:.6f}  zeros={orbit.zero_count}  "
        f"energy={orbit.energy:.12g}  tail_rate={orbit.tail_rate:.6f}  sign={orbit.endpoint_sign:+d}"
    )


def cmd_solve(cfg: RunConfig, n: int) -> int:
    orbit, timing = _solve_one(cfg, n)
    _print_orbit(orbit)
    for path in _write_orbit(cfg, orbit, timing):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_scan(cfg: RunConfig, b_min: float, b_max: float | None, num: int, workers: int = 1) -> int:
    if b_max is None:
        b_max = 1.01 * math.sqrt(cfg.params.lam)
    if not (0 < b_min < b_max) or num < 2:
        raise ParameterError(f"need 0 < b_min < b_max and num >= 2, got {b_min}, {b_max}, {num}")
    bs = np.geomspace(b_min, b_max, num)
    records = scan(cfg.params, bs, cfg.integrator, workers=workers)
    name = f"scan_{cfg.stem}"
    if cfg.fmt in ("csv", "both"):
        print(f"wrote {rio.atomic_write(cfg.out / f'{name}.csv', rio.scan_csv(records))}")
    if cfg.fmt in ("json", "both"):
        doc = {
            "schema_version": rio.SCHEMA_VERSION,
            "kind": "scan",
            "params": rio.params_dict(cfg.params),
            "integrator": rio.config_dict(cfg.integrator),
            "columns": rio.SCAN_COLUMNS,
            "rows": rio.scan_rows(records),
        }
        print(f"wrote {rio.atomic_write(cfg.out / f'{name}.json', rio.dumps(doc))}")
    zc = [r.zero_count for r in records]
    print(f"{len(records)} shots, zero counts {min(zc)}..{max(zc)}, max omega {max(r.omega for r in records):.4f}")
    return EXIT_OK


def regime_report(params: ModelParams) -> dict:
    r = regime_classify(params)
    return {
        "schema_version": rio.SCHEMA_VERSION,
        "kind": "regime",
        "params": rio.params_dict(params),
        "a_crit_sq_exact": str(params.a_crit_sq_exact),
        "a_sq": params.a_sq,
        "discriminant": r.discriminant,
        "discriminant_exact": str(r.discriminant_exact),
        "alpha_plus": [r.alpha_plus.real, r.alpha_plus.imag],
        "alpha_minus": [r.alpha_minus.real, r.alpha_minus.imag],
        "regime": r.regime.value,
    }


def cmd_regime(cfg: RunConfig) -> int:
    rep = regime_report(cfg.params)
    print(f"a^2 = {rep['a_sq']!r}   a_crit^2 = {rep['a_crit_sq_exact']} = {cfg.params.a_crit_sq:.12g}")
    print(f"discriminant = {rep['discriminant_exact']} = {rep['discriminant']:.12g}")
    ap, am = rep["alpha_plus"], rep["alpha_minus"]
    print(f"alpha+ = {ap[0]:.12g} {ap[1]:+.12g}i   alpha- = {am[0]:.12g} {am[1]:+.12g}i")
    print(f"regime: {rep['regime']}")
    if cfg.fmt in ("json", "both"):
        print(f"wrote {rio.atomic_write(cfg.out / f'regime_{cfg.stem}.json', rio.dumps(rep))}")
    return EXIT_OK


def cmd_stability(cfg: RunConfig, X: float, m: int) -> int:
    try:
        rep = lowest_eigenvalue(cfg.params, X, m)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    print(f"{'lambda_1 analytic':<22}{rep.lambda_analytic:.12g}")
    print(f"{'lambda_1 numeric':<22}{rep.lambda_numeric:.12g}")
    print(f"{'relative error':<22}{rep.rel_error:.3e}")
    print(f"{'eigfn residual':<22}{rep.eigfn_residual:.3e}")
    print(f"{'eigvec asymmetry':<22}{rep.eigvec_asymmetry:.3e}")
    print(f"{'exploratory':<22}{', '.join(f'{v:.6g}' for v in rep.exploratory)} (unvalidated)")
    if cfg.fmt in ("json", "both"):
        doc = {"schema_version": rio.SCHEMA_VERSION, "kind": "stability", **rep.to_dict()}
        print(f"wrote {rio.atomic_write(cfg.out / f'stability_{cfg.stem}.json', rio.dumps(doc))}")
    return EXIT_OK


def cmd_family(cfg: RunConfig, workers: int = 1) -> int:
    brackets = bracket_family(cfg.params, cfg.n_max, cfg.integrator)
    jobs = [(n, (lo, hi)) for n, lo, hi in brackets]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_one, [cfg] * len(jobs), [n for n, _ in jobs], [b for _, b in jobs]))
    else:
        results = [_solve_one(cfg, n, b) for n, b in jobs]
    rows = []
    for orbit, timing in results:
        _print_orbit(orbit)
        _write_orbit(cfg, orbit, timing)
        rows.append([orbit.n, orbit.b_n, orbit.omega, orbit.energy, orbit.zero_count, orbit.tail_rate])
    header = ["n", "b_n", "omega", "energy", "zero_count", "tail_rate"]
    text = ",".join(header) + "\n" + "".join(",".join(repr(v) for v in r) + "\n" for r in rows)
    print(f"wrote {rio.atomic_write(cfg.out / f'family_{cfg.stem}.csv', text)}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_args(args)
    except ParameterError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    try:
        if args.command == "verify":
            return cmd_verify(cfg, quick=args.quick)
        if args.command == "solve":
            return cmd_solve(cfg, args.n)
        if args.command == "scan":
            return cmd_scan(cfg, args.b_min, args.b_max, args.num, args.workers)
        if args.command == "regime":
            return cmd_regime(cfg)
        if args.command == "stability":
            return cmd_stability(cfg, args.X, args.m)
        if args.command == "family":
            return cmd_family(cfg, args.workers)
    except ParameterError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except RegimeError as exc:
        print(f"regime violation: {exc}", file=sys.stderr)
        print(f"threshold a_crit^2 = {_threshold_text(cfg.params)}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NonConvergenceError, InconclusiveError, SearchExhaustedError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EllipsoidMapsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    parser.error(f"unknown command {args.command!r}")
    return EXIT_PARAMS


def _threshold_text(params: ModelParams) -> str:
    return f"{params.a_crit_sq_exact} ({params.a_crit_sq:.6g})"


if __name__ == "__main__":
    sys.exit(main())

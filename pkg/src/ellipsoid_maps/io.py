"""Serialisation of results to JSON and CSV.

Floats are written with ``repr`` (shortest round-trip decimal), so every
finite value reads back bit-identically.  Files are written to a temporary
sibling and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .integrator import IntegratorConfig
from .model import ModelParams
from .shooting import ConnectingOrbit, ShotRecord, tail_rate_linear

SCHEMA_VERSION = 1
MAX_PROFILE_ROWS = 5000
PROFILE_COLUMNS = ["x", "h", "hp", "W", "theta"]
F_COLUMNS = ["psi", "f"]


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        os.chmod(tmp, 0o644)
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def downsample(rows: np.ndarray, max_rows: int = MAX_PROFILE_ROWS, keep_x=()) -> np.ndarray:
    """Thin ``rows`` to at most ``max_rows``, always keeping the ends and rows whose x is in ``keep_x``."""
    n = len(rows)
    if n <= max_rows:
        return rows
    keep = np.zeros(n, dtype=bool)
    keep[[0, -1]] = True
    if len(keep_x):
        keep |= np.isin(rows[:, 0], np.asarray(keep_x, dtype=float))
    budget = max_rows - int(keep.sum())
    if budget > 0:
        free = np.nonzero(~keep)[0]
        pick = free[np.linspace(0, free.size - 1, min(budget, free.size)).round().astype(int)]
        keep[pick] = True
    return rows[keep]


def _table(arr: np.ndarray, columns: list[str]) -> dict:
    return {"columns": columns, "rows": [[float(v) for v in row] for row in arr]}


def _untable(obj: dict) -> np.ndarray:
    rows = obj["rows"]
    return np.array(rows, dtype=float).reshape(len(rows), len(obj["columns"]))


def params_dict(params: ModelParams) -> dict:
    return {"k": params.k, "a": params.a, "d": params.d, "lambda": params.lam, "a_crit_sq": params.a_crit_sq}


def config_dict(config: IntegratorConfig | None) -> dict | None:
    if config is None:
        return None
    return {
        "rel_tol": config.rel_tol,
        "abs_tol": config.abs_tol,
        "max_step": config.max_step,
        "x_max": config.x_max,
        "event_tol": config.event_tol,
    }


def solution_record(orbit: ConnectingOrbit, b_tol: float | None = None, timing: dict | None = None) -> dict:
    """Plain-dict form of a converged orbit (the serialised SolutionRecord)."""
    params = orbit.params
    profile = downsample(orbit.profile, keep_x=orbit.zero_xs)
    f_profile = downsample(orbit.f_profile)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "connecting_orbit",
        "params": params_dict(params),
        "n": orbit.n,
        "b_n": orbit.b_n,
        "bracket": [orbit.bracket[0], orbit.bracket[1]],
        "bracket_width": orbit.bracket_width,
        "endpoint_sign": orbit.endpoint_sign,
        "omega": orbit.omega,
        "zero_count": orbit.zero_count,
        "zero_xs": [float(z) for z in orbit.zero_xs],
        "tail_rate": orbit.tail_rate,
        "tail_rate_linear": tail_rate_linear(params),
        "x_cut": orbit.x_cut,
        "energy": orbit.energy,
        "energy_remainder": orbit.energy_remainder,
        "profile": _table(profile, PROFILE_COLUMNS),
        "f_profile": _table(f_profile, F_COLUMNS),
        "provenance": {
            "tool": "ellipsoid_maps",
            "version": __version__,
            "integrator": config_dict(orbit.config),
            "b_tol": b_tol,
            "timing": timing or {},
        },
    }


def orbit_from_record(rec: dict) -> ConnectingOrbit:
    """Rebuild a :class:`ConnectingOrbit` (without its trajectory) from a record."""
    if rec.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {rec.get('schema_version')!r}")
    p = rec["params"]
    cfg = rec["provenance"].get("integrator")
    return ConnectingOrbit(
        n=int(rec["n"]),
        b_n=rec["b_n"],
        bracket=tuple(rec["bracket"]),
        bracket_width=rec["bracket_width"],
        endpoint_sign=int(rec["endpoint_sign"]),
        omega=rec["omega"],
        zero_count=int(rec["zero_count"]),
        tail_rate=rec["tail_rate"],
        x_cut=rec["x_cut"],
        profile=_untable(rec["profile"]),
        zero_xs=np.array(rec["zero_xs"], dtype=float),
        f_profile=_untable(rec["f_profile"]),
        energy=rec["energy"],
        energy_remainder=rec["energy_remainder"],
        params=ModelParams(p["k"], p["a"], p["d"]),
        config=IntegratorConfig(**cfg) if cfg else None,
    )


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def profile_csv(orbit: ConnectingOrbit) -> str:
    """Two CSV blocks separated by a blank line: ``x,h,hp,W,theta`` then ``psi,f``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for row in downsample(orbit.profile, keep_x=orbit.zero_xs):
        w.writerow([repr(float(v)) for v in row])
    buf.write("\n")
    w.writerow(F_COLUMNS)
    for row in downsample(orbit.f_profile):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def read_profile_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    first, second = text.strip("\n").split("\n\n")
    blocks = []
    for block, cols in ((first, PROFILE_COLUMNS), (second, F_COLUMNS)):
        rows = list(csv.reader(block.splitlines()))
        if rows[0] != cols:
            raise ValueError(f"unexpected header {rows[0]!r}")
        blocks.append(np.array([[float(v) for v in r] for r in rows[1:]], dtype=float))
    return blocks[0], blocks[1]


SCAN_COLUMNS = ["b", "class", "zero_count", "omega", "omega_is_lower_bound", "exit_x"]


def scan_rows(records: list[ShotRecord]) -> list[list]:
    return [
        [
            r.b,
            r.tag.value,
            r.zero_count,
            r.omega,
            r.omega_is_lower_bound,
            r.orbit_class.exit_x,
        ]
        for r in records
    ]


def scan_csv(records: list[ShotRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCAN_COLUMNS)
    for row in scan_rows(records):
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()

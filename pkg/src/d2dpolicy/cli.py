"""Command-line sweeps over strategy, blockage length W and D2D target SNR.

Config files are flat ``key = value`` lines; ``#`` starts a comment. Radio
quantities carry their unit in the key (``N0_dbm``, ``theta_db``). Lists are
comma separated. Example::

    strategies = AWA_S, GEO_S, NO_D2D
    W = 1, 2, 3
    xi_db = 0, 5, 10, 15, 20
    ladder = -13:12          # AWAM_S: base level in dBm : number of levels
    n_topologies = 200
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import RadioParams, db_to_linear, dbm_to_watts
from .sim import SimConfig, run_sessions, aggregate
from .strategies import StrategyConfig, StrategyKind, power_ladder

log = logging.getLogger("d2dpolicy")

CSV_FIELDS = ("strategy", "W", "xi_db", "omega_U", "omega_S", "omega_sum", "omega_min",
              "d2d_mode_fraction", "blockage_fraction", "slots", "seed")

SCALES = {"desk": (500, 10_000), "paper": (5000, 1000)}


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.key = key


@dataclass(frozen=True)
class ExperimentSpec:
    radio: RadioParams
    W_values: tuple = (2,)
    xi_db_values: tuple = (10.0,)
    strategies: tuple = (StrategyKind.AWA_S, StrategyKind.GEO_S, StrategyKind.NO_D2D)
    ladder: tuple = (-13.0, 12)
    R: float = 250.0
    L: float = 100.0
    gamma: float = 0.99
    T_d: float = 0.8
    n_topologies: int = SCALES["desk"][0]
    slots_per_topology: int = SCALES["desk"][1]
    seed: int = 0
    out: str | None = None
    explicit: frozenset = field(default=frozenset(), compare=False)


# --- parsing ---------------------------------------------------------------------

def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _list(conv):
    def parse(v):
        items = [s.strip() for s in v.split(",") if s.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(s) for s in items)
    return parse


def _kind(v):
    key = v.strip().upper().replace("-", "_")
    try:
        return StrategyKind(key)
    except ValueError:
        raise ValueError(f"unknown strategy {v!r}; choose from {[k.value for k in StrategyKind]}") from None


def _ladder(v):
    base, _, count = v.partition(":")
    if not count:
        raise ValueError("expected base_dbm:count")
    n = _int(count)
    if n < 1:
        raise ValueError("ladder needs at least one level")
    return (float(base), n)


_KEYS = {
    "R": _float,
    "L": _float,
    "alpha": _float,
    "A": _float,
    "N0_dbm": _float,
    "rho_dbm": _float,
    "theta_db": _float,
    "I_ic_dbm": _float,
    "gamma": _float,
    "T_d": _float,
    "W": _list(_int),
    "xi_db": _list(_float),
    "strategies": _list(_kind),
    "ladder": _ladder,
    "n_topologies": _int,
    "slots_per_topology": _int,
    "seed": _int,
    "out": str,
}

_DEFAULTS = {"N0_dbm": -90.0, "rho_dbm": -90.0, "theta_db": 0.0, "alpha": 4.0, "A": 1.0,
             "I_ic_dbm": -math.inf}


def _check_out(path, line=None):
    d = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(d) or not os.access(d, os.W_OK):
        raise ConfigError(f"output path {path!r} is not writable", line, "out")


def parse_config(text: str) -> ExperimentSpec:
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        key, eq, val = body.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        try:
            values[key] = _KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, key) from None
        lines[key] = lineno

    def get(key):
        return values.get(key, _DEFAULTS.get(key))

    def check(key, ok, what):
        if key in values and not ok:
            raise ConfigError(f"{key} must be {what}", lines[key], key)

    for key in ("R", "L", "A"):
        check(key, values.get(key, 1) > 0, "positive")
    check("alpha", get("alpha") >= 2, ">= 2")
    check("gamma", 0 < values.get("gamma", 0.5) < 1, "in (0, 1)")
    check("T_d", values.get("T_d", 0) >= 0, "nonnegative")
    check("W", all(w >= 1 for w in values.get("W", (1,))), "positive integers")
    check("n_topologies", values.get("n_topologies", 1) >= 1, ">= 1")
    check("slots_per_topology", values.get("slots_per_topology", 1) >= 1, ">= 1")
    for key in ("N0_dbm", "rho_dbm", "theta_db"):
        check(key, math.isfinite(values.get(key, 0.0)), "finite")
    check("I_ic_dbm", values.get("I_ic_dbm", 0.0) < math.inf, "finite or -inf")
    if "out" in values:
        _check_out(values["out"], lines["out"])

    N0 = dbm_to_watts(get("N0_dbm"))
    rho = dbm_to_watts(get("rho_dbm"))
    try:
        radio = RadioParams(A=get("A"), alpha=get("alpha"), N0=N0, theta=db_to_linear(get("theta_db")),
                            I_ic=dbm_to_watts(get("I_ic_dbm")), rho=rho)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    kw = {k: values[k] for k in ("R", "L", "gamma", "T_d", "n_topologies", "slots_per_topology", "seed", "out")
          if k in values}
    if "W" in values:
        kw["W_values"] = tuple(sorted(set(values["W"])))
    if "xi_db" in values:
        kw["xi_db_values"] = tuple(sorted(set(values["xi_db"])))
    if "strategies" in values:
        kw["strategies"] = tuple(dict.fromkeys(values["strategies"]))
    if "ladder" in values:
        kw["ladder"] = values["ladder"]
    return ExperimentSpec(radio=radio, explicit=frozenset(values), **kw)


# --- running ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    kind: StrategyKind
    W: int | None
    xi_db: float | None


def sweep_points(spec: ExperimentSpec):
    pts = []
    for kind in spec.strategies:
        if kind is StrategyKind.NO_D2D:
            pts.append(SweepPoint(kind, None, None))
        elif kind is StrategyKind.AWA_S:
            pts += [SweepPoint(kind, W, xi) for W in spec.W_values for xi in spec.xi_db_values]
        else:
            pts += [SweepPoint(kind, W, None) for W in spec.W_values]
    return pts


def strategy_for(spec: ExperimentSpec, pt: SweepPoint) -> StrategyConfig:
    kw = dict(kind=pt.kind, gamma=spec.gamma, W=pt.W or 1, T_d=spec.T_d)
    if pt.xi_db is not None:
        kw["xi"] = db_to_linear(pt.xi_db)
    if pt.kind is StrategyKind.AWAM_S:
        kw["power_levels"] = power_ladder(*spec.ladder)
    return StrategyConfig(**kw)


def sim_config(spec: ExperimentSpec, pt: SweepPoint) -> SimConfig:
    return SimConfig(radio=spec.radio, strategy=strategy_for(spec, pt), R=spec.R, L=spec.L,
                     n_topologies=spec.n_topologies, slots_per_topology=spec.slots_per_topology,
                     seed=spec.seed)


def run_experiment(spec: ExperimentSpec, threads=1):
    """One row per sweep point, in sweep order. Failed points carry ``error``."""
    rows = []
    for pt in sweep_points(spec):
        row = {"strategy": pt.kind.value, "W": pt.W, "xi_db": pt.xi_db,
               "slots": spec.n_topologies * spec.slots_per_topology, "seed": spec.seed}
        try:
            out = aggregate(run_sessions(sim_config(spec, pt), threads=threads))
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            log.error("%s W=%s xi_db=%s failed: %s", pt.kind.value, pt.W, pt.xi_db, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        else:
            row.update(omega_U=out.omega_U, omega_S=out.omega_S, omega_sum=out.omega_sum,
                       omega_min=out.omega_min, d2d_mode_fraction=out.d2d_mode_fraction,
                       blockage_fraction=out.blockage_fraction, slots=out.slots_simulated)
            log.info("%s W=%s xi_db=%s  U=%.4f S=%.4f", pt.kind.value, pt.W, pt.xi_db,
                     out.omega_U, out.omega_S)
        rows.append(row)
    return rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ValueError(f"refusing to write non-finite value {v!r}")
        return repr(float(v))
    return str(v)


def format_csv(rows) -> str:
    if not rows:
        raise ValueError("empty table")
    fields = list(CSV_FIELDS) + (["error"] if any("error" in r for r in rows) else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_cell(r.get(f)) for f in fields])
    return buf.getvalue()


def emit_csv(rows, path):
    text = format_csv(rows)
    try:
        with open(path, "w", newline="", encoding="ascii") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path):
    """Parse an emitted table back into typed rows."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        t = {"strategy": r["strategy"], "W": int(r["W"]) if r["W"] else None,
             "xi_db": float(r["xi_db"]) if r["xi_db"] else None,
             "slots": int(r["slots"]), "seed": int(r["seed"])}
        for f in CSV_FIELDS[3:9]:
            if r[f]:
                t[f] = float(r[f])
        if r.get("error"):
            t["error"] = r["error"]
        out.append(t)
    return out


# --- recipes ----------------------------------------------------------------------

_SNR_SWEEP = tuple(float(x) for x in range(0, 21, 2))
_W_SWEEP = tuple(range(1, 11))

RECIPES = {
    # throughput of U, S, their sum and their minimum against the D2D target SNR
    "fig4": dict(strategies=(StrategyKind.AWA_S, StrategyKind.GEO_S, StrategyKind.NO_D2D),
                 W_values=_W_SWEEP, xi_db_values=_SNR_SWEEP),
    # how often AWA-S picks D2D
    "fig5": dict(strategies=(StrategyKind.AWA_S,), W_values=_W_SWEEP, xi_db_values=_SNR_SWEEP),
    "fig6": dict(strategies=(StrategyKind.AWA_S, StrategyKind.GEO_S, StrategyKind.NO_D2D),
                 W_values=_W_SWEEP, xi_db_values=_SNR_SWEEP),
    "fig7": dict(strategies=(StrategyKind.AWA_S, StrategyKind.GEO_S, StrategyKind.NO_D2D),
                 W_values=_W_SWEEP, xi_db_values=_SNR_SWEEP),
    "fig8": dict(strategies=(StrategyKind.AWA_S, StrategyKind.GEO_S, StrategyKind.NO_D2D),
                 W_values=_W_SWEEP, xi_db_values=_SNR_SWEEP),
    # single vs multi power against W
    "fig9": dict(strategies=(StrategyKind.GEO_S, StrategyKind.AWA_S, StrategyKind.AWAM_S),
                 W_values=_W_SWEEP, xi_db_values=(20.0,), ladder=(-13.0, 12)),
}


_RECIPE_KEYS = {"strategies": "strategies", "W_values": "W", "xi_db_values": "xi_db", "ladder": "ladder"}


def build_parser():
    ap = argparse.ArgumentParser(prog="d2dpolicy", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", metavar="PATH", help="key = value experiment file")
    ap.add_argument("--out", metavar="PATH", help="CSV destination (default: stdout)")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--scale", choices=sorted(SCALES),
                    help="desk: 500 topologies x 1e4 slots; paper: 5000 x 1000")
    ap.add_argument("--threads", type=int, default=1, help="worker threads per sweep point")
    ap.add_argument("--recipe", choices=sorted(RECIPES), help="preset sweep axes")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        spec = parse_config(text)
        if args.recipe:
            # axes set in the config file win over the preset
            preset = {k: v for k, v in RECIPES[args.recipe].items()
                      if _RECIPE_KEYS[k] not in spec.explicit}
            spec = replace(spec, **preset)
        if args.scale:
            n, s = SCALES[args.scale]
            spec = replace(spec, n_topologies=n, slots_per_topology=s)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        out = args.out or spec.out
        if out:
            _check_out(out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except (OSError, ConfigError) as exc:
        print(f"d2dpolicy: {exc}", file=sys.stderr)
        return 2

    rows = run_experiment(spec, threads=args.threads)
    try:
        if out:
            emit_csv(rows, out)
        else:
            sys.stdout.write(format_csv(rows))
    except (OSError, ValueError) as exc:
        print(f"d2dpolicy: {exc}", file=sys.stderr)
        return 2
    return 1 if any("error" in r for r in rows) else 0

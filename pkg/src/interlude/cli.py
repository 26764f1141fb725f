"""Command-line entry point: simulate, sweep, analyze, dump.

Config files are flat ``key = value`` text. Keys are the simulation fields
(``k``, ``beta``, ``delta``, ...) plus the run keys in ``RUN_KEYS`` and sweep
axes written as ``sweep_<field> = v1, v2, ...``. Command-line flags mirror
the keys and take precedence. Exit codes: 0 success, 1 invariant breach,
2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .analysis.formulas import (
    BITCOIN_CONFIRMATION_S,
    FairnessParams,
    epsilon,
    frontrunning_bound,
    regime_warnings,
    throughput_best_case,
    time_to_finality,
)
from .analysis.walk import WalkParams, liveness_decay_fit, liveness_walk, safety_walk
from .chain import chain_violation, dump_chain, load_chain
from .crypto import ParameterError
from .simnet.config import CONFIG_FIELDS, SimConfig
from .simnet.engine import InvariantError, Simulation
from .simnet.metrics import CSV_VERSION, finite_json, build_report

EXIT_OK, EXIT_BREACH, EXIT_CONFIG = 0, 1, 2
SEED_ENV = "INTERLUDE_SEED"
SECTION = "run"
RUN_KEYS = {"out_dir": str, "format": str, "jobs": int}
FORMATS = ("both", "csv", "json")

SWEEP_CSV_MAGIC = f"# interlude-sweep-csv v{CSV_VERSION}"
SWEEP_COLUMNS = (
    "status",
    "height",
    "inclusion_rate",
    "block_throughput",
    "block_throughput_formula",
    "tx_throughput",
    "mean_round_s",
    "confirm_mean_s",
    "accepted_txs",
    "reversals",
    "public_forks",
    "private_forks",
    "error",
)


class ConfigError(Exception):
    def __init__(self, message: str, source: str = "", line: int | None = None, key: str | None = None):
        where = source
        if line is not None:
            where += f":{line}"
        if key:
            where += f": {key}"
        super().__init__(f"{where}: {message}" if where else message)


# ---------------------------------------------------------------------------
# value parsing


def parse_number(text: str) -> float:
    """Decimal, fraction ("1/600") or inf."""
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(Fraction(t))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def parse_int(text: str) -> int:
    x = parse_number(text)
    if not math.isfinite(x) or x != int(x):
        raise ValueError(f"not an integer: {text!r}")
    return int(x)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    def parse(text: str):
        return None if text.strip().lower() in ("none", "") else conv(text)

    return parse


def _list(conv):
    def parse(text: str):
        items = [s for s in text.replace(",", " ").split() if s]
        return tuple(conv(s) for s in items)

    return parse


_CONVERTERS = {
    "int": parse_int,
    "float": parse_number,
    "bool": parse_bool,
    "str": str.strip,
    "float | None": _optional(parse_number),
    "int | None": _optional(parse_int),
    "tuple[float, ...] | None": _optional(_list(parse_number)),
    "tuple[int, ...]": _list(parse_int),
}


def converter(key: str):
    if key in RUN_KEYS:
        return parse_int if RUN_KEYS[key] is int else str.strip
    return _CONVERTERS[CONFIG_FIELDS[key].type]


# ---------------------------------------------------------------------------
# config files


@dataclass
class RunConfig:
    sim: SimConfig
    out_dir: Path = Path("interlude-out")
    format: str = "both"
    jobs: int = 1
    sweeps: dict[str, tuple] = field(default_factory=dict)


def _line_of(text: str, key: str) -> int | None:
    for j, line in enumerate(text.splitlines(), 1):
        head = line.split("=", 1)[0].split(":", 1)[0].strip()
        if head == key:
            return j
    return None


def read_config_text(text: str, source: str = "<config>") -> tuple[dict, dict]:
    """Parse flat key/value text into (field values, sweep axes)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(f"[{SECTION}]\n" + text, source=source)
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        raise ConfigError(str(e).splitlines()[0], source, None if line is None else line - 1) from None
    if cp.sections() != [SECTION]:
        raise ConfigError("section headers are not allowed; use flat key = value lines", source)
    values: dict = {}
    sweeps: dict = {}
    for key, raw in cp[SECTION].items():
        line = _line_of(text, key)
        target = key[len("sweep_") :] if key.startswith("sweep_") else key
        if target not in CONFIG_FIELDS and target not in RUN_KEYS:
            raise ConfigError("unknown key", source, line, key)
        try:
            if key.startswith("sweep_"):
                conv = converter(target)
                sweeps[target] = tuple(conv(s) for s in raw.split(",") if s.strip())
            else:
                values[key] = converter(key)(raw)
        except ValueError as e:
            raise ConfigError(str(e), source, line, key) from None
    return values, sweeps


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    sweeps: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e.strerror}", path) from None
        values, sweeps = read_config_text(text, path)
    values.update(overrides)
    if "seed" not in values and os.environ.get(SEED_ENV):
        try:
            values["seed"] = parse_int(os.environ[SEED_ENV])
        except ValueError as e:
            raise ConfigError(str(e), SEED_ENV) from None
    run = {k: values.pop(k) for k in list(values) if k in RUN_KEYS}
    try:
        sim = SimConfig(**values)
    except ParameterError as e:
        raise ConfigError(str(e), path or "<flags>") from None
    fmt = run.get("format", "both")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}", path or "<flags>", key="format")
    jobs = run.get("jobs", 1)
    if jobs < 1:
        raise ConfigError("jobs must be >= 1", path or "<flags>", key="jobs")
    return RunConfig(sim, Path(run.get("out_dir", "interlude-out")), fmt, jobs, sweeps)


# ---------------------------------------------------------------------------
# artifacts


def write_artifacts(report, result, out_dir: Path, fmt: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("both", "csv"):
        p = out_dir / "metrics.csv"
        p.write_text(report.to_csv())
        written.append(p)
    if fmt in ("both", "json"):
        p = out_dir / "summary.json"
        p.write_text(report.to_json())
        written.append(p)
    if result.trace is not None:
        p = out_dir / "trace.jsonl"
        with p.open("w") as fh:
            for ev in result.trace:
                fh.write(json.dumps(ev, sort_keys=True) + "\n")
        written.append(p)
    return written


def _run_point(sim: SimConfig):
    result = Simulation(sim).run()
    return build_report(result), result


def _sweep_point(args):
    """Run one grid point; returns (row, error kind). Never raises."""
    axis, value, sim, out_dir, fmt = args
    row = {axis: value}
    try:
        sim = sim.with_(**{axis: value})
        report, result = _run_point(sim)
    except ParameterError as e:
        return {**row, "status": "config_error", "error": str(e)}, EXIT_CONFIG
    except InvariantError as e:
        return {**row, "status": "invariant_breach", "error": str(e)}, EXIT_BREACH
    write_artifacts(report, result, out_dir / f"{axis}={value}", fmt)
    d = report.delay(sim.kappa)
    row.update(
        status="ok",
        height=report.height,
        inclusion_rate=report.inclusion_rate,
        block_throughput=report.block_throughput,
        block_throughput_formula=report.block_throughput_formula,
        tx_throughput=report.tx_throughput,
        mean_round_s=report.mean_round_s,
        confirm_mean_s=d.mean_from_inclusion,
        accepted_txs=report.accepted_txs[sim.kappa],
        reversals=report.reversals[sim.kappa],
        public_forks=report.forks["public"],
        private_forks=report.forks["private"],
        error="",
    )
    return row, EXIT_OK


def sweep_csv(axis: str, rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(SWEEP_CSV_MAGIC + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((axis,) + SWEEP_COLUMNS)
    for row in rows:
        cells = []
        for col in (axis,) + SWEEP_COLUMNS:
            v = row.get(col, "")
            cells.append(repr(v) if isinstance(v, float) else v)
        w.writerow(cells)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# analyze


def analyze(args) -> dict:
    errors = []
    out: dict = {
        "epsilon": None,
        "liveness_table_summary": None,
        "safety_limit": None,
        "p_f_bound": None,
        "throughput": None,
        "finality": None,
        "warnings": [],
        "error": None,
    }
    beta, delta, kappa, k = args.beta, args.delta, args.kappa, args.k
    try:
        eps = epsilon(beta, delta)
        out["epsilon"] = eps
    except ParameterError as e:
        errors.append(str(e))
        eps = None
    lam = args.lam if args.lam is not None else (k / (1 / beta - delta) if 1 / beta > delta else None)
    if lam is not None:
        out["warnings"] = regime_warnings(k, lam, beta, delta, args.alpha)
    else:
        out["warnings"] = [f"1/beta = {1 / beta:.6g} s does not exceed delta; no default lambda"]
    if eps is not None:
        try:
            wp = WalkParams(eps, kappa, args.t_max)
            table = liveness_walk(WalkParams(eps, kappa, min(args.t_max, 40 * kappa)))
            fit = liveness_decay_fit(eps, kappa)
            out["liveness_table_summary"] = {
                "kappa": kappa,
                "t_max": table.params.t_max,
                "p_at_t_max": table.p(table.params.t_max, 0),
                "p_at_5kappa": table.p(min(5 * kappa, table.params.t_max), 0),
                "decay_slope": fit.slope,
                "decay_r2": fit.r2,
            }
            out["safety_limit"] = safety_walk(wp).limit
        except ParameterError as e:
            errors.append(f"random walk: {e}")
    if not args.skip_pf:
        try:
            d = delta if args.d is None else args.d
            out["p_f_bound"] = frontrunning_bound(FairnessParams(args.M, args.m_pct, d, beta, delta))
        except ParameterError as e:
            errors.append(f"p_f bound: {e}")
    try:
        out["throughput"] = {"k": k, "blocks_per_s": throughput_best_case(beta, delta, k)}
    except ParameterError as e:
        errors.append(f"throughput: {e}")
    try:
        fin = time_to_finality(kappa, beta, delta)
        out["finality"] = {"kappa": kappa, "seconds": fin, "ratio_to_reference": fin / BITCOIN_CONFIRMATION_S}
    except ParameterError as e:
        errors.append(f"finality: {e}")
    out["error"] = "; ".join(errors) if errors else None
    return out


# ---------------------------------------------------------------------------
# argument handling


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="flat key = value config file")
    g = p.add_argument_group("config keys (override the file)")
    for key in list(CONFIG_FIELDS) + list(RUN_KEYS):
        g.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="VALUE", default=None)


def _overrides(ns) -> dict:
    out = {}
    for key in list(CONFIG_FIELDS) + list(RUN_KEYS):
        raw = getattr(ns, "cfg_" + key)
        if raw is None:
            continue
        try:
            out[key] = converter(key)(raw)
        except ValueError as e:
            raise ConfigError(str(e), "<flags>", key="--" + key.replace("_", "-")) from None
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="interlude", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation and write metrics")
    _add_config_flags(p)

    p = sub.add_parser("sweep", help="run a grid of simulations along one axis")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, help="config key to sweep")
    p.add_argument("--values", help="comma-separated values (else sweep_<axis> from the config)")

    p = sub.add_parser("analyze", help="closed-form and random-walk quantities as JSON")
    p.add_argument("--beta", type=parse_number, default=1 / 600)
    p.add_argument("--delta", type=parse_number, default=40.0)
    p.add_argument("--kappa", type=parse_int, default=14)
    p.add_argument("--k", type=parse_int, default=16)
    p.add_argument("--lam", type=parse_number, default=None)
    p.add_argument("--alpha", type=parse_number, default=0.0)
    p.add_argument("--M", type=parse_number, default=0.1, help="fast-party hash share")
    p.add_argument("--m-pct", type=parse_number, default=0.5)
    p.add_argument("--d", type=parse_number, default=None, help="head start, defaults to delta")
    p.add_argument("--t-max", type=parse_int, default=10_000)
    p.add_argument("--skip-pf", action="store_true")

    p = sub.add_parser("dump", help="write a chain as JSON lines")
    _add_config_flags(p)
    p.add_argument("--from", dest="src", help="re-validate an existing dump instead of simulating")
    p.add_argument("--output", "-o", help="output file (default stdout)")
    return ap


def _cmd_simulate(ns) -> int:
    rc = load_run_config(ns.config, _overrides(ns))
    report, result = _run_point(rc.sim)
    paths = write_artifacts(report, result, rc.out_dir, rc.format)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_sweep(ns) -> int:
    rc = load_run_config(ns.config, _overrides(ns))
    axis = ns.axis.replace("-", "_")
    if axis not in CONFIG_FIELDS:
        raise ConfigError("unknown sweep axis", "<flags>", key=axis)
    if ns.values is not None:
        try:
            conv = converter(axis)
            values = tuple(conv(s) for s in ns.values.split(",") if s.strip())
        except ValueError as e:
            raise ConfigError(str(e), "<flags>", key="--values") from None
    elif axis in rc.sweeps:
        values = rc.sweeps[axis]
    else:
        raise ConfigError(f"axis not declared; add sweep_{axis} to the config or pass --values", ns.config or "<flags>")
    if not values:
        raise ConfigError("sweep axis is empty", ns.config or "<flags>", key=axis)
    tasks = [(axis, v, rc.sim, rc.out_dir, rc.format) for v in values]
    if rc.jobs > 1:
        with ProcessPoolExecutor(max_workers=rc.jobs) as ex:
            results = list(ex.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = [r for r, _ in results]
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    path = rc.out_dir / f"sweep_{axis}.csv"
    path.write_text(sweep_csv(axis, rows))
    print(path)
    worst = max(code for _, code in results)
    for row, code in results:
        if code:
            print(f"point {axis}={row[axis]}: {row['error']}", file=sys.stderr)
    return worst


def _cmd_analyze(ns) -> int:
    print(json.dumps(finite_json(analyze(ns)), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_dump(ns) -> int:
    rc = load_run_config(ns.config, _overrides(ns))
    sim = Simulation(rc.sim)
    if ns.src:
        try:
            lines = Path(ns.src).read_text().splitlines()
        except OSError as e:
            raise ConfigError(f"cannot read dump: {e.strerror}", ns.src) from None
        try:
            chain = load_chain(lines, sim.params)
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"malformed dump: {e}", ns.src) from None
        v = chain_violation(chain, sim.params)
        if v is not None:
            inner = v
            while inner.cause is not None:
                inner = inner.cause
            raise InvariantError("chain validity", f"rule {v.rule} at height {v.height}; first fault: rule {inner.rule} at height {inner.height} ({inner.detail})")
    else:
        chain = sim.run().final_chain
    text = "".join(line + "\n" for line in dump_chain(chain))
    if ns.output:
        Path(ns.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "sweep": _cmd_sweep, "analyze": _cmd_analyze, "dump": _cmd_dump}


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        return COMMANDS[ns.command](ns)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as e:
        print(f"invariant breach: {e.name}: {e}", file=sys.stderr)
        return EXIT_BREACH


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``run``, ``sweep`` and ``calibrate``.

Config files are plain ``key = value`` lines; ``#`` starts a comment.
Exit codes: 0 success, 1 invalid input, 2 failure while running.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import __version__
from .engine import ConfigError, SimConfig, SimulationResult, run_simulation
from .experiments import InsufficientPoints, SweepResult, SweepSpec, phase_summary, run_sweep
from .quality import CalibrationError, calibrate_distribution

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

def _int(text: str) -> int:
    return int(text, 0)


def _max_rej(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("unlimited", "none", "inf") else int(text)


# file key -> (SimConfig field, parser)
KEYS = {
    "journals": ("journals", _int),
    "new_per_round": ("new_per_round", _int),
    "capacity": ("capacity", _int),
    "referees": ("referees", _int),
    "referees_per_manuscript": ("referees_per_manuscript", _int),
    "alpha": ("alpha", float),
    "lambda": ("lam", float),
    "beta": ("beta", float),
    "gamma": ("gamma_exp", float),
    "mean_quality": ("mean_quality", float),
    "high_quality_count": ("high_quality_count", _int),
    "bootstrap_theta1": ("bootstrap_theta1", float),
    "max_rejections": ("max_rejections", _max_rej),
    "rounds": ("rounds", _int),
    "seed": ("seed", _int),
    "q_floor": ("q_floor", float),
}
FIELD_TO_KEY = {f: k for k, (f, _) in KEYS.items()}


class InputError(ValueError):
    pass


def _parse_value(key: str, text: str, where: str):
    if key not in KEYS:
        raise InputError(f"{where}: unknown key {key!r}")
    fld, conv = KEYS[key]
    try:
        return fld, conv(text)
    except ValueError:
        raise InputError(f"{where}: {key}: cannot parse {text!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> tuple[dict, dict]:
    """Return ``({field: value}, {field: line number})`` from key-value text."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        fld, parsed = _parse_value(key, val, f"{source}:{lineno}")
        values[fld] = parsed
        lines[fld] = lineno
    return values, lines


def parse_config(path: Optional[os.PathLike] = None, overrides: Optional[dict] = None) -> SimConfig:
    """Read a config file, apply ``overrides`` (file key -> string or value), validate."""
    values, lines = {}, {}
    source = str(path) if path else "<defaults>"
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from None
        values, lines = parse_config_text(text, source)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        fld, parsed = _parse_value(key, val, "command line") if isinstance(val, str) else (KEYS[key][0], val)
        values[fld] = parsed
        lines.pop(fld, None)
    try:
        cfg = SimConfig(**values)
    except TypeError as exc:
        raise InputError(f"{source}: {exc}") from None
    try:
        return cfg.validate()
    except ConfigError as exc:
        key = FIELD_TO_KEY.get(exc.key, exc.key)
        where = f"{source}:{lines[exc.key]}" if exc.key in lines else source
        raise InputError(f"{where}: {key}: {str(exc).split(': ', 1)[1]}") from None


def format_config(cfg: SimConfig) -> str:
    out = []
    for key, (fld, _) in KEYS.items():
        val = getattr(cfg, fld)
        if val is None:
            val = "unlimited"
        elif isinstance(val, float):
            val = repr(val)
        out.append(f"{key} = {val}")
    return "\n".join(out) + "\n"


def manifest_text(cfg: SimConfig, result: Optional[SimulationResult] = None) -> str:
    """Resolved config plus derived run metadata as comments.

    The timestamp honours ``SOURCE_DATE_EPOCH`` (default 0) so that reruns
    stay byte-identical.
    """
    dist = cfg.distribution()
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    stamp = dt.datetime.fromtimestamp(epoch, dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    head = [
        f"# peersim {__version__} run manifest",
        f"# timestamp = {stamp}",
        f"# calibrated_shape = {dist.shape!r}",
        f"# calibrated_scale = {dist.scale!r}",
        f"# achieved_tail_mass = {dist.achieved_tail_mass:.9f}",
    ]
    if result is not None:
        st = result.state
        head += [
            f"# generated_total = {st.generated_total}",
            f"# accepted_total = {st.accepted_total}",
            f"# abandoned_total = {st.abandoned_total}",
            f"# in_flight = {st.in_flight}",
        ]
    return "\n".join(head) + "\n" + format_config(cfg)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def issues_csv(result: SimulationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["issue", "q1_avg", "q2_avg", "q3_avg", "q4_avg", "total_submissions", "accepted", "abandoned"])
    for m in result.metrics:
        w.writerow([m.issue, *(_fmt(x) for x in m.quartile_avg), m.total_submissions,
                    m.accepted_count, m.abandoned_count])
    return buf.getvalue()


def rejections_csv(result: SimulationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rejections_before_acceptance", "count"])
    for k, c in enumerate(result.state.histogram):
        w.writerow([k, int(c)])
    return buf.getvalue()


def _value_column(result: SweepResult) -> str:
    name = result.spec.swept_parameter
    return "n" if name in ("n", "new_per_round") else FIELD_TO_KEY.get(name, name)


def sweep_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([_value_column(result), "replication", "seed", "q1_avg", "q2_avg", "q3_avg", "q4_avg",
                "mean_rejections", "first_time_accept_rate"])
    for r in result.rows:
        w.writerow([r.value, r.replication, r.seed, *(_fmt(x) for x in r.quartile_avg),
                    _fmt(r.mean_rejections), _fmt(r.first_time_accept_rate)])
    return buf.getvalue()


def sweep_summary_csv(result: SweepResult) -> str:
    try:
        phases = phase_summary(result)
    except InsufficientPoints:
        phases = None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([_value_column(result), "q1_mean", "q1_std", "q2_mean", "q2_std", "q3_mean", "q3_std", "q4_mean", "q4_std",
                "mean_rejections", "first_time_accept_rate",
                "q1_phases", "q2_phases", "q3_phases", "q4_phases"])
    labels = ["-".join(phases[q]) if phases else "" for q in (1, 2, 3, 4)]
    for v in result.spec.values:
        s = result.summary(v)
        stats = [_fmt(x) for pair in zip(s["mean"], s["std"]) for x in pair]
        w.writerow([v, *stats, _fmt(s["mean_rejections"]), _fmt(s["first_time_accept_rate"]), *labels])
    return buf.getvalue()


def write_outputs(out_dir: os.PathLike, files: dict[str, str]) -> list[Path]:
    """Write all files or none: stage in a temp dir, then rename into place."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".peersim-", dir=out))
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    try:
        for name, text in files.items():
            with open(stage / name, "w", newline="") as fh:
                fh.write(text)
        paths = []
        for name in files:
            os.replace(stage / name, out / name)
            paths.append(out / name)
        return paths
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def emit_run_csv(result: SimulationResult, out_dir: os.PathLike) -> list[Path]:
    return write_outputs(out_dir, {
        "issues.csv": issues_csv(result),
        "rejections.csv": rejections_csv(result),
        "manifest": manifest_text(result.config, result),
    })


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:  # start:stop:step, stop inclusive
            a, b, s = (float(x) for x in part.split(":"))
            seq = np.arange(a, b + s / 2, s)
            out.extend(int(x) if float(x).is_integer() else float(x) for x in seq)
        elif part:
            x = float(part)
            out.append(int(x) if x.is_integer() else x)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="peersim", description="Peer-review market simulator.")
    p.add_argument("--version", action="version", version=f"peersim {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one simulation")
    r.add_argument("--config", type=Path)
    r.add_argument("--seed", type=str)
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    r.add_argument("--out", type=Path, default=Path("."))

    s = sub.add_parser("sweep", help="sweep one parameter with replications")
    s.add_argument("--config", type=Path)
    s.add_argument("--param", default="n")
    s.add_argument("--values", required=True, help="comma list and/or start:stop:step ranges")
    s.add_argument("--reps", type=int, default=5)
    s.add_argument("--warmup", type=int, default=20)
    s.add_argument("--seed-base", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", type=Path, default=Path("."))

    c = sub.add_parser("calibrate", help="solve the quality distribution for a high-quality count")
    c.add_argument("--mean", type=float, required=True)
    c.add_argument("--high-count", type=int, required=True)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--theta1", type=float, required=True)
    return p


def _overrides(pairs: Iterable[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _cmd_run(args) -> int:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = parse_config(args.config, overrides)
    try:
        result = run_simulation(cfg)
    except Exception as exc:
        print(f"peersim: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    paths = emit_run_csv(result, args.out)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base = parse_config(args.config, _overrides(args.set))
    try:
        spec = SweepSpec(base=base, values=_values(args.values), swept_parameter=args.param,
                         replications=args.reps, warmup_issues=args.warmup, seed_base=args.seed_base)
        for v, r in spec.points():
            spec.config_for(v, r).validate()
    except (ValueError, ConfigError) as exc:
        raise InputError(str(exc)) from None
    try:
        result = run_sweep(spec, workers=args.workers)
    except Exception as exc:
        print(f"peersim: sweep failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in write_outputs(args.out, {"sweep.csv": sweep_csv(result),
                                         "sweep_summary.csv": sweep_summary_csv(result)}):
        print(path)
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    try:
        dist = calibrate_distribution(args.mean, args.high_count, args.n, args.theta1)
    except CalibrationError as exc:
        raise InputError(str(exc)) from None
    print(f"shape {dist.shape:.6f}")
    print(f"scale {dist.scale:.6f}")
    print(f"tail_mass {dist.achieved_tail_mass:.6f}")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "calibrate": _cmd_calibrate}[args.command]
    try:
        return handler(args)
    except InputError as exc:
        print(f"peersim: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"peersim: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

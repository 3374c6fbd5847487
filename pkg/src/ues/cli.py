"""Command line entry point: ``ues run | lmi | presets``."""

from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .costs import OracleError
from .dynamics import GrowthError
from .integrate import IntegrationError
from .output import write_report, write_summary
from .scenario import ConfigError, Scenario, load, preset_names, preset_text, scenario_from_dict

log = logging.getLogger("ues")

EXIT_OK, EXIT_GATES, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def default_out_root() -> Path:
    return Path(os.environ.get("UES_OUT", "runs"))


def _coerce(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_sweep(spec: str) -> tuple[str, list]:
    key, sep, values = spec.partition("=")
    if not sep or not key or not values:
        raise ConfigError("expected key=v1,v2,...", f"--sweep {spec}")
    if "." not in key:
        raise ConfigError("sweep keys are dotted paths such as es.omega", f"--sweep {spec}")
    return key, [_coerce(v.strip()) for v in values.split(",") if v.strip()]


def set_dotted(raw: dict, key: str, value) -> dict:
    out = copy.deepcopy(raw)
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError("not a table", key)
    node[parts[-1]] = value
    return out


def _apply_overrides(s: Scenario, args) -> Scenario:
    return s.with_overrides(t_end=args.t_end, omega=args.omega)


def _run_one(raw: dict, source: str, t_end, omega, out_dir: str) -> tuple[str, bool, list[str]]:
    """Worker body for sweeps: parse, run, write. Returns (dir, passed, report lines)."""
    from .runner import run_scenario

    s = scenario_from_dict(raw, source).with_overrides(t_end=t_end, omega=omega)
    outcome = run_scenario(s, Path(out_dir))
    return out_dir, outcome.passed, outcome.report_lines()


def cmd_run(args) -> int:
    from .runner import run_scenario

    s = load(args.config)
    out_root = Path(args.out) if args.out else default_out_root() / s.name
    if not args.sweep:
        s = _apply_overrides(s, args)
        outcome = run_scenario(s, out_root)
        print("\n".join(outcome.report_lines()))
        print(f"artifacts: {out_root}")
        return EXIT_OK if outcome.passed else EXIT_GATES

    key, values = parse_sweep(args.sweep)
    jobs = []
    for v in values:
        raw = set_dotted(s.source, key, v)
        scenario_from_dict(raw, s.name)  # fail fast on a bad value
        jobs.append((raw, s.name, args.t_end, args.omega, str(out_root / f"{key}={v}")))
    workers = max(1, min(len(jobs), args.jobs or os.cpu_count() or 1))
    all_passed = True
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for out_dir, passed, lines in pool.map(_run_one, *zip(*jobs)):
            print(f"== {out_dir}")
            print("\n".join(lines))
            all_passed &= passed
    return EXIT_OK if all_passed else EXIT_GATES


def cmd_lmi(args) -> int:
    from .runner import bounds_for, lmi_check, lmi_search

    s = load(args.config)
    if args.action == "check":
        rep = lmi_check(s)
        lines = [f"certificate check for {s.name}", rep.summary()]
        section = {"mode": "check", "report": rep.__dict__}
        found = rep.feasible
    else:
        res, b = lmi_search(s, args.budget)
        lines = [f"certificate search for {s.name} (m = {b.m:g}, M = {b.M:g}, {res.evaluated} candidates)"]
        if res.certificate is None:
            lines.append("no feasible certificate in the scalar family; best candidate:")
        else:
            c = res.certificate
            lines.append(
                f"found p11={c.p11:g} p22={c.p22:g} delta={c.delta:g} P2={c.P2[0, 0]:g} I P3={c.P3[0, 0]:g} I"
            )
        if res.report is not None:
            lines.append(res.report.summary())
        section = {
            "mode": "search",
            "evaluated": res.evaluated,
            "certificate": res.certificate.as_dict() if res.certificate else None,
            "report": res.report.__dict__ if res.report else None,
        }
        found = res.certificate is not None
    print("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_report(out / "lmi_report.txt", lines)
        write_summary(out / "summary.json", {"scenario": s.name, "lmi": section})
    return EXIT_OK if found else EXIT_GATES


def cmd_presets(args) -> int:
    if args.show:
        print(preset_text(args.show), end="")
        return EXIT_OK
    for name in preset_names():
        s = load(name)
        print(f"{name:8s} {s.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ues", description="Distributed extremum seeking simulations.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logs")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write artifacts")
    r.add_argument("config", help="TOML config path or preset name")
    r.add_argument("--out", help="output directory (default $UES_OUT/<name>, UES_OUT defaults to ./runs)")
    r.add_argument("--t-end", type=float, dest="t_end")
    r.add_argument("--omega", type=float)
    r.add_argument("--sweep", help="dotted key and values, e.g. es.omega=10,20,40")
    r.add_argument("--jobs", type=int, help="worker processes for --sweep")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("lmi", help="check or search a stability certificate")
    m.add_argument("action", choices=["check", "search"])
    m.add_argument("config", help="TOML config path or preset name")
    m.add_argument("--budget", type=int, help="candidates to scan in search mode")
    m.add_argument("--out", help="directory for lmi_report.txt and summary.json")
    m.set_defaults(func=cmd_lmi)

    ps = sub.add_parser("presets", help="list built-in scenarios")
    ps.add_argument("--show", metavar="NAME", help="print a preset's TOML")
    ps.set_defaults(func=cmd_presets)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, OracleError, GrowthError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

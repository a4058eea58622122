"""Command-line driver: load a config, run suites, persist reports.

One JSON config describes a whole experiment (measures, resolutions,
exponents, tolerances, Monte Carlo policy, scan knobs); flags override
single fields so the same file serves quick variations.  Outputs are a
full report.json, a flat summary.csv, and one CSV of (parameter, ratio)
rows per scan.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .exceptions import ConfigError, CovlabError
from .operators import parse_exponent
from .suites import SUITE_ORDER, SUITES, run_suites

_DEFAULT_POINTS = {1: 129, 2: 129, 3: 65}


@dataclass
class RunConfig:
    """Effective run settings after file values and flag overrides merge."""

    measures: list
    points_per_axis: dict
    tail_tol: float = 1e-10
    p_values: list = field(default_factory=lambda: [2.0, 3.0, 4.0, 8.0, math.inf])
    tol: float = 1e-3
    mc: dict = field(default_factory=dict)
    scans: dict = field(default_factory=dict)
    out_dir: str = "./out"

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path) as f:
                raw = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}")
        points = raw.get("points_per_axis", dict(_DEFAULT_POINTS))
        if isinstance(points, int):
            points = {n: points for n in (1, 2, 3)}
        else:
            points = {int(k): int(v) for k, v in points.items()}
        return cls(
            measures=raw.get("measures", []),
            points_per_axis=points,
            tail_tol=float(raw.get("tail_tol", 1e-10)),
            p_values=[parse_exponent(p) for p in
                      raw.get("p_values", [2, 3, 4, 8, "inf"])],
            tol=float(raw.get("tolerance", 1e-3)),
            mc=dict(raw.get("monte_carlo", {})),
            scans=dict(raw.get("scans", {})),
            out_dir=raw.get("out_dir", "./out"),
        )

    def apply_flags(self, args) -> "RunConfig":
        if args.p:
            self.p_values = [parse_exponent(tok) for tok in args.p.split(",")]
        if args.nodes:
            self.points_per_axis = {n: args.nodes for n in (1, 2, 3)}
        if args.seed is not None:
            self.mc["seed"] = args.seed
        if args.tol is not None:
            self.tol = args.tol
        if args.mc:
            self.mc["enabled"] = args.mc == "on"
        if args.out:
            self.out_dir = args.out
        return self

    def validate(self):
        if self.mc.get("enabled") and self.mc.get("seed") is None:
            raise ConfigError("seed required when Monte Carlo is enabled")

    @property
    def seed(self):
        return self.mc.get("seed")

    def points_for(self, n: int) -> int:
        try:
            return int(self.points_per_axis[n])
        except KeyError:
            raise ConfigError(f"no points_per_axis entry for dimension {n}")

    def mc_for_case(self, index: int):
        """Per-case Monte Carlo spec with a counter-derived child seed."""
        if not self.mc.get("enabled"):
            return None
        return {"enabled": True,
                "samples": int(self.mc.get("samples", 400_000)),
                "seed": [int(self.mc["seed"]), int(index)]}

    def effective_dict(self) -> dict:
        return {
            "measures": self.measures,
            "points_per_axis": {str(k): v for k, v in self.points_per_axis.items()},
            "tail_tol": self.tail_tol,
            "p_values": ["inf" if math.isinf(p) else p for p in self.p_values],
            "tolerance": self.tol,
            "monte_carlo": self.mc,
            "scans": self.scans,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.effective_dict(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covlab",
                     description="numerical checks for covariance inequalities "
                                 "over log-concave measures")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(SUITES) + ["all"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--p", default=None,
                       help="comma list of exponents, 'inf' allowed")
        p.add_argument("--nodes", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--mc", choices=("on", "off"), default=None)
    return parser


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def _scan_filenames(scans):
    """<tag>.csv when a tag is unique, <tag>-<label>.csv (or a counter) after."""
    by_tag = {}
    for s in scans:
        by_tag.setdefault(s.tag, []).append(s)
    names = {}
    for tag, group in by_tag.items():
        if len(group) == 1:
            names[id(group[0])] = f"{tag}.csv"
            continue
        seen = set()
        for k, s in enumerate(group):
            base = f"{tag}-{s.label}" if s.label else f"{tag}-{k}"
            if base in seen:
                base = f"{base}-{k}"
            seen.add(base)
            names[id(s)] = f"{base}.csv"
    return names


def write_report(reports, scans, out_dir, meta) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {}

    doc = {"meta": meta,
           "reports": [r.to_dict() for r in reports],
           "scans": [s.to_dict() for s in scans]}
    report_path = out / "report.json"
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    manifest["report"] = str(report_path)

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["name", "n", "p", "lhs", "rhs", "ratio", "verdict"])
        for r in reports:
            w.writerow([_csv_cell(v) for v in
                        (r.name, r.n, r.p, r.lhs, r.rhs, r.ratio, r.verdict)])
        for s in scans:
            name = f"scan/{s.tag}" + (f"/{s.label}" if s.label else "")
            w.writerow([_csv_cell(v) for v in
                        (name, None, None, None, None, s.best_ratio, "scan")])
    manifest["summary"] = str(summary_path)

    names = _scan_filenames(scans)
    for s in scans:
        path = out / names[id(s)]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["parameter", "ratio"])
            for param, ratio in s.rows():
                w.writerow([_csv_cell(param), _csv_cell(ratio)])
        manifest.setdefault("scans", []).append(str(path))
    return manifest


def _any_violated(reports) -> bool:
    for r in reports:
        if r.verdict == "violated" or _any_violated(r.subs):
            return True
    return False


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig.from_file(args.config).apply_flags(args)
        cfg.validate()
        names = SUITE_ORDER if args.command == "all" else [args.command]
        reports, scans = run_suites(names, cfg)
        meta = {
            "version": __version__,
            "command": args.command,
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "tolerance": cfg.tol,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        write_report(reports, scans, cfg.out_dir, meta)
        return 2 if _any_violated(reports) else 0
    except CovlabError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 1


def main() -> int:
    return run()

"""Command line entry point: ``tnl <command> [options]``.

Lengths and times are dyadic literals (``3/4``, ``15/2^4``, ``2^-9``).
Outputs go to ``$TNL_OUT`` (default ``out``) under
``<scenario>/<params-hash>/``.  Exit codes: 0 success, 2 bad configuration,
3 a built-in check failed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from tnl.dyadic import Window, format_dyadic, loads_cellfield, dumps_cellfield, parse_dyadic

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3

COMMANDS = ("exact", "simulate", "norms", "residual", "scenario", "dump")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# name -> (kind, default, required)
_SCHEMA = {
    "exact": {
        "branch": ("choice:prime,tilde,trunc1,trunc2", None, True),
        "i": ("int", None, False),
        "t": ("dyadic", None, True),
        "level": ("int", 4, False),
        "window": ("int", 1, False),
    },
    "simulate": {
        "variant": ("choice:1,2", None, True),
        "i": ("int", None, True),
        "j": ("int", None, True),
        "h": ("dyadic", None, True),
        "t_end": ("dyadic", Fraction(2), False),
        "window": ("int", 1, False),
        "cfl": ("dyadic", Fraction(1, 2), False),
        "remap": ("choice:step,checkpoint", "checkpoint", False),
    },
    "norms": {
        "i": ("intlist", [1, 2, 3, 4, 5], False),
        "s": ("dyadic", Fraction(1, 2), False),
        "sigma": ("dyadic", None, False),
        "budget": ("int", 10**6, False),
    },
    "residual": {
        "branch": ("choice:prime,tilde", None, True),
        "h": ("dyadiclist", [Fraction(1, 32), Fraction(1, 64), Fraction(1, 128)], False),
    },
    "scenario": {
        "name": ("choice:theorem2,lifted", None, True),
        "i": ("intlist", [1, 2, 3], False),
        "N": ("int", 1, False),
        "h": ("dyadic", Fraction(1, 256), False),
        "ladder": ("intlist", [4, 5, 6], False),
        "target": ("dyadic", None, False),
        "branch": ("choice:prime,tilde", "prime", False),
        "t": ("dyadiclist", [Fraction(5, 2)], False),
        "level": ("int", 4, False),
    },
    "dump": {
        "input": ("path", None, True),
        "pgm": ("path", None, False),
    },
}


@dataclass
class Config:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: Optional[str] = None

    def to_dict(self) -> dict:
        doc = {"command": self.command, "seed": self.seed}
        for k, v in self.params.items():
            doc[k] = _unparse(v)
        return doc


def _unparse(v):
    if isinstance(v, Fraction):
        return format_dyadic(v)
    if isinstance(v, list):
        return ",".join(str(_unparse(x)) for x in v)
    return v


def _convert(kind: str, raw, name: str):
    if raw is None:
        return None
    text = str(raw)
    if kind == "int":
        return int(text)
    if kind == "dyadic":
        return parse_dyadic(text)
    if kind == "intlist":
        return [int(x) for x in text.split(",") if x.strip()]
    if kind == "dyadiclist":
        return [parse_dyadic(x) for x in text.split(",") if x.strip()]
    if kind == "path":
        return text
    if kind.startswith("choice:"):
        options = kind[len("choice:"):].split(",")
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    raise AssertionError(kind)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tnl", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with default values for the command's options")
    p.add_argument("--seed", default=None)
    p.add_argument("--out", default=None, help="output root (overrides $TNL_OUT)")
    sub = p.add_subparsers(dest="command")
    for cmd, schema in _SCHEMA.items():
        sp = sub.add_parser(cmd)
        # global options are accepted after the command too
        sp.add_argument("--seed", default=argparse.SUPPRESS)
        sp.add_argument("--out", default=argparse.SUPPRESS)
        sp.add_argument("--config", default=argparse.SUPPRESS)
        for name in schema:
            if cmd == "scenario" and name == "name":
                sp.add_argument("name", nargs="?")
            elif cmd == "dump" and name == "input":
                sp.add_argument("input", nargs="?")
            else:
                sp.add_argument("--" + name.replace("_", "-"), dest=name, default=None)
    return p


def parse_config(argv: Sequence[str], config_file: Optional[str] = None) -> Config:
    """Validated configuration; file values are overridden by flags and all problems are reported together."""
    ns = _parser().parse_args(list(argv))
    problems = []
    if ns.command is None:
        raise ConfigError([f"missing command (one of {', '.join(COMMANDS)})"])
    schema = _SCHEMA[ns.command]
    file_vals = {}
    path = config_file or ns.config
    if path:
        try:
            file_vals = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            problems.append(f"config file {path}: {exc}")
    file_vals = dict(file_vals)
    file_vals.pop("command", None)
    seed_raw = ns.seed if ns.seed is not None else file_vals.pop("seed", 0)
    for k in sorted(set(file_vals) - set(schema)):
        problems.append(f"unknown key {k!r} for {ns.command}")
    params = {}
    for name, (kind, default, required) in schema.items():
        raw = getattr(ns, name, None)
        if raw is None:
            raw = file_vals.get(name)
        try:
            val = _convert(kind, raw, name)
        except (ValueError, TypeError) as exc:
            problems.append(f"--{name.replace('_', '-')}: {exc}")
            continue
        if val is None:
            if required:
                problems.append(f"missing required option --{name.replace('_', '-')}")
            val = default
        params[name] = val
    try:
        seed = int(seed_raw)
    except (TypeError, ValueError):
        problems.append(f"--seed: {seed_raw!r} is not an integer")
        seed = 0
    if ns.command in ("exact",) and params.get("branch", "").startswith("trunc") and params.get("i") is None:
        problems.append("truncated branches need --i")
    if problems:
        raise ConfigError(problems)
    return Config(ns.command, params, seed, ns.out)


def output_dir(cfg: Config, scenario: str) -> Path:
    from tnl.scenario import params_hash

    root = Path(cfg.out or os.environ.get("TNL_OUT", "out"))
    d = root / scenario / params_hash(cfg.to_dict())
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_outputs(manifest, out_dir: Path) -> dict:
    """Manifest JSON, diagnostics CSV and one GF01 + PGM pair per snapshot."""
    from tnl.dyadic import CellField
    from tnl.io import write_csv, write_gridfield, write_pgm

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    rows = manifest.diagnostics
    header = sorted({k for r in rows for k in r if not isinstance(r[k], (list, dict))})
    header = [h for h in _ordered(rows)] if rows else header
    paths["diagnostics"] = str(write_csv(out_dir / "diagnostics.csv", header,
                                         ([r.get(h, "") for h in header] for r in rows)))
    for name, snap in sorted(manifest.snapshots.items()):
        safe = name.replace("/", "_")
        if isinstance(snap, CellField):
            (out_dir / f"{safe}.cellfield").write_text(dumps_cellfield(snap))
            paths[safe] = str(out_dir / f"{safe}.cellfield")
        else:
            paths[safe] = str(write_gridfield(out_dir / f"{safe}.gf01", snap))
        paths[safe + "_pgm"] = str(write_pgm(out_dir / f"{safe}.pgm", snap))
    manifest.artifacts = paths
    (out_dir / "manifest.json").write_text(manifest.to_json())
    paths["manifest"] = str(out_dir / "manifest.json")
    return paths


def _ordered(rows):
    seen = []
    for r in rows:
        for k, v in r.items():
            if k not in seen and not isinstance(v, (list, dict)):
                seen.append(k)
    return seen


def _cmd_exact(cfg: Config) -> int:
    from tnl.exact import BranchSolution, branch_snapshot
    from tnl.scenario import RunManifest

    p = cfg.params
    branch = BranchSolution.parse(p["branch"], p["i"])
    win = Window.square(p["window"])
    snap = branch_snapshot(branch, p["t"], p["level"], win)
    man = RunManifest("exact", {k: v for k, v in p.items()})
    man.diagnostics.append({"t": p["t"], "mean": float(snap.values.mean()),
                            "min": float(snap.values.min()), "max": float(snap.values.max())})
    man.snapshots[f"{branch.label}_t{format_dyadic(p['t']).replace('/', '_')}"] = snap
    d = output_dir(cfg, "exact")
    paths = write_outputs(man, d)
    print(d)
    return EXIT_OK


def _cmd_simulate(cfg: Config) -> int:
    from tnl.advect import SolverConfig, l1_distance, solve
    from tnl.exact import BranchSolution, branch_snapshot
    from tnl.fields import FieldSpec, truncate_time
    from tnl.mollify import Grid, mollify_data, mollify_field
    from tnl.scenario import RunManifest, checkpoint_times

    p = cfg.params
    variant, i = int(p["variant"]), p["i"]
    win = Window.square(p["window"])
    grid = Grid(win, p["h"], periodic=True)
    spec = truncate_time(FieldSpec(), i, variant)
    mf = mollify_field(spec, p["j"], grid)
    data = mollify_data(p["j"], grid)
    cps = [c for c in checkpoint_times(spec) if c <= p["t_end"]]
    scfg = SolverConfig(grid.h, p["t_end"], cfl=p["cfl"], window=win, checkpoints=cps)
    traj = solve(mf, data, scfg, remap=p["remap"])
    branch = BranchSolution("trunc", variant, i)
    man = RunManifest("simulate", dict(p))
    for row, (t, snap) in zip(traj.diagnostics, traj.snapshots):
        exact = branch_snapshot(branch, t, 2 * i, win)
        man.diagnostics.append({**row, "l1_to_exact": l1_distance(snap, exact, win)})
        man.snapshots[f"rho_t{format_dyadic(t).replace('/', '_')}"] = snap
    d = output_dir(cfg, "simulate")
    write_outputs(man, d)
    print(d)
    return EXIT_OK


def _cmd_norms(cfg: Config) -> int:
    from tnl.analysis import norm_report
    from tnl.io import csv_text

    p = cfg.params
    sigma = float(p["sigma"]) if p["sigma"] is not None else None
    rep = norm_report(p["i"], float(p["s"]), p["budget"], cfg.seed, sigma)
    text = csv_text(["i", "L1", "TV", "Ws1_estimate", "stderr", "slope"], rep.csv_rows())
    d = output_dir(cfg, "norms")
    (d / "norms.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


CANONICAL_BUMPS = (
    ((0.3, 0.1, -0.2), (0.4, 0.35, 0.3)),
    ((0.9, 0.2, 0.15), (0.35, 0.3, 0.4)),
    ((1.2, -0.25, 0.05), (0.3, 0.4, 0.3)),
    ((1.05, 0.05, -0.1), (0.25, 0.3, 0.35)),
    ((1.5, -0.1, 0.3), (0.4, 0.35, 0.3)),
)


def _cmd_residual(cfg: Config) -> int:
    from tnl.analysis import TestFunction, weak_residual
    from tnl.exact import BranchSolution
    from tnl.io import csv_text

    p = cfg.params
    branch = BranchSolution(p["branch"])
    rows = []
    for k, (c, r) in enumerate(CANONICAL_BUMPS):
        phi = TestFunction(c, r)
        for h in p["h"]:
            rows.append((k, h, weak_residual(branch, phi, h)))
    text = csv_text(["phi_id", "h", "residual"], rows)
    d = output_dir(cfg, "residual")
    (d / "residual.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_scenario(cfg: Config) -> int:
    from tnl.scenario import run_lifted, run_theorem2

    p = cfg.params
    if p["name"] == "theorem2":
        target = float(p["target"]) if p["target"] is not None else None
        man = run_theorem2(p["i"], p["h"], p["ladder"], target, p["N"])
    else:
        man = run_lifted(p["t"], p["level"])
        man.snapshots = {k: v for k, v in man.snapshots.items() if k.endswith(p["branch"])}
        man.params["branch"] = p["branch"]
    d = output_dir(cfg, p["name"])
    write_outputs(man, d)
    print(d)
    for k, v in man.checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    return EXIT_OK if man.passed else EXIT_CHECK


def _cmd_dump(cfg: Config) -> int:
    from tnl.io import read_gridfield, write_pgm

    p = cfg.params
    path = Path(p["input"])
    blob = path.read_bytes()
    if blob[:4] == b"GF01":
        g = read_gridfield(path)
        print(f"gridfield n={g.grid.n} ncomp={g.ncomp} origin={g.origin} h={g.h}")
        print(f"min={g.values.min()!r} max={g.values.max()!r} integral={g.integral()!r}")
        obj = g
    else:
        obj = loads_cellfield(blob.decode())
        sys.stdout.write(dumps_cellfield(obj))
    if p["pgm"]:
        write_pgm(p["pgm"], obj)
    return EXIT_OK


_HANDLERS = {
    "exact": _cmd_exact,
    "simulate": _cmd_simulate,
    "norms": _cmd_norms,
    "residual": _cmd_residual,
    "scenario": _cmd_scenario,
    "dump": _cmd_dump,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return _HANDLERS[cfg.command](cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

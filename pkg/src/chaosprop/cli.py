"""Command line entry point ``chaosprop``.

Subcommands
-----------
``run --config FILE --out DIR``
    run any scenario kind named in the file.
``solve-parabolic``, ``solve-elliptic``, ``converge``
    same as ``run`` but the file's ``kind`` defaults to (and must match) the
    subcommand.
``list``
    print the scenario kinds.
``describe KIND``
    print the schema and defaults for one kind.

Exit status is 0 when every check passes, 1 when a check fails and 2 for a
configuration error (the message names the field).  Run-wide settings
resolve as command-line flag, then ``CHAOSPROP_*`` environment variable,
then the config's ``settings`` table, then the built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .scenarios import KINDS, ConfigError, Result, Settings, describe, load_config, run_scenario

log = logging.getLogger("chaosprop")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2

_SUBCOMMAND_KIND = {"solve-parabolic": "parabolic", "solve-elliptic": "elliptic", "converge": "converge"}
_ENV = {"threads": "CHAOSPROP_THREADS", "seed": "CHAOSPROP_SEED", "tolerance_scale": "CHAOSPROP_TOLERANCE_SCALE"}


# -- serialisation --------------------------------------------------------------


def format_float(x: float) -> str:
    """17 significant digits; non-finite values as JSON-safe strings."""
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with every float written as ``%.17g``."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):  # numpy scalar
        return dumps(obj.item(), indent, _level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(parts) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)) or hasattr(obj, "tolist"):
        seq = obj.tolist() if hasattr(obj, "tolist") else obj
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v).strip('"')
    return str(v)


def write_outputs(result: Result, out: Path) -> list[Path]:
    """Write ``summary.json``, every table as CSV and any extra JSON files."""
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "summary.json"
    p.write_text(dumps(result.summary) + "\n", encoding="utf-8", newline="\n")
    written.append(p)
    for name, table in result.tables.items():
        p = out / name
        with p.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table.header)
            for row in table.rows:
                w.writerow([_csv_cell(v) for v in row])
        written.append(p)
    for name, obj in result.extra_json.items():
        p = out / name
        p.write_text(dumps(obj) + "\n", encoding="utf-8", newline="\n")
        written.append(p)
    return written


# -- settings -------------------------------------------------------------------


def _coerce(name: str, value: Any, source: str) -> Any:
    try:
        if name == "threads":
            v = int(value)
            if v < 1:
                raise ValueError
            return v
        if name == "seed":
            v = int(value)
            if v < 0:
                raise ValueError
            return v
        v = float(value)
        if not (v > 0 and math.isfinite(v)):
            raise ValueError
        return v
    except (TypeError, ValueError):
        raise ConfigError(f"{source}{name}", f"invalid value {value!r}") from None


def resolve_settings(args: argparse.Namespace, config: dict[str, Any], env: dict[str, str] | None = None) -> Settings:
    """Flag, then environment, then config (``settings`` table or top level), then default."""
    env = os.environ if env is None else env
    cfg = config.get("settings", {})
    if not isinstance(cfg, dict):
        raise ConfigError("settings", "must be a table/object")
    cfg = {**{k: config[k] for k in _ENV if k in config}, **cfg}
    out = Settings()
    for name, var in _ENV.items():
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(out, name, _coerce(name, flag, "--"))
        elif env.get(var) not in (None, ""):
            setattr(out, name, _coerce(name, env[var], f"{var}:"))
        elif name in cfg:
            setattr(out, name, _coerce(name, cfg[name], "settings."))
    return out


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaosprop", description="Wiener chaos propagators for linear SPDEs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def runnable(p: argparse.ArgumentParser):
        p.add_argument("--config", required=True, help="scenario file (.json or .toml)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads for independent oracle evaluations")
        p.add_argument("--seed", type=int, default=None, help="random seed for Monte Carlo scenarios")
        p.add_argument("--tolerance-scale", dest="tolerance_scale", type=float, default=None,
                       help="multiply every check tolerance by this factor")

    runnable(sub.add_parser("run", help="run any scenario kind"))
    for name, kind in _SUBCOMMAND_KIND.items():
        runnable(sub.add_parser(name, help=f"run a {kind!r} scenario"))
    sub.add_parser("list", help="list scenario kinds")
    d = sub.add_parser("describe", help="print the schema and defaults of a kind")
    d.add_argument("kind")
    return parser


def _run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        expected = _SUBCOMMAND_KIND.get(args.command)
        if expected is not None:
            kind = config.setdefault("kind", expected)
            if kind != expected:
                raise ConfigError("kind", f"{args.command} expects kind {expected!r}, got {kind!r}")
        settings = resolve_settings(args, config)
        log.info("running %s with %s", config.get("kind"), settings)
        result = run_scenario(config, settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    files = write_outputs(result, Path(args.out))
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for p in files:
        log.info("wrote %s", p)
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "list":
        for name, kind in KINDS.items():
            print(f"{name:18s} {kind.description}")
        return EXIT_OK
    if args.command == "describe":
        try:
            print(describe(args.kind), end="")
        except KeyError as exc:
            print(f"config error: {exc.args[0]}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())

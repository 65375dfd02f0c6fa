"""
Command-line front end.

    crowdsize field    --config density.json --out DIR [--cache]
    crowdsize sweep    [--config density.json ...] --out DIR
    crowdsize validate --samples 1000000 --out DIR

Every flag can also be set through an environment variable named
``CROWDSIZE_<FLAG>`` (e.g. ``CROWDSIZE_SEED=7``, ``CROWDSIZE_BASELINE=0``);
explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .model import visibility_curve
from .sim import ExperimentSpec, field_for, run_sweep, summary_csv
from .spatial import CANONICAL, DATA_DIR, SpatialDensity, load_density
from .validate import run_all

log = logging.getLogger("crowdsize")

ENV_PREFIX = "CROWDSIZE_"


class ConfigError(Exception):
    pass


def parse_n_values(text: str) -> list[int]:
    """``"1..5"``, ``"1,4,9"`` or a mix such as ``"1..3,10"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"no crowd sizes in {text!r}")
    return out


def _env_default(name: str, default, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    if cast is bool:
        return raw.strip().lower() not in ("0", "false", "no", "off", "")
    return cast(raw)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=Path(_env_default("out", "crowdsize-out")))
    p.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    p.add_argument("--workers", type=int, default=_env_default("workers", 1, int))
    p.add_argument("-v", "--verbose", action="count", default=_env_default("verbose", 0, int))


def _model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sobol-m", type=int, default=_env_default("sobol-m", 14, int))
    p.add_argument("--n-max", type=int, default=_env_default("n-max", 30, int))
    p.add_argument("--cache", action="store_true", default=_env_default("cache", False, bool),
                   help="reuse blockage fields stored under OUT/cache")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdsize", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="tabulate p1/p2 on the Sobol cloud")
    p.add_argument("--config", type=Path, action="append", default=None)
    _common(p)
    _model_opts(p)

    p = sub.add_parser("sweep", help="simulate and estimate crowd sizes")
    p.add_argument("--config", type=Path, action="append", default=None,
                   help="density spec or suite file; repeatable (default: canonical suite)")
    p.add_argument("--realizations", type=int, default=_env_default("realizations", 10_000, int))
    p.add_argument("--n-values", type=parse_n_values, default=None)
    p.add_argument("--baseline", action=argparse.BooleanOptionalAction,
                   default=_env_default("baseline", True, bool))
    p.add_argument("--audit", action="store_true", default=_env_default("audit", False, bool),
                   help="check every hidden agent is explained by one blocker or one pair")
    _common(p)
    _model_opts(p)

    p = sub.add_parser("validate", help="run the randomised geometry property suites")
    p.add_argument("--samples", type=int, default=_env_default("samples", 1_000_000, int))
    p.add_argument("--inject-radial-bug", action="store_true",
                   help="draw blockers at any range (self-test: suites must fail)")
    _common(p)
    return parser


def _load_densities(paths: list[Path] | None) -> list[SpatialDensity]:
    if not paths:
        paths = [DATA_DIR / f"{name}.json" for name in CANONICAL]
    out = []
    for path in paths:
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                spec = json.load(fh)
            if isinstance(spec, dict) and "densities" in spec:
                out.extend(_load_densities([path.parent / p for p in spec["densities"]]))
            else:
                out.append(load_density(path))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    names = [d.name for d in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate density names: {names}")
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_field(args) -> int:
    cache = args.out / "cache" if args.cache else None
    args.out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for density in _load_densities(args.config):
        t0 = time.perf_counter()
        fld = field_for(density, args.sobol_m, args.workers, cache)
        fld.to_csv(args.out / f"{density.name}_field.csv")
        summary = fld.summary()
        summary["curve"] = visibility_curve(fld, args.n_max).to_dict()["p_visible"]
        summaries.append(summary)
        log.info("%s: field in %.1fs", density.name, time.perf_counter() - t0)
    _write(args.out / "field_summary.json", json.dumps({"schema_version": 1, "fields": summaries}, indent=1))
    return 0


def cmd_sweep(args) -> int:
    densities = _load_densities(args.config)
    cache = args.out / "cache" if args.cache else None
    n_values = args.n_values or list(range(1, args.n_max + 1))
    results = []
    mae_rows = []
    for density in densities:
        spec = ExperimentSpec(
            density,
            n_values=tuple(n_values),
            realizations=args.realizations,
            n_max=args.n_max,
            seed=args.seed,
            sobol_m=args.sobol_m,
            baseline=args.baseline,
            audit=args.audit,
        )
        res = run_sweep(spec, workers=args.workers, cache_dir=cache)
        results.append(res)
        d = args.out / density.name
        _write(d / "result.json", res.to_json())
        _write(d / "pmfs.csv", res.pmf_csv())
        _write(d / "estimates.csv", summary_csv([res]))
        mae_rows.append([density.name, repr(res.mae), "" if res.mae_baseline is None else repr(res.mae_baseline)])
        # partial results are flushed after every density
        _write(args.out / "summary.csv", summary_csv(results))
        log.info("%s: MAE %.3f baseline %s", density.name, res.mae, res.mae_baseline)
    _write(args.out / "mae.csv", _mae_table(results, mae_rows))
    print(_mae_table(results, mae_rows), end="")
    return 0


def _mae_table(results, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["density", "mae", "mae_baseline"])
    w.writerows(rows)
    errs = [row.abs_err for res in results for row in res.rows]
    base = [row.abs_err_baseline for res in results for row in res.rows]
    w.writerow(["ALL", repr(float(np.mean(errs))), "" if None in base else repr(float(np.mean(base)))])
    return buf.getvalue()


def cmd_validate(args) -> int:
    report = run_all(args.samples, seed=args.seed, radial="any" if args.inject_radial_bug else "nearer")
    doc = {
        "schema_version": 1,
        "samples": args.samples,
        "radial": "any" if args.inject_radial_bug else "nearer",
        "passed": all(s["passed"] for s in report.values()),
        "suites": report,
    }
    text = json.dumps(doc, indent=1)
    _write(args.out / "validate.json", text)
    print(text)
    return 0


COMMANDS = {"field": cmd_field, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"crowdsize: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

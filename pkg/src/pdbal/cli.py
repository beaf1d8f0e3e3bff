"""Command-line entry point: ``pdbal simulate | score | check``.

Exit codes: 0 success, 1 runtime or check failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .acquisition import AcquisitionConfig, score_pool
from .bench import CSV_HEADER, ScenarioConfig, build_distance, fit_posterior, run_many
from .diagnostics import FAULTS, run_check_suite
from .errors import ContractViolation, PDBALError
from .posterior import Dataset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("pdbal")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    """Unreadable or invalid configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Configuration documents
# ---------------------------------------------------------------------------


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            doc = tomllib.loads(text)
        else:
            doc = json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a table/object at top level")
    if "scenarios" not in doc and "scenario" in doc:
        doc["scenarios"] = doc.pop("scenario")
    if not isinstance(doc.get("scenarios"), list) or not doc["scenarios"]:
        raise ConfigError("config needs a nonempty 'scenarios' array")
    return doc


_TOP_KEYS = {"seed", "seeds", "n_seeds", "scenarios"}
_NESTED_FREE = {"family", "distance"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def apply_override(doc: dict, item: str) -> None:
    """Apply ``key=value`` to the document; scenario keys apply to every scenario."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    path = key.strip().split(".")
    value = _parse_value(raw)
    if path[0] in _TOP_KEYS and len(path) == 1:
        doc[path[0]] = value
        return
    fields = ScenarioConfig.__dataclass_fields__
    if path[0] not in fields:
        raise ConfigError(f"override key {key!r} does not name a configuration field")
    if len(path) > 2 or (len(path) == 2 and path[0] not in {"acquisition", "mcmc"} | _NESTED_FREE):
        raise ConfigError(f"override key {key!r} is too deeply nested")
    if len(path) == 2 and path[0] == "acquisition" and path[1] not in AcquisitionConfig.__dataclass_fields__:
        raise ConfigError(f"unknown acquisition key {path[1]!r}")
    for sc in doc["scenarios"]:
        if len(path) == 1:
            sc[path[0]] = value
        else:
            sub = sc.get(path[0], {})
            sub = {"kind": sub} if isinstance(sub, str) else dict(sub)
            sub[path[1]] = value
            sc[path[0]] = sub


def expand_runs(doc: dict, seed_override=None) -> list[ScenarioConfig]:
    """One :class:`ScenarioConfig` per (scenario, strategy, seed), in output order.

    ``acquisition.strategy`` may be a list; each entry becomes its own block
    of runs sharing the same seeds.  Seeds come from ``seeds`` or from
    ``seed + i`` for ``i < n_seeds``.
    """
    base = doc.get("seed", 0) if seed_override is None else seed_override
    if "seeds" in doc and seed_override is None:
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("'seeds' must be a list of integers")
    else:
        n = doc.get("n_seeds", 1)
        if not isinstance(n, int) or n < 1 or not isinstance(base, int):
            raise ConfigError("'n_seeds' must be a positive integer and 'seed' an integer")
        seeds = [base + i for i in range(n)]
    runs = []
    for i, raw in enumerate(doc["scenarios"]):
        if not isinstance(raw, dict):
            raise ConfigError(f"scenario {i} is not a table")
        raw = copy.deepcopy(raw)
        raw.setdefault("name", f"scenario{i}")
        raw.pop("seed", None)
        acq = raw.get("acquisition", {})
        strategies = acq.get("strategy", "PDBAL")
        strategies = strategies if isinstance(strategies, list) else [strategies]
        for strategy in strategies:
            sc = dict(raw, acquisition=dict(acq, strategy=strategy))
            try:
                cfg = ScenarioConfig.from_dict(sc)
            except (PDBALError, TypeError, ValueError) as exc:
                raise ConfigError(f"scenario {raw['name']!r}: {exc}") from exc
            runs.extend(replace(cfg, seed=int(s)) for s in seeds)
    return runs


def _cli_overrides(args) -> list[str]:
    out = list(args.override or [])
    if args.strategy is not None:
        out.append(f"acquisition.strategy={args.strategy}")
    if args.n_mc is not None:
        out.append(f"acquisition.n_mc={args.n_mc}")
    if args.eig_nodes is not None:
        out.append(f"acquisition.eig_nodes={args.eig_nodes}")
    return out


def _prepared_doc(args) -> dict:
    doc = load_document(args.config)
    for item in _cli_overrides(args):
        apply_override(doc, item)
    return doc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    doc = _prepared_doc(args)
    runs = expand_runs(doc, args.seed)
    if args.timing:
        runs = [replace(r, record_timing=True) for r in runs]
    log.info("simulate: %d run(s), %d job(s)", len(runs), args.jobs)
    out = Path(args.out)
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.flush()
        for cfg, records in zip(runs, run_many(runs, args.jobs)):
            for r in records:
                fh.write(r.csv_row() + "\n")
            fh.flush()
            log.info("done %s/%s seed %d", cfg.name, cfg.acquisition.strategy, cfg.seed)
    return EXIT_OK


def _read_matrix(path, what: str) -> np.ndarray:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror or exc}") from exc
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]  # header
    try:
        mat = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{what} {path} has a non-numeric entry: {exc}") from exc
    if mat.ndim != 2 or mat.shape[0] == 0 or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{what} {path} must be a nonempty rectangular numeric table")
    if not np.all(np.isfinite(mat)):
        raise ConfigError(f"{what} {path} has non-finite entries")
    return mat


def cmd_score(args) -> int:
    doc = _prepared_doc(args)
    cfgs = expand_runs(doc, args.seed)
    if args.scenario is not None:
        cfgs = [c for c in cfgs if c.name == args.scenario]
        if not cfgs:
            raise ConfigError(f"no scenario named {args.scenario!r}")
    cfg = cfgs[0]
    pool = _read_matrix(args.data, "pool file")
    if pool.shape[1] != cfg.d:
        raise ConfigError(f"pool rows have {pool.shape[1]} columns, scenario expects d={cfg.d}")
    data = Dataset.empty(cfg.d)
    if args.labels is not None:
        lab = _read_matrix(args.labels, "labels file")
        if lab.shape[1] != cfg.d + 1:
            raise ConfigError(f"labels rows need d+1={cfg.d + 1} columns (covariates then outcome)")
        data = Dataset(lab[:, :-1], lab[:, -1])
        try:
            data.validated(cfg.family)
        except PDBALError as exc:
            raise ConfigError(f"labels file: {exc}") from exc
    ens = fit_posterior(cfg, data, rngmod.substream(cfg.seed, rngmod.POSTERIOR, 0))
    keys = [rngmod.content_key(row) for row in pool]
    report = score_pool(ens, cfg.family, pool, build_distance(cfg), cfg.acquisition, cfg.seed, 0, keys)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("candidate,score,chosen\n")
        for i, s in enumerate(report.scores):
            fh.write(f"{i},{float(s)!r},{int(i == report.chosen_index)}\n")
    log.info("chosen candidate %d (%s)", report.chosen_index, report.strategy)
    return EXIT_OK


def cmd_check(args) -> int:
    reports = run_check_suite(args.seed if args.seed is not None else 0, args.n_classes, args.inject_fault)
    lines = [r.line() for r in reports]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pdbal", description="Targeted Bayesian active learning toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def acquisition_flags(sp):
        sp.add_argument("--config", required=True, help="JSON or TOML document with a 'scenarios' array")
        sp.add_argument("--out", required=True, help="output CSV path")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="set a config key, e.g. acquisition.strategy=Random (repeatable)")
        sp.add_argument("--strategy", choices=["PDBAL", "Random", "Variance", "EIG"])
        sp.add_argument("--n-mc", type=int, help="triples per pool for PDBAL")
        sp.add_argument("--eig-nodes", type=int, help="Gauss-Legendre nodes per panel for EIG")

    sim = sub.add_parser("simulate", help="run the active-learning benchmark and write trajectories")
    acquisition_flags(sim)
    sim.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")
    sim.add_argument("--timing", action="store_true", help="record wall_ms (otherwise written as NA)")
    sim.set_defaults(func=cmd_simulate)

    sc = sub.add_parser("score", help="score one pool of candidates and report the chosen index")
    acquisition_flags(sc)
    sc.add_argument("--data", required=True, help="CSV of candidate covariate rows")
    sc.add_argument("--labels", help="CSV of labelled rows: covariates then outcome")
    sc.add_argument("--scenario", help="scenario name to use (default: the first)")
    sc.set_defaults(func=cmd_score)

    ck = sub.add_parser("check", help="run the theory and kernel-oracle suites")
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--n-classes", type=int, default=200, help="random classes per theory suite")
    ck.add_argument("--inject-fault", choices=FAULTS, help="negative control: break one component on purpose")
    ck.add_argument("--out", help="also write the report to this file")
    ck.set_defaults(func=cmd_check)
    return p


def _configure_logging():
    level = os.environ.get("PDBAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        sys.stderr.write("pdbal: error: --jobs must be >= 1\n")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ContractViolation) as exc:
        sys.stderr.write(f"pdbal: error: {exc}\n")
        return EXIT_USAGE if isinstance(exc, ConfigError) or args.command == "check" else EXIT_FAIL
    except Exception as exc:  # any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        sys.stderr.write(f"pdbal: runtime failure: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL
    except KeyboardInterrupt:
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line front end: CRB reports, single estimations, benchmarks.

Every subcommand reads one self-describing JSON config, optionally patched
by key=value overrides, validates it fully, computes, and writes JSON (plus
CSV for tabular outputs). Exit codes: 0 success, 2 invalid config, 3
ill-conditioned Fisher matrix under --strict.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bench import (ScenarioConfig, format_table, generate_paths, monte_carlo,
                    rows_to_csv, rows_to_json)
from .channel import PathSet, synthesize
from .estimation import DirectionGrid, hemisphere_directions, matching_pursuit, reports_to_csv
from .fim import DEFAULT_COND_THRESHOLD, crb_report
from .geometry import ArrayGeometry
from .observation import (ObservationSetup, complex_from_json, noise_for_snr, observe,
                          orthogonal_pilots)

THREADS_ENV = "MIMO_LAB_THREADS"


class ConfigError(ValueError):
    """Configuration that fails validation; maps to exit code 2."""


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _apply_overrides(cfg: dict, overrides) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-object")
        try:
            node[parts[-1]] = json.loads(raw)
        except json.JSONDecodeError:
            node[parts[-1]] = raw


def _require(cfg: dict, key: str, context: str):
    if key not in cfg:
        raise ConfigError(f"{context} requires {key!r}")
    return cfg[key]


def _build_arrays(cfg: dict) -> tuple[ArrayGeometry, ArrayGeometry]:
    arrays = _require(cfg, "arrays", "config")
    try:
        g_t = ArrayGeometry.from_json(_require(arrays, "tx", "arrays"))
        g_r = ArrayGeometry.from_json(_require(arrays, "rx", "arrays"))
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"invalid array spec: {e}") from e
    return g_t, g_r


def _build_paths(cfg: dict, g_t: ArrayGeometry, g_r: ArrayGeometry) -> PathSet:
    spec = _require(cfg, "paths", "config")
    if isinstance(spec, list):
        try:
            return PathSet.from_json(spec)
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"invalid explicit paths: {e}") from e
    if isinstance(spec, dict):
        gen = dict(spec.get("generator", {}))
        seed = spec.get("seed", 0)
        try:
            scen = ScenarioConfig(n_t=g_t.n_antennas, n_r=g_r.n_antennas,
                                  tx_array=g_t.to_json(), rx_array=g_r.to_json(), **gen)
            return generate_paths(scen, int(seed))
        except (ValueError, TypeError) as e:
            raise ConfigError(f"invalid path generator: {e}") from e
    raise ConfigError("paths must be a list of paths or a generator object")


class _ParsedObservation:
    """Validated observation block with the noise level possibly deferred.

    Everything except a target-SNR noise level is checked up front (before
    any channel synthesis), keeping the fail-fast contract: resolve() only
    turns target_snr_db into sigma2 once the channel vector exists.
    """

    def __init__(self, X, W, sigma2, target_snr_db):
        self.X, self.W = X, W
        self.sigma2, self.target_snr_db = sigma2, target_snr_db
        try:
            ObservationSetup(X, W, sigma2 if sigma2 is not None else 1.0)
        except ValueError as e:
            raise ConfigError(f"invalid observation: {e}") from e

    def resolve(self, h) -> ObservationSetup:
        sigma2 = self.sigma2
        if sigma2 is None:
            alpha2 = float(np.sum(np.abs(self.X) ** 2)) / self.X.shape[1]
            sigma2 = noise_for_snr(10.0 ** (self.target_snr_db / 10.0), alpha2, h)
        return ObservationSetup(self.X, self.W, sigma2)


def _parse_observation(cfg: dict, g_t: ArrayGeometry, g_r: ArrayGeometry) -> _ParsedObservation:
    obs = _require(cfg, "observation", "config")
    n_t, n_r = g_t.n_antennas, g_r.n_antennas
    try:
        pilots = obs.get("pilots", "identity")
        if pilots == "identity":
            X = np.eye(n_t)
        elif pilots == "orthogonal":
            X = orthogonal_pilots(n_t, int(obs.get("n_s", n_t)),
                                  float(obs.get("alpha", 1.0)),
                                  obs.get("basis", "identity"))
        elif pilots == "explicit":
            X = complex_from_json(_require(obs, "X", "explicit pilots"))
        else:
            raise ConfigError(f"unknown pilots mode {pilots!r}")
        combiners = obs.get("combiners", "identity")
        if combiners == "identity":
            W = np.eye(n_r)
        elif combiners == "explicit":
            W = complex_from_json(_require(obs, "W", "explicit combiners"))
        else:
            raise ConfigError(f"unknown combiners mode {combiners!r}")
        if ("sigma2" in obs) == ("target_snr_db" in obs):
            raise ConfigError("observation needs exactly one of sigma2, target_snr_db")
        sigma2 = float(obs["sigma2"]) if "sigma2" in obs else None
        target = float(obs["target_snr_db"]) if "target_snr_db" in obs else None
        return _ParsedObservation(X, W, sigma2, target)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"invalid observation: {e}") from e


def _write_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def run_crb(cfg: dict, out: str | None, strict: bool) -> int:
    g_t, g_r = _build_arrays(cfg)
    paths = _build_paths(cfg, g_t, g_r)
    parsed = _parse_observation(cfg, g_t, g_r)
    h = synthesize(paths, g_r, g_t).vector
    setup = parsed.resolve(h)
    report = crb_report(paths, g_r, g_t, setup,
                        include_blocks=bool(cfg.get("include_blocks", False)),
                        cond_threshold=float(cfg.get("cond_threshold",
                                                     DEFAULT_COND_THRESHOLD)))
    _write_json(report, out)
    if strict and report["ill_conditioned"]:
        print("Fisher matrix is ill-conditioned at this parameter point",
              file=sys.stderr)
        return 3
    return 0


def _build_grid(cfg: dict) -> DirectionGrid:
    grid = cfg.get("grid", {})
    try:
        if {"m_az", "m_el", "n_az", "n_el"} <= set(grid):
            return DirectionGrid(
                hemisphere_directions(int(grid["m_az"]), int(grid["m_el"])),
                hemisphere_directions(int(grid["n_az"]), int(grid["n_el"])))
        return DirectionGrid.product(int(grid.get("m", 2500)), int(grid.get("n", 2500)))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid grid: {e}") from e


def run_estimate(cfg: dict, out: str | None) -> int:
    g_t, g_r = _build_arrays(cfg)
    paths = _build_paths(cfg, g_t, g_r)
    parsed = _parse_observation(cfg, g_t, g_r)
    strategy = cfg.get("strategy", "sequential")
    P_budget = int(cfg.get("P_budget", 10))
    seed = int(cfg.get("seed", 0))
    if strategy not in ("joint", "sequential"):
        raise ConfigError(f"unknown strategy {strategy!r}")
    grid = _build_grid(cfg)
    H = synthesize(paths, g_r, g_t)
    setup = parsed.resolve(H.vector)
    Y = observe(H, setup, np.random.default_rng([seed, 1])).Y
    try:
        report = matching_pursuit(Y, setup, grid, g_r, g_t, P_budget, strategy,
                                  true_channel=H)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    payload = report.to_json_row()
    payload["estimated_paths"] = [p.to_json() for p in report.estimated]
    if out is None:
        _write_json(payload, None)
    else:
        _write_json(payload, out + ".json")
        reports_to_csv([report], out + ".csv")
        print(f"wrote {out}.json and {out}.csv")
    return 0


def run_bench(cfg: dict, out: str | None, threads: int, emit_table: bool) -> int:
    try:
        scen = ScenarioConfig.from_json(cfg)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid scenario config: {e}") from e
    rows = monte_carlo(scen, threads=threads)
    if emit_table:
        print(format_table(rows), end="")
    if out is None:
        if not emit_table:
            _write_json(rows_to_json(scen, rows), None)
    else:
        _write_json(rows_to_json(scen, rows), out + ".json")
        rows_to_csv(rows, out + ".csv")
        print(f"wrote {out}.json and {out}.csv")
    return 0


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from e
    return 1


def _apply_seed(cfg: dict, command: str, seed: int | None) -> None:
    if seed is None:
        return
    if command == "bench":
        cfg["base_seed"] = seed
    elif command == "estimate":
        cfg["seed"] = seed
    else:
        if isinstance(cfg.get("paths"), dict):
            cfg["paths"]["seed"] = seed
        else:
            raise ConfigError("--seed only applies to generated paths")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimolab",
        description="Sparse MIMO channel estimation lab: CRB analysis, "
                    "single-shot estimation, Monte-Carlo benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("crb", "Fisher/CRB report for a configured scenario"),
                      ("estimate", "one Matching Pursuit estimation run"),
                      ("bench", "Monte-Carlo benchmark over seeded trials")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=None,
                       help="output path (crb: JSON file; estimate/bench: "
                            "basename for .json/.csv)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker cap for bench trials (default ${THREADS_ENV} or 1)")
        p.add_argument("--strict", action="store_true",
                       help="exit 3 when the Fisher matrix is ill-conditioned (crb)")
        p.add_argument("--emit-table", action="store_true",
                       help="print an aligned text table (bench)")
        p.add_argument("overrides", nargs="*", metavar="key=value",
                       help="dotted-path config overrides, values parsed as JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        _apply_overrides(cfg, args.overrides)
        _apply_seed(cfg, args.command, args.seed)
        if args.command == "crb":
            return run_crb(cfg, args.out, args.strict)
        if args.command == "estimate":
            return run_estimate(cfg, args.out)
        return run_bench(cfg, args.out, _resolve_threads(args.threads),
                         args.emit_table)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

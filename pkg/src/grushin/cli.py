"""Command-line front end.

Every subcommand reads one YAML configuration (see :mod:`grushin.config`),
writes its artifacts into the output directory and always leaves a
``summary.json`` there with ``subcommand``, ``config_hash``, ``artifacts`` and
``status``.  Exit status: 0 success, 1 solver did not converge, 2 bad
configuration or arguments.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ComparisonSpec, ConfigError, RunConfig, config_hash, parse_config, serialize
from .geometry import cc_distance_numeric, hormander_profile, iterated_bracket
from .grid import GridFunction, format_float
from .polynomial import Polynomial
from .solver import (ConvergenceError, DivergenceError, KSchedule, SolveReport, residual_field,
                     solve_infinity_relaxation, solve_infinity_via_limit)
from .verify import (check_comparison, check_harnack, iterated_schedule, jet_norm_gap, lipschitz_check,
                     penalization_iterated, penalization_trace_csv)

__all__ = ["main", "run", "dump_json", "THREADS_ENV"]

THREADS_ENV = "GRUSHIN_NUM_THREADS"
logger = logging.getLogger("grushin")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_CONFIG = 2


class _NotConverged(Exception):
    pass


# JSON with 17 significant digits


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format_float(x) if math.isfinite(x) else json.dumps(format_float(x))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [_encode(v, indent, level + 1) for v in obj]
        return "[" + ", ".join(items) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dump_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits, infinities as strings."""
    return _encode(obj, 2, 0) + "\n"


class _Artifacts:
    def __init__(self, out: Path, cfg: RunConfig | None):
        self.out = out
        self.names: list[str] = []
        self.formats = cfg.output.formats if cfg is not None else ("csv", "json")

    def write(self, name: str, text: str) -> None:
        kind = name.rsplit(".", 1)[-1]
        if kind in ("csv", "json") and kind not in self.formats:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)
        self.names.append(name)


def _int_list(text: str, what: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated integers, got {text!r}") from None


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated numbers, got {text!r}") from None


# subcommands


def _solve(cfg: RunConfig, shift: float = 0.0) -> SolveReport:
    problem = cfg.problem(shift)
    s = cfg.solver
    if s.mode == "limit":
        try:
            return solve_infinity_via_limit(problem, KSchedule(s.schedule), s.tol, s.max_iters, s.stage_tol)
        except ConvergenceError as exc:
            logger.error("%s", exc)
            return exc.report
    try:
        return solve_infinity_relaxation(problem, s.jensen())
    except DivergenceError as exc:
        logger.error("%s", exc)
        return exc.report


def _cmd_solve(cfg: RunConfig, args, art: _Artifacts) -> int:
    cfg.require("grid", "boundary")
    problem = cfg.problem()
    lip = lipschitz_check(problem.space, problem, samples=200, seed=0)
    logger.info("advisory Lipschitz constant of the boundary data: %.4g", lip)
    report = _solve(cfg)
    art.write("solution.csv", report.solution.to_csv(value_name="u"))
    jensen = cfg.solver.jensen() if cfg.solver.mode != "limit" else None
    art.write("residual.csv", residual_field(problem, report.solution, jensen).to_csv(value_name="residual"))
    data = report.to_dict()
    data["mode"] = cfg.solver.mode
    data["boundary_lipschitz_advisory"] = lip
    art.write("report.json", dump_json(data))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _cmd_distance(cfg: RunConfig, args, art: _Artifacts) -> int:
    cfg.require("grid")
    if args.source is None:
        raise ConfigError("--source is required")
    source = [i - 1 for i in _int_list(args.source, "--source")] if args.one_based else _int_list(args.source, "--source")
    grid = cfg.grid.build()
    if len(source) != grid.ndim:
        raise ConfigError(f"--source needs {grid.ndim} indices")
    try:
        grid._check_index(tuple(source))
    except IndexError as exc:
        raise ConfigError(str(exc)) from None
    dist = cc_distance_numeric(cfg.space.build(), grid, source, cfg.distance.build())
    art.write("distance.csv", dist.to_csv(value_name="distance"))
    return EXIT_OK


def _cmd_hormander(cfg: RunConfig, args, art: _Artifacts) -> int:
    if args.point is None:
        raise ConfigError("--point is required")
    point = _float_list(args.point, "--point")
    if len(point) != cfg.n:
        raise ConfigError(f"--point needs {cfg.n} coordinates")
    profile = hormander_profile(cfg.space.build(), np.array(point), cfg.hormander_depth_cap)
    text = dump_json(profile.to_dict())
    art.write("hormander.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_bracket(cfg: RunConfig, args, art: _Artifacts) -> int:
    if args.word is None or args.target is None:
        raise ConfigError("--word and --target are required")
    word = _int_list(args.word, "--word")
    n = cfg.n
    if any(not 1 <= j <= n for j in word + [args.target]):
        raise ConfigError(f"indices must lie in 1..{n}")
    field = iterated_bracket(cfg.space.build(), [j - 1 for j in word], args.target - 1)
    data = {"word": word, "target": args.target, "field": field.to_strings(), "zero": field.is_zero()}
    text = dump_json(data)
    art.write("bracket.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_verify_comparison(cfg: RunConfig, args, art: _Artifacts) -> int:
    cfg.require("grid", "boundary")
    spec = cfg.verify.comparison
    if spec is None:
        spec = ComparisonSpec()
    lower = _solve(cfg)
    upper = _solve(cfg, spec.shift)
    tol = spec.tol if spec.tol is not None else 10 * float(np.max(cfg.grid.build().spacing))
    report = check_comparison(lower.solution, upper.solution, tol)
    art.write("u.csv", lower.solution.to_csv(value_name="u"))
    art.write("v.csv", upper.solution.to_csv(value_name="v"))
    data = report.to_dict()
    data["shift"] = spec.shift
    data["converged"] = [lower.converged, upper.converged]
    art.write("comparison.json", dump_json(data))
    if not (lower.converged and upper.converged):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_verify_harnack(cfg: RunConfig, args, art: _Artifacts) -> int:
    cfg.require("grid", "boundary", "verify.harnack")
    spec = cfg.verify.harnack
    report = _solve(cfg)
    if np.any(report.solution.values <= 0):
        raise ConfigError("the solution is not strictly positive; shift the boundary data up")
    try:
        h = check_harnack(cfg.space.build(), report.solution, spec.center, spec.r, cfg.distance.build())
    except ValueError as exc:
        raise ConfigError(str(exc), "verify.harnack") from None
    art.write("solution.csv", report.solution.to_csv(value_name="u"))
    data = h.to_dict()
    data["converged"] = report.converged
    art.write("harnack.json", dump_json(data))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _cmd_verify_penalization(cfg: RunConfig, args, art: _Artifacts) -> int:
    cfg.require("grid", "verify.penalization")
    spec = cfg.verify.penalization
    grid = cfg.grid.build()
    space = cfg.space.build()
    u = GridFunction.from_function(grid, Polynomial.parse(spec.u, cfg.n))
    v = GridFunction.from_function(grid, Polynomial.parse(spec.v, cfg.n))
    schedule = list(spec.schedule) if spec.schedule is not None else iterated_schedule(cfg.n, spec.levels)
    try:
        runs = penalization_iterated(u, v, schedule, space)
    except ValueError as exc:
        raise ConfigError(str(exc), "verify.penalization") from None
    art.write("penalization.csv", penalization_trace_csv(runs))
    data = {
        "runs": [r.to_dict() for r in runs],
        "max_u_minus_v": float(np.max(u.values - v.values)),
        "final_gap": jet_norm_gap(runs[-1]),
        "max_lemma_ratio": max(max(r.lemma_ratio) for r in runs),
    }
    art.write("penalization.json", dump_json(data))
    return EXIT_OK


COMMANDS = {
    "solve": _cmd_solve,
    "distance": _cmd_distance,
    "hormander": _cmd_hormander,
    "bracket": _cmd_bracket,
    "verify-comparison": _cmd_verify_comparison,
    "verify-harnack": _cmd_verify_harnack,
    "verify-penalization": _cmd_verify_penalization,
}


def _apply_threads() -> None:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return
    try:
        count = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    if count < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    import numba

    numba.set_num_threads(min(count, numba.config.NUMBA_NUM_THREADS))


def _write_summary(out: Path, subcommand: str, digest: str | None, artifacts: list[str], status: str) -> None:
    summary = {"subcommand": subcommand, "config_hash": digest, "artifacts": sorted(artifacts), "status": status}
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(dump_json(summary))


def run(cfg: RunConfig, subcommand: str, args: argparse.Namespace | None = None, out: str | Path | None = None,
        config_text: str | None = None) -> int:
    """Run one subcommand; writes its artifacts plus ``summary.json`` and returns the exit status.

    ``config_text`` is the document ``cfg`` came from and only feeds the
    summary hash; without it the canonical serialization is hashed.
    """
    if subcommand not in COMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    defaults = dict(source=None, point=None, word=None, target=None, one_based=False)
    if args is not None:
        defaults.update({k: v for k, v in vars(args).items() if k in defaults})
    args = argparse.Namespace(**defaults)
    out_dir = Path(out) if out is not None else Path(cfg.output.directory)
    digest = config_hash(config_text if config_text is not None else serialize(cfg))
    art = _Artifacts(out_dir, cfg)
    status, code = "ok", EXIT_OK
    try:
        _apply_threads()
        code = COMMANDS[subcommand](cfg, args, art)
        if code == EXIT_NOT_CONVERGED:
            status = "not_converged"
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        status, code = "config_error", EXIT_CONFIG
    _write_summary(out_dir, subcommand, digest, art.names, status)
    return code


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grushin", description="Grushin-space infinity(x)-Laplacian toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", help="output directory (default: output.directory of the config)")
        if name == "distance":
            p.add_argument("--source", help="grid multi-index of the source node, e.g. 16,16")
            p.add_argument("--one-based", action="store_true", help="read --source as 1-based indices")
        if name == "hormander":
            p.add_argument("--point", help="base point, e.g. 0,0")
        if name == "bracket":
            p.add_argument("--word", help="1-based frame indices applied left to right, e.g. 1,2")
            p.add_argument("--target", type=int, help="1-based index of the innermost field")
    return parser


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for attr in ("source", "point", "word", "target"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    args.one_based = getattr(args, "one_based", False)
    text = None
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text)
    except (OSError, ConfigError) as exc:
        logger.error("configuration error: %s", exc)
        digest = config_hash(text) if text is not None else None
        _write_summary(Path(args.out or "."), args.subcommand, digest, [], "config_error")
        return EXIT_CONFIG
    return run(cfg, args.subcommand, args, args.out, text)


if __name__ == "__main__":
    sys.exit(main())

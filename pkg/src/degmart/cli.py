"""Command-line front end: config parsing, verifier dispatch and report files.

Every subcommand resolves an :class:`ExperimentConfig` (defaults, then an
optional JSON config file, then command-line flags), runs one verifier and
writes ``report.json`` and ``stats.csv`` into the output directory. Exit
status is 0 when every statistic passes, 1 on a failed statistic or a
runtime error, 2 on a configuration error. Errors are also written as JSON
to stderr and to ``error.json``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from .condexp import DEFAULT_LAGS, DEFAULT_RIDGE, FeatureBasis
from .exceptions import ConfigError, InvalidArgumentError, ModelError
from .models import ModelSpec, model_from_config
from .paths import TimeGrid
from .projection import DEFAULT_RANK_TOL
from .simulate import simulate
from .theorems.chaos import DEFAULT_BLOCKS, chaos_expand
from .theorems.conditional import verify_commutation, verify_wick_conditional
from .theorems.entropy import entropy_inequality_check, feedback_from_potential, monge_ampere_residual
from .theorems.functionals import (cameron_martin_from, drift_from, functional_from,
                                   state_drift_from)
from .theorems.innovation import (CONDITIONING, innovation_represent, simulate_batch,
                                  verify_innovation_martingale, verify_zeta)
from .theorems.report import (VerificationReport, dump_json, lower_check, run_with_escalation, value_check,
                              write_stats_csv, zero_check)
from .theorems.representation import represent_functional
from .theorems.structural import martingale_problem_check, projector_algebra_check, projector_path_check

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("simulate", "projector-check", "verify-wick", "verify-commutation", "represent", "chaos",
               "innovation", "zeta", "verify-innovation", "entropy", "monge-ampere", "suite")
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
N_ALGEBRA_MATRICES = 1000


def _default_basis() -> dict:
    return FeatureBasis().to_dict()


@dataclass
class ExperimentConfig:
    """One experiment; every field has an explicit default.

    ``h``, ``u`` and ``v`` are expression tuples (or numeric lists) over the
    driver dimension; ``F`` is a scalar path functional. ``None`` for ``h``,
    ``u`` or ``F`` resolves to a documented default once the model is known
    (``h = (1, .., 1)``, ``u = 0``, ``F = x1``); ``u = None`` for
    ``monge-ampere`` means the feedback ``-v(X^U)``.
    """

    verifier: str = "simulate"
    model: Any = "M2"
    n_steps: int = 64
    n_paths: int = 10_000
    seed: int = 0
    rank_tol: float = DEFAULT_RANK_TOL
    basis: dict = field(default_factory=_default_basis)
    ridge: float = DEFAULT_RIDGE
    holdout: bool = False
    exclude_rank_jumps: bool = False
    clip_u: Optional[float] = None
    h: Any = None
    u: Any = None
    v: Any = None
    F: Optional[str] = None
    max_order: int = 2
    n_blocks: int = DEFAULT_BLOCKS
    conditioning: str = "regression"
    clip_levels: Optional[List[Optional[float]]] = None
    expected: Optional[float] = None
    residual_bound: float = 0.2
    scale: float = 1.0
    criteria: List[int] = field(default_factory=lambda: list(range(1, 9)))
    n_jobs: int = 1
    write_paths: bool = False
    output_dir: str = "degmart_out"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object", location="$")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}", location=unknown[0])
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @staticmethod
    def parse_json(text: str) -> dict:
        """The raw key-value pairs of a JSON config (no defaults filled in)."""
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", location=f"{exc.lineno}:{exc.colno}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object", location="$")
        return data

    @staticmethod
    def read(path: str) -> dict:
        """:meth:`parse_json` on the contents of ``path``."""
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", location=path) from None
        return ExperimentConfig.parse_json(text)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(cls.parse_json(text))

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        return cls.from_dict(cls.read(path))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def validate(self) -> "ExperimentConfig":
        if self.verifier not in SUBCOMMANDS:
            raise ConfigError(f"unknown verifier {self.verifier!r}", location="verifier")
        for key in ("n_steps", "n_paths", "max_order", "n_blocks", "n_jobs"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(f"{key} must be a positive integer, got {val!r}", location=key)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}", location="seed")
        for key in ("rank_tol", "ridge", "residual_bound", "scale"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not val >= 0:
                raise ConfigError(f"{key} must be a non-negative number, got {val!r}", location=key)
        for key in ("holdout", "exclude_rank_jumps", "write_paths"):
            if not isinstance(getattr(self, key), bool):
                raise ConfigError(f"{key} must be true or false", location=key)
        if self.clip_u is not None and not (isinstance(self.clip_u, (int, float)) and self.clip_u > 0):
            raise ConfigError(f"clip_u must be a positive number or null, got {self.clip_u!r}", location="clip_u")
        if self.clip_levels is not None:
            if not isinstance(self.clip_levels, list) or not self.clip_levels:
                raise ConfigError("clip_levels must be a non-empty list", location="clip_levels")
            for i, lev in enumerate(self.clip_levels):
                if lev is not None and not (isinstance(lev, (int, float)) and lev > 0):
                    raise ConfigError(f"clip level {lev!r} must be positive or null", location=f"clip_levels[{i}]")
        if self.conditioning not in CONDITIONING:
            raise ConfigError(f"conditioning must be one of {CONDITIONING}", location="conditioning")
        if self.expected is not None and not isinstance(self.expected, (int, float)):
            raise ConfigError("expected must be a number or null", location="expected")
        if not isinstance(self.criteria, list) or not all(isinstance(c, int) and 1 <= c <= 8 for c in self.criteria):
            raise ConfigError("criteria must be a list of integers in 1..8", location="criteria")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir must be a non-empty path", location="output_dir")
        self.feature_basis()
        if self.exclude_rank_jumps and self.verifier != "represent":
            raise ConfigError("exclude_rank_jumps is only supported by represent", location="exclude_rank_jumps")
        return self

    def feature_basis(self) -> FeatureBasis:
        spec = self.basis
        if not isinstance(spec, dict) or set(spec) - {"kind", "degree", "lags"}:
            raise ConfigError("basis must be an object with kind, degree and lags", location="basis")
        basis = FeatureBasis(spec.get("kind", "polynomial"), spec.get("degree", 2),
                             tuple(spec.get("lags", DEFAULT_LAGS)))
        try:
            basis._validate()
        except (InvalidArgumentError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), location="basis") from None
        return basis


def parse_basis(text: str) -> dict:
    """``kind:degree[:lag,lag,...]`` to a basis dict."""
    parts = text.split(":")
    if not 2 <= len(parts) <= 3:
        raise ConfigError(f"--basis expects kind:degree[:lags], got {text!r}", location="basis")
    try:
        out = {"kind": parts[0], "degree": int(parts[1])}
        out["lags"] = [int(x) for x in parts[2].split(",")] if len(parts) == 3 else list(DEFAULT_LAGS)
    except ValueError:
        raise ConfigError(f"--basis degree and lags must be integers, got {text!r}", location="basis") from None
    return out


# --------------------------------------------------------------------------
# verifier dispatch


@dataclass
class Experiment:
    """A resolved config: model, grid and the verifier closure (path count in, report out)."""

    config: ExperimentConfig
    model: Optional[ModelSpec]
    grid: TimeGrid
    run: Callable[[int], VerificationReport]
    extra_files: Dict[str, Callable[[str], None]] = field(default_factory=dict)
    within_budget: Callable[[], bool] = lambda: True


def _vector_default(cfg: ExperimentConfig, key: str, model: ModelSpec, fill: float):
    val = getattr(cfg, key)
    if val is None:
        val = [fill] * model.d
        setattr(cfg, key, val)
    return val


def _residual_report(name, result, cfg: ExperimentConfig) -> VerificationReport:
    report = VerificationReport(name, seed=cfg.seed)
    frac = result.residual_l2 / result.target_std if result.target_std > 0 else 0.0
    report.add(value_check("residual_l2 / target std", float(frac), cfg.residual_bound))
    report.diagnostics = result.diagnostics()
    return report


def _write_paths(model: ModelSpec, grid: TimeGrid, seed: int):
    def write(out_dir):
        B, X = simulate(model, grid, 1, seed)
        dB = B.increments[0]
        with open(os.path.join(out_dir, "paths.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "t"] + [f"x_{i + 1}" for i in range(model.n)]
                            + [f"db_{j + 1}" for j in range(model.d)])
            for k in range(grid.n_steps + 1):
                db = [f"{v:.17g}" for v in dB[k]] if k < grid.n_steps else [""] * model.d
                writer.writerow([k, f"{grid.times[k]:.17g}"] + [f"{v:.17g}" for v in X.values[0, k]] + db)
    return write


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    """Resolve every expression and object of ``cfg``; raises ConfigError on bad input."""
    cfg.validate()
    grid = TimeGrid(cfg.n_steps)
    name = cfg.verifier
    if name == "suite":
        from .suite import run_suite

        state = {}

        def run_all(m):
            # runtimes go to timings.json so that report.json depends on the seed only
            state["result"] = result = run_suite(cfg.seed, cfg.scale, cfg.criteria)
            return result.combined_report()

        def timings(out_dir):
            dump_json(state["result"].timings(), os.path.join(out_dir, "timings.json"))

        def budget():
            return all(o.within_budget for o in state["result"].outcomes)

        return Experiment(cfg, None, grid, run_all, {"timings.json": timings}, budget)

    try:
        model = model_from_config(cfg.model)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc), location="model") from None
    basis = cfg.feature_basis()
    common = dict(seed=cfg.seed, n_jobs=cfg.n_jobs)
    batch_kw = dict(rank_tol=cfg.rank_tol, ridge=cfg.ridge, clip_u=cfg.clip_u, holdout=cfg.holdout,
                    conditioning=cfg.conditioning)
    extra = {}

    if name == "simulate":
        def run(m):
            return martingale_problem_check(model, grid, m, **common)
        if cfg.write_paths:
            extra["paths.csv"] = _write_paths(model, grid, cfg.seed)
    elif name == "projector-check":
        def run(m):
            rep = projector_algebra_check(N_ALGEBRA_MATRICES, seed=cfg.seed, rank_tol=cfg.rank_tol)
            return projector_path_check(model, grid, m, seed=cfg.seed, rank_tol=cfg.rank_tol, report=rep)
    elif name == "verify-wick":
        h = cameron_martin_from(_vector_default(cfg, "h", model, 1.0), grid, model.d)

        def run(m):
            return verify_wick_conditional(model, h, grid, m, rank_tol=cfg.rank_tol, **common)
    elif name == "verify-commutation":
        u = drift_from(_vector_default(cfg, "u", model, 0.0), model.n, model.d)

        def run(m):
            return verify_commutation(model, u, grid, m, basis, rank_tol=cfg.rank_tol, ridge=cfg.ridge,
                                      expected_energy=cfg.expected, holdout=cfg.holdout, **common)
    elif name in ("represent", "chaos", "innovation"):
        if cfg.F is None:
            cfg.F = "x1"
        F = functional_from(cfg.F, model.n, model.d)
        if name == "represent":
            def run(m):
                res = represent_functional(F, model, grid, m, basis, rank_tol=cfg.rank_tol,
                                           ridge=cfg.ridge, exclude_rank_jumps=cfg.exclude_rank_jumps, **common)
                return _residual_report(name, res, cfg)
        elif name == "chaos":
            def run(m):
                res = chaos_expand(F, model, grid, m, cfg.max_order, n_blocks=cfg.n_blocks,
                                   rank_tol=cfg.rank_tol, **common)
                report = VerificationReport(name, seed=cfg.seed, diagnostics=res.diagnostics())
                report.add(value_check("residual / target std", res.residual_fraction, cfg.residual_bound))
                return report
        else:
            u = drift_from(_vector_default(cfg, "u", model, 0.0), model.n, model.d)

            def run(m):
                res = innovation_represent(F, model, u, grid, m, basis, **common, **batch_kw)
                return _residual_report(name, res, cfg)
    elif name in ("zeta", "verify-innovation"):
        u = drift_from(_vector_default(cfg, "u", model, 0.0), model.n, model.d)
        verifier = verify_zeta if name == "zeta" else verify_innovation_martingale

        def run(m):
            return verifier(model, u, grid, m, basis, **common, **batch_kw)
    elif name == "entropy":
        u = drift_from(_vector_default(cfg, "u", model, 0.0), model.n, model.d)
        if cfg.clip_levels is None:
            cfg.clip_levels = [cfg.clip_u]
        levels = cfg.clip_levels
        kw = dict(rank_tol=cfg.rank_tol, ridge=cfg.ridge, holdout=cfg.holdout)

        def run(m):
            if u.state_feedback:
                # the direct density exists here, and the drift is its own conditional expectation
                report = entropy_inequality_check(model, u, grid, m, basis, clip_levels=levels,
                                                  conditioning="exact", **common, **kw)
            else:
                report = VerificationReport("entropy", seed=cfg.seed, diagnostics={"clip_levels": {}})
            # the headline estimate per clip level, with the configured conditioning
            for lev in levels:
                tag = "none" if lev is None else f"{lev:g}"
                batch = simulate_batch(model, u, grid, m, basis, cfg.seed, cfg.n_jobs, clip_u=lev,
                                       conditioning=cfg.conditioning, **kw)
                samples = batch.entropy_samples()
                if cfg.expected is not None:
                    report.add(zero_check(f"H_formula [clip={tag}]", samples, target=float(cfg.expected)))
                else:
                    report.add(lower_check(f"H_formula [clip={tag}]", samples))
            return report
    elif name == "monge-ampere":
        if cfg.v is None:
            raise ConfigError("monge-ampere needs a drift functional v", location="v")
        v = state_drift_from(cfg.v, model.n, model.d)
        u = feedback_from_potential(v) if cfg.u is None else drift_from(cfg.u, model.n, model.d)

        def run(m):
            return monge_ampere_residual(model, v, u, grid, m, basis, rank_tol=cfg.rank_tol,
                                         ridge=cfg.ridge, holdout=cfg.holdout, **common)
    else:  # pragma: no cover - validate() rejects unknown names
        raise ConfigError(f"unknown verifier {name!r}", location="verifier")
    return Experiment(cfg, model, grid, run, extra)


def run(subcommand: str, config: ExperimentConfig) -> int:
    """Run ``subcommand`` with ``config``; write reports; return the exit status."""
    out_dir = config.output_dir
    try:
        if config.verifier != subcommand:
            config = dataclasses.replace(config, verifier=subcommand)
        exp = build_experiment(config)
    except (ConfigError, ModelError) as exc:
        return _fail(out_dir, "config", exc, EXIT_CONFIG)
    try:
        if config.verifier == "suite":
            report = exp.run(config.n_paths)
        else:
            report = run_with_escalation(exp.run, config.n_paths)
        report.config = exp.config.to_dict()
        os.makedirs(out_dir, exist_ok=True)
        dump_json(report.to_dict(), os.path.join(out_dir, "report.json"))
        write_stats_csv([report], os.path.join(out_dir, "stats.csv"))
        for writer in exp.extra_files.values():
            writer(out_dir)
    except ConfigError as exc:
        return _fail(out_dir, "config", exc, EXIT_CONFIG)
    except Exception as exc:  # every runtime failure becomes an error JSON and exit 1
        logger.debug("%s", traceback.format_exc())
        return _fail(out_dir, "runtime", exc, EXIT_FAIL)
    print(report.summary())
    return EXIT_PASS if report.passed and exp.within_budget() else EXIT_FAIL


def _fail(out_dir: str, kind: str, exc: Exception, status: int) -> int:
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc),
               "location": getattr(exc, "location", None), "exit_status": status}
    if isinstance(getattr(exc, "step", None), int):
        payload["step"] = exc.step
    text = json.dumps(payload)
    print(text, file=sys.stderr)
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "error.json"), "w") as fh:
            fh.write(text + "\n")
    except OSError:
        pass
    return status


# --------------------------------------------------------------------------
# argument parsing


def _json_value(text: str):
    """Flag values that may be numbers or expression strings."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _optional_float(text: str):
    return None if text.lower() in ("none", "null") else float(text)


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--model", help="zoo model name (M1..M5, M5_path_dependent_sup)")
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rank-tol", dest="rank_tol", type=float)
    p.add_argument("--clip-u", dest="clip_u", type=float, help="zero the drift once its energy exceeds R")
    p.add_argument("--basis", type=parse_basis, help="regression basis kind:degree[:lag,lag,...]")
    p.add_argument("--ridge", type=float)
    p.add_argument("--holdout", action="store_true", help="report out-of-sample regression residuals")
    p.add_argument("--exclude-rank-jumps", dest="exclude_rank_jumps", action="store_true")
    p.add_argument("--h", type=_json_value, help='Cameron-Martin derivative, e.g. "(1, 0)"')
    p.add_argument("--u", type=_json_value, help='adapted drift, e.g. "(cos(B1), 0)"')
    p.add_argument("--v", type=_json_value, help='state drift functional, e.g. "(0.5*x1, 0)"')
    p.add_argument("--F", help='path functional, e.g. "x1**2" or "X1(0.5)*x1"')
    p.add_argument("--max-order", dest="max_order", type=int)
    p.add_argument("--n-blocks", dest="n_blocks", type=int)
    p.add_argument("--conditioning", choices=CONDITIONING)
    p.add_argument("--clip-levels", dest="clip_levels", type=_optional_float, nargs="+")
    p.add_argument("--expected", type=float, help="closed-form value of the headline statistic")
    p.add_argument("--residual-bound", dest="residual_bound", type=float)
    p.add_argument("--scale", type=float, help="suite path-count multiplier")
    p.add_argument("--criteria", type=int, nargs="+")
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.add_argument("--write-paths", dest="write_paths", action="store_true", help="simulate: write paths.csv")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degmart", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = _common_flags()
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then ``--config``, then explicit flags."""
    flags = dict(vars(args))
    subcommand = flags.pop("subcommand")
    flags.pop("verbose", None)
    path = flags.pop("config", None)
    base = ExperimentConfig.read(path) if path else {}
    if path and base.get("verifier", subcommand) != subcommand:
        raise ConfigError(f"config is for {base['verifier']!r}, not {subcommand!r}", location="verifier")
    base.update(flags)
    base["verifier"] = subcommand
    return ExperimentConfig.from_dict(base)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
                        format="%(message)s")
    out_dir = getattr(args, "output_dir", ExperimentConfig.output_dir)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        return _fail(out_dir, "config", exc, EXIT_CONFIG)
    return run(args.subcommand, cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Batch experiment runner.

    bdhomog <experiment> --config run.toml [--out DIR] [--threads N] [--seed S]

The config is validated against a strict schema before anything is computed.
Outputs are written by one writer after all solves finish: ``<experiment>.json``
(summary with the resolved config and the code version), ``<experiment>.csv``
and, where a curve makes sense, ``<experiment>.svg``.

Exit codes: 0 success, 1 usage or config error, 2 an invariant check failed.
"""
from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .report import dumps, svg_lines, write_csv

log = logging.getLogger("bdhomog")

EXPERIMENTS = ("verify-integrand", "cell-bulk", "cell-surf", "scaling-check", "gj-identity",
               "gamma", "stoch", "oracle1d")

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1, "maxItems": 3}
_mat = {"type": "array", "items": _vec, "minItems": 1, "maxItems": 3}
_sched = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_LAW = _obj({"kind": {"enum": ["bernoulli", "uniform", "point"]}, "p": _num, "a_soft": _num,
             "a_hard": _num, "a_min": _num, "a_max": _num, "value": _num}, ["kind"])

SCHEMA = _obj({
    "experiment": {"enum": list(EXPERIMENTS)},
    "seed": {"type": "integer", "minimum": 0},
    "integrand": _obj({"name": {"type": "string"}, "params": {"type": "object"}}, ["name"]),
    "datum": _obj({"A": _mat, "zeta": _vec, "nu": _vec, "x": _vec}),
    "r_schedule": _sched,
    "eps_schedule": _sched,
    "cells_per_unit": {"type": "integer", "minimum": 1},
    "plateau_tol": {"type": "number", "minimum": 0},
    "x_anchor": _vec,
    "solver": _obj({
        "gnc_schedule": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "max_sweeps": {"type": "integer", "minimum": 1},
        "tol_energy": {"type": "number", "exclusiveMinimum": 0},
        "multistart": {"type": "integer", "minimum": 1},
        "history": {"type": "integer", "minimum": 1},
        "polish_sweeps": {"type": "integer", "minimum": 0},
        "perturbation": {"type": "number", "minimum": 0},
        "smoothing_tail": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    }),
    "verify": _obj({"d": {"type": "integer", "minimum": 1, "maximum": 3},
                    "plan_seed": {"type": "integer", "minimum": 0}}),
    "scaling": _obj({"kind": {"enum": ["bulk", "surface"]}, "rho": {"type": "number", "exclusiveMinimum": 0},
                     "n_cells": {"type": "integer", "minimum": 1}}),
    "gj": _obj({"samples": {"type": "array", "minItems": 1,
                            "items": _obj({"zeta": _vec, "nu": _vec}, ["zeta", "nu"])},
                "t_grid": _sched, "tol": {"type": "number", "minimum": 0}}),
    "gamma": _obj({"center": _vec, "side": {"type": "number", "exclusiveMinimum": 0},
                   "limit_r_schedule": _sched, "tol": {"type": "number", "minimum": 0}}),
    "stoch": _obj({"mode": {"enum": ["ergodic", "process"]}, "law": _LAW,
                   "template": _obj({"name": {"type": "string"}, "params": {"type": "object"}},
                                    ["name"]),
                   "n_seeds": {"type": "integer", "minimum": 1},
                   "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                   "n_trials": {"type": "integer", "minimum": 1},
                   "h": {"type": "number", "exclusiveMinimum": 0}}),
    "oracle1d": _obj({"profile": {"enum": ["homogeneous", "laminate", "pure_jump", "kinked_jump"]},
                      "A": _num, "L": {"type": "number", "exclusiveMinimum": 0},
                      "h_schedule": _sched, "rel_tol": {"type": "number", "minimum": 0}}),
})


class ConfigError(Exception):
    pass


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def resolve_seed(cli_seed, cfg: dict) -> int:
    """--seed beats BDHOMOG_SEED, which beats the config value."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get("BDHOMOG_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"BDHOMOG_SEED must be an integer, got {env!r}") from exc
    return int(cfg.get("seed", 0))


# --- helpers ----------------------------------------------------------------------------

def _pair(spec: dict | None):
    from .integrands import make_library_integrand

    if spec is None:
        raise ConfigError("missing [integrand] table")
    try:
        return make_library_integrand(spec["name"], dict(spec.get("params", {})))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _opts(cfg: dict, seed: int):
    from .solver import SolveOptions

    kw = dict(cfg.get("solver", {}))
    for k in ("gnc_schedule", "smoothing_tail"):
        if k in kw:
            kw[k] = tuple(kw[k])
    try:
        return SolveOptions(seed=seed, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _need(cfg: dict, *path):
    node = cfg
    for key in path:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"missing config key {'.'.join(path)}")
        node = node[key]
    return node


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "to_json"):
        return _jsonable(obj.to_json())
    return obj


class Outcome:
    """What an experiment produced: summary, optional table and plot, and a pass flag."""

    def __init__(self, summary: dict, ok: bool = True, header=None, rows=None, svg: str | None = None):
        self.summary = summary
        self.ok = ok
        self.header = header
        self.rows = rows
        self.svg = svg


# --- experiments --------------------------------------------------------------------------

def run_verify_integrand(cfg, seed, threads) -> Outcome:
    from .integrands import check_integrand, default_sample_plan

    pair = _pair(cfg.get("integrand"))
    v = cfg.get("verify", {})
    rep = check_integrand(pair, default_sample_plan(v.get("d", 2), v.get("plan_seed", 0)))
    rows = [[k, bool(c["pass"]), int(c.get("n_violations", 0)), float(c.get("max_excess", 0.0))]
            for k, c in rep["conditions"].items()]
    return Outcome(rep, rep["all_pass"], ["condition", "pass", "n_violations", "max_excess"], rows)


def _record_outcome(rec, pair) -> Outcome:
    from .cell_formulas import record_bound_violations

    bad = record_bound_violations(rec, pair)
    summary = dict(rec.to_json(), bound_violations=bad)
    return Outcome(summary, not bad, ["r", "h", "normalized_value", "wall_time_ms"], rec.rows(),
                   rec.to_svg())


def run_cell_bulk(cfg, seed, threads) -> Outcome:
    from .cell_formulas import estimate_f_lim

    pair = _pair(cfg.get("integrand"))
    A = np.asarray(_need(cfg, "datum", "A"), dtype=float)
    rec = estimate_f_lim(pair, A, cfg.get("r_schedule", [4, 8, 16]), cfg.get("x_anchor"),
                         _opts(cfg, seed), cfg.get("cells_per_unit", 8),
                         cfg.get("plateau_tol", 0.01), threads)
    return _record_outcome(rec, pair)


def run_cell_surf(cfg, seed, threads) -> Outcome:
    from .cell_formulas import estimate_g_lim

    pair = _pair(cfg.get("integrand"))
    zeta = np.asarray(_need(cfg, "datum", "zeta"), dtype=float)
    nu = np.asarray(_need(cfg, "datum", "nu"), dtype=float)
    rec = estimate_g_lim(pair, zeta, nu / np.linalg.norm(nu), cfg.get("r_schedule", [4, 8, 16]),
                         cfg.get("x_anchor"), _opts(cfg, seed), cfg.get("cells_per_unit", 8),
                         cfg.get("plateau_tol", 0.01), threads)
    return _record_outcome(rec, pair)


def run_scaling_check(cfg, seed, threads) -> Outcome:
    from .cell_formulas import check_scaling_identity, check_surface_scaling

    pair = _pair(cfg.get("integrand"))
    sc = cfg.get("scaling", {})
    kind = sc.get("kind", "bulk")
    rho = sc.get("rho", 1.0)
    opts = _opts(cfg, seed)
    eps_list = cfg.get("eps_schedule", [0.5, 0.25])
    x = cfg.get("datum", {}).get("x")
    rows, reps = [], []
    if kind == "bulk":
        A = np.asarray(_need(cfg, "datum", "A"), dtype=float)
        tol = 1e-6 + 2 * opts.tol_energy
        for eps in eps_list:
            r = check_scaling_identity(pair, A, eps, x, rho, sc.get("n_cells"), opts)
            r["holds"] = bool(r["rel_gap"] <= tol)
            reps.append(r)
            rows.append([eps, r["lhs"], r["rhs"], r["rel_gap"], tol])
        header = ["eps", "lhs", "rhs", "rel_gap", "tolerance"]
        ok = all(r["holds"] for r in reps)
    else:
        zeta = np.asarray(_need(cfg, "datum", "zeta"), dtype=float)
        nu = np.asarray(_need(cfg, "datum", "nu"), dtype=float)
        nu = nu / np.linalg.norm(nu)
        for eps in eps_list:
            r = check_surface_scaling(pair, zeta, nu, eps, x, rho, sc.get("n_cells", 17), opts)
            reps.append(r)
            rows.append([eps, r["lhs"], r["rhs"], r["difference"], r["bound"]])
        header = ["eps", "lhs", "rhs", "difference", "bound"]
        ok = all(r["holds"] for r in reps)
    svg = svg_lines({kind: ([r[0] for r in rows], [r[3] for r in rows])}, "eps", header[3],
                    f"{kind} scaling identity")
    return Outcome({"kind": kind, "checks": reps, "all_hold": ok}, ok, header, rows, svg)


def run_gj_identity(cfg, seed, threads) -> Outcome:
    from .cell_formulas import check_gj_identity

    pair = _pair(cfg.get("integrand"))
    gj = cfg.get("gj", {})
    samples = gj.get("samples") or [{"zeta": [1.0, 0.0], "nu": [0.0, 1.0]}]
    samples = [(np.asarray(s["zeta"], float), np.asarray(s["nu"], float) / np.linalg.norm(s["nu"]))
               for s in samples]
    tol = gj.get("tol", 0.05)
    rep = check_gj_identity(pair, samples, cfg.get("r_schedule", [4, 8, 16]),
                            gj.get("t_grid", [1, 2, 4, 8]), _opts(cfg, seed),
                            cfg.get("cells_per_unit", 8), threads)
    rep["tol"] = tol
    rep["holds"] = bool(rep["max_rel_gap"] <= tol)
    rows = [[" ".join(map(str, s["zeta"])), " ".join(map(str, s["nu"])), s["g_lim"],
             s["f_inf_lim"], s["rel_gap"]] for s in rep["samples"]]
    return Outcome(rep, rep["holds"], ["zeta", "nu", "g_lim", "f_inf_lim", "rel_gap"], rows)


def run_gamma(cfg, seed, threads) -> Outcome:
    from .cell_formulas import gamma_minima_check
    from .lattice import BoundaryDatum

    pair = _pair(cfg.get("integrand"))
    g = cfg.get("gamma", {})
    dat = cfg.get("datum", {})
    if "A" in dat:
        datum = BoundaryDatum.affine(np.asarray(dat["A"], dtype=float))
    elif "zeta" in dat and "nu" in dat:
        nu = np.asarray(dat["nu"], dtype=float)
        datum = BoundaryDatum.jump(np.zeros(nu.size), np.asarray(dat["zeta"], float),
                                   nu / np.linalg.norm(nu))
    else:
        raise ConfigError("gamma needs datum.A or datum.zeta and datum.nu")
    tol = g.get("tol", 0.05)
    rep = gamma_minima_check(pair, cfg.get("eps_schedule", [0.5, 0.25, 0.125]),
                             (g.get("center"), g.get("side", 1.0)), datum, _opts(cfg, seed),
                             cfg.get("cells_per_unit", 8), g.get("limit_r_schedule"), threads)
    rep["tol"] = tol
    rep["holds"] = bool(rep["rel_gaps"][-1] <= tol)
    rows = [[e, m, rep["limit_minimum"], gap] for e, m, gap in
            zip(rep["eps"], rep["minima"], rep["rel_gaps"])]
    svg = svg_lines({"minima": (rep["eps"], rep["minima"]),
                     "limit": (rep["eps"], [rep["limit_minimum"]] * len(rep["eps"]))},
                    "eps", "minimum", "minima of F_eps")
    return Outcome(rep, rep["holds"], ["eps", "minimum", "limit_minimum", "rel_gap"], rows, svg)


def run_stoch(cfg, seed, threads) -> Outcome:
    from .integrands import make_library_integrand
    from .stochastic import Law, ergodic_average, process_trials

    st = cfg.get("stoch", {})
    try:
        law = Law.from_dict(st.get("law", {"kind": "bernoulli", "p": 0.5, "a_soft": 1.0,
                                           "a_hard": 2.0}))
        tspec = st.get("template", {"name": "homogeneous_norm"})
        template = make_library_integrand(tspec["name"], dict(tspec.get("params", {})))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    opts = _opts(cfg, seed)
    dat = cfg.get("datum", {"A": [[1.0, 0.0], [0.0, 0.0]]})
    if st.get("mode", "ergodic") == "process":
        A = np.asarray(dat.get("A", [[1.0, 0.0], [0.0, 0.0]]), dtype=float)
        rep = process_trials(law, template, A, st.get("n_trials", 20), seed, opts, st.get("h", 0.125))
        rows = [[t["seed"], t["n_parts"], t["slack"], t["covariance_gap"], t["mu"],
                 t["subadditive"] and t["covariant"] and t["bound_ok"]] for t in rep["trials"]]
        return Outcome(rep, rep["all_pass"],
                       ["seed", "n_parts", "slack", "covariance_gap", "mu", "pass"], rows)
    if "A" in dat:
        target = np.asarray(dat["A"], dtype=float)
    else:
        nu = np.asarray(_need(cfg, "datum", "nu"), dtype=float)
        target = (np.asarray(_need(cfg, "datum", "zeta"), dtype=float), nu / np.linalg.norm(nu))
    n_seeds = st.get("n_seeds", 16)
    seeds = st.get("seeds") or [seed + i for i in range(n_seeds)]
    try:
        rep = ergodic_average(law, target, cfg.get("r_schedule", [4, 8, 16]), len(seeds), template,
                              opts, seeds, cfg.get("cells_per_unit", 8), threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [list(r) for r in rep["rows"]]
    svg = svg_lines({"std": (rep["r_values"], rep["std"])}, "r", "cross-seed std",
                    "ergodic averaging")
    rep.pop("records")
    ok = rep["std_nonincreasing"] and rep["bounds_ok"]
    return Outcome(rep, ok, ["seed", "r", "normalized_value"], rows, svg)


def run_oracle1d(cfg, seed, threads) -> Outcome:
    from . import oracle1d as o1

    oc = cfg.get("oracle1d", {})
    prof = {"homogeneous": o1.homogeneous_profile, "laminate": o1.laminate_profile,
            "pure_jump": o1.pure_jump_profile,
            "kinked_jump": o1.kinked_jump_profile}[oc.get("profile", "laminate")]()
    try:
        rep = o1.validate_lattice_against_oracle(prof, oc.get("A", 1.0), oc.get("L", 1.0),
                                                 oc.get("h_schedule", [1 / 8, 1 / 16, 1 / 32]),
                                                 _opts(cfg, seed), oc.get("rel_tol", 0.02))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [[r["h"], r["lattice_value"], r["oracle_value"], r["rel_gap"]] for r in rep["rows"]]
    svg = svg_lines({"lattice": ([r[0] for r in rows], [r[1] for r in rows]),
                     "oracle": ([r[0] for r in rows], [r[2] for r in rows])}, "h", "cell value",
                    "1-D oracle")
    return Outcome(rep, rep["finest_ok"], ["h", "lattice_value", "oracle_value", "rel_gap"],
                   rows, svg)


RUNNERS = {
    "verify-integrand": run_verify_integrand, "cell-bulk": run_cell_bulk,
    "cell-surf": run_cell_surf, "scaling-check": run_scaling_check,
    "gj-identity": run_gj_identity, "gamma": run_gamma, "stoch": run_stoch,
    "oracle1d": run_oracle1d,
}


# --- entry point ------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with config errors; 2 means a failed check
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bdhomog", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"bdhomog {__version__}")
    sub = ap.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML experiment config")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker pool size (default: logical cores)")
        sp.add_argument("--seed", type=int, default=None, help="overrides BDHOMOG_SEED and the config")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(experiment: str, config_path, out=".", threads=None, seed=None) -> int:
    try:
        cfg = load_config(config_path)
        if cfg.get("experiment", experiment) != experiment:
            raise ConfigError(f"config is for {cfg['experiment']!r}, not {experiment!r}")
        seed_ = resolve_seed(seed, cfg)
        threads_ = threads or os.cpu_count() or 1
        if threads_ < 1:
            raise ConfigError("--threads must be >= 1")
        resolved = copy.deepcopy(cfg)
        resolved["experiment"] = experiment
        resolved["seed"] = seed_
        resolved["solver"] = _opts(cfg, seed_).as_dict()
        outcome = RUNNERS[experiment](cfg, seed_, threads_)
    except ConfigError as exc:
        print(f"bdhomog: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / experiment
    doc = {"version": __version__, "experiment": experiment, "config": resolved,
           "passed": outcome.ok, "result": _jsonable(outcome.summary)}
    (stem.with_suffix(".json")).write_text(dumps(doc))
    if outcome.header is not None:
        write_csv(stem.with_suffix(".csv"), outcome.header, outcome.rows)
    if outcome.svg is not None:
        stem.with_suffix(".svg").write_text(outcome.svg)
    if not outcome.ok:
        print(f"bdhomog: {experiment}: invariant check failed; see {stem}.json", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return run(args.experiment, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())

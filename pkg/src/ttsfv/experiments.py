"""Experiment configuration, presets and artifact writing.

A configuration is a flat JSON object.  ``problem`` selects a preset whose
defaults are filled in before the user's keys are applied; ``custom``
problems start from generic numerical defaults and must spell out the
physics themselves.

Outputs (all in ``output_dir``):

``expectation.csv``, ``variance.csv``
    one row per cell: ``x_center`` then one column per output variable
    (primitive variables for Euler).
``ranks.csv``
    largest TT rank per cell and conserved component.
``summary.json``
    run metadata; see :func:`run_experiment`.
``convergence.csv``
    convergence mode only.

Files are written to a temporary name and renamed, so a crashed run never
leaves a truncated CSV behind.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .cross import SEED, CrossConfig
from .errors import AdmissibilityError, ConfigurationError, ResourceError
from .fulltt import run_fulltt, spatial_row
from .grids import SpatialGrid, StochasticGrid, field_statistics
from .hybrid import BOUNDARIES, CFL_MODES, HybridField, RunDiagnostics, SolverConfig, _cross, run
from .models import (
    FluxModel,
    StochasticIC,
    get_model,
    ic_burgers,
    ic_shu_osher,
    ic_sod,
    primitive_to_conserved,
)
from .oracle import ShockOracleParams, exact_cell_statistics, l1_relative_error, observed_order
from .reference import dense_sfv_reference, mc_reference
from .tt import TruncationPolicy, round_tt

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "parse_config",
    "config_from_dict",
    "build_problem",
    "run_experiment",
    "run_convergence",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_ADMISSIBILITY",
    "EXIT_RESOURCE",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_ADMISSIBILITY, EXIT_RESOURCE = 0, 2, 3, 4

PROBLEMS = ("burgers_riemann", "burgers_scaling", "sod", "shu_osher", "custom")
FORMATS = ("hybrid", "full_tt", "both")

BURGERS_VL = [0.1, 0.0, -0.1]
BURGERS_VR = [0.1, -0.1, 0.0]


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    model: str
    domain: tuple
    nx: int
    nxi: int
    m: int
    t_final: float
    cfl_alpha: float
    ic: dict
    r_max: int | None = 5
    epsilon: float = 1e-3
    boundary: str = "outflow"
    cfl_mode: str = "fixed_initial"
    format: str = "hybrid"
    seed: int = SEED
    output_dir: str = "out"
    gamma: float = 1.4
    nx_list: tuple = (20, 40, 80)
    nxi_equals_nx: bool = True
    m_list: tuple = ()
    mc_samples: int = 0
    dense_reference: bool = False

    @property
    def grid(self) -> SpatialGrid:
        return SpatialGrid(self.domain[0], self.domain[1], self.nx)

    @property
    def sgrid(self) -> StochasticGrid:
        return StochasticGrid(self.m, self.nxi)

    @property
    def solver(self) -> SolverConfig:
        policy = TruncationPolicy(self.epsilon, self.r_max)
        cross = CrossConfig(epsilon=self.epsilon, rank_cap=self.r_max, seed=self.seed)
        return SolverConfig(policy=policy, cross=cross, cfl_alpha=self.cfl_alpha,
                            t_final=self.t_final, boundary=self.boundary, cfl_mode=self.cfl_mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"], d["nx_list"], d["m_list"] = list(self.domain), list(self.nx_list), list(self.m_list)
        return d


_GENERIC = {"r_max": 5, "epsilon": 1e-3, "boundary": "outflow", "format": "hybrid", "seed": SEED,
            "output_dir": "out", "gamma": 1.4, "nx_list": [20, 40, 80], "nxi_equals_nx": True,
            "m_list": [], "mc_samples": 0, "dense_reference": False}

PRESETS: dict[str, dict] = {
    "burgers_riemann": {
        "model": "burgers", "domain": [-1.0, 1.0], "nx": 20, "nxi": 20, "m": 3,
        "t_final": 0.35, "cfl_alpha": 0.45, "cfl_mode": "fixed_initial", "r_max": 5, "epsilon": 1e-3,
        "ic": {"type": "burgers_shock", "vL": BURGERS_VL, "vR": BURGERS_VR},
    },
    "burgers_scaling": {
        "model": "burgers", "domain": [-1.0, 1.0], "nx": 40, "nxi": 20, "m": 2,
        "t_final": 0.35, "cfl_alpha": 0.45, "cfl_mode": "fixed_initial", "r_max": 5, "epsilon": 0.01,
        "m_list": [2, 4, 6, 8], "ic": {"type": "burgers_scaling"},
    },
    "sod": {
        "model": "euler", "domain": [0.0, 1.0], "nx": 80, "nxi": 20, "m": 3,
        "t_final": 0.2, "cfl_alpha": 0.4, "cfl_mode": "per_step", "r_max": 5, "epsilon": 0.01,
        "ic": {"type": "sod"},
    },
    "shu_osher": {
        # the CFL number is not stated for this case; the Sod value is reused
        "model": "euler", "domain": [0.0, 1.0], "nx": 400, "nxi": 20, "m": 2,
        "t_final": 0.13, "cfl_alpha": 0.4, "cfl_mode": "per_step", "r_max": 5, "epsilon": 0.01,
        "ic": {"type": "shu_osher"},
    },
}

_REQUIRED_CUSTOM = ("model", "domain", "nx", "nxi", "m", "t_final", "cfl_alpha", "ic")
_KEYS = {f.name for f in fields(ExperimentConfig)}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _validate(d: dict) -> list[str]:
    bad = []

    def positive_int(key, minimum=1):
        if not _is_int(d[key]) or d[key] < minimum:
            bad.append(f"{key} must be an integer >= {minimum}, got {d[key]!r}")

    positive_int("nx", 3)
    positive_int("nxi")
    positive_int("m")
    if d["r_max"] is not None:
        positive_int("r_max")
    if not _is_int(d["seed"]) or d["seed"] < 0:
        bad.append(f"seed must be a nonnegative integer, got {d['seed']!r}")
    if not _is_int(d["mc_samples"]) or d["mc_samples"] < 0:
        bad.append(f"mc_samples must be a nonnegative integer, got {d['mc_samples']!r}")
    for key in ("epsilon", "t_final", "gamma"):
        if not _is_num(d[key]) or d[key] <= 0:
            bad.append(f"{key} must be a positive number, got {d[key]!r}")
    if not _is_num(d["cfl_alpha"]) or not 0 < d["cfl_alpha"] < 1:
        bad.append(f"cfl_alpha must lie in (0, 1), got {d['cfl_alpha']!r}")
    dom = d["domain"]
    if not (isinstance(dom, (list, tuple)) and len(dom) == 2 and all(map(_is_num, dom)) and dom[1] > dom[0]):
        bad.append(f"domain must be [a, b] with a < b, got {dom!r}")
    if d["model"] not in ("burgers", "euler"):
        bad.append(f"model must be 'burgers' or 'euler', got {d['model']!r}")
    if d["boundary"] not in BOUNDARIES:
        bad.append(f"boundary must be one of {list(BOUNDARIES)}, got {d['boundary']!r}")
    if d["cfl_mode"] not in CFL_MODES:
        bad.append(f"cfl_mode must be one of {list(CFL_MODES)}, got {d['cfl_mode']!r}")
    if d["format"] not in FORMATS:
        bad.append(f"format must be one of {list(FORMATS)}, got {d['format']!r}")
    if not isinstance(d["output_dir"], str) or not d["output_dir"]:
        bad.append("output_dir must be a nonempty string")
    for key, minimum in (("nx_list", 3), ("m_list", 1)):
        v = d[key]
        if not isinstance(v, (list, tuple)) or not all(_is_int(n) and n >= minimum for n in v):
            bad.append(f"{key} must be a list of integers >= {minimum}, got {v!r}")
    for key in ("nxi_equals_nx", "dense_reference"):
        if not isinstance(d[key], bool):
            bad.append(f"{key} must be true or false")
    if not isinstance(d["ic"], dict) or "type" not in d["ic"]:
        bad.append("ic must be an object with a 'type' key")
    else:
        bad.extend(_validate_ic(d))
    return bad


def _validate_ic(d: dict) -> list[str]:
    ic, m = d["ic"], d["m"]
    kind = ic["type"]
    if kind == "burgers_shock":
        bad = []
        for key in ("vL", "vR"):
            v = ic.get(key)
            if not (isinstance(v, list) and all(map(_is_num, v)) and len(v) == m):
                bad.append(f"ic.{key} must be a list of {m} numbers, got {v!r}")
        if d["model"] != "burgers":
            bad.append("ic type burgers_shock needs model burgers")
        return bad
    if kind == "riemann":
        p = 1 if d["model"] == "burgers" else 3
        bad = []
        if "x0" in ic and not _is_num(ic["x0"]):
            bad.append("ic.x0 must be a number")
        for key in ("left", "right"):
            v = np.asarray(ic.get(key, []), dtype=object)
            if v.shape != (p, m + 1) or not all(_is_num(x) for x in v.ravel()):
                bad.append(f"ic.{key} must be a {p} x {m + 1} table of [constant, xi_1 .. xi_m] rows")
        return bad
    if kind in ("burgers_scaling", "sod", "shu_osher"):
        want = {"burgers_scaling": ("burgers", None), "sod": ("euler", 3), "shu_osher": ("euler", 2)}[kind]
        bad = []
        if d["model"] != want[0]:
            bad.append(f"ic type {kind} needs model {want[0]}")
        if want[1] is not None and m != want[1]:
            bad.append(f"ic type {kind} has m = {want[1]}, got m = {m}")
        return bad
    return [f"unknown ic type {kind!r}"]


def config_from_dict(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Fill preset defaults, apply ``raw`` then ``overrides`` and validate."""
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a JSON object")
    raw = {**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    bad = [f"unknown key {k!r}" for k in raw if k not in _KEYS]
    problem = raw.get("problem")
    if problem not in PROBLEMS:
        bad.append(f"problem must be one of {list(PROBLEMS)}, got {problem!r}")
        raise ConfigurationError(bad)
    d = {**_GENERIC, **PRESETS.get(problem, {}), **raw}
    if problem == "custom":
        bad.extend(f"missing required key {k!r}" for k in _REQUIRED_CUSTOM if k not in raw)
        d.setdefault("cfl_mode", "fixed_initial" if d.get("model") == "burgers" else "per_step")
    if bad:
        raise ConfigurationError(bad)
    bad = _validate(d)
    if bad:
        raise ConfigurationError(bad)
    d["domain"] = tuple(float(v) for v in d["domain"])
    d["nx_list"], d["m_list"] = tuple(d["nx_list"]), tuple(d["m_list"])
    return ExperimentConfig(**d)


def parse_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"configuration file {str(path)!r} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from None
    return config_from_dict(raw, overrides)


# {{{ problem assembly

def _riemann_ic(m, left, right, x0, to_conserved, name):
    left, right = np.asarray(left, float), np.asarray(right, float)

    def evaluator(x, xi):
        coef = left if x < x0 else right
        return coef[:, :1] + coef[:, 1:] @ xi.T

    return StochasticIC(m, evaluator, to_conserved, name)


def build_problem(cfg: ExperimentConfig) -> tuple[FluxModel, StochasticIC]:
    model = get_model(cfg.model) if cfg.model == "burgers" else get_model("euler", gamma=cfg.gamma)
    ic, kind = cfg.ic, cfg.ic["type"]
    if kind == "burgers_shock":
        return model, ic_burgers(ic["vL"], ic["vR"], ic.get("x0", 0.0))
    if kind == "burgers_scaling":
        return model, ic_burgers([-0.1] * cfg.m, [0.1] * cfg.m)
    if kind == "sod":
        return model, ic_sod(cfg.gamma)
    if kind == "shu_osher":
        return model, ic_shu_osher(cfg.gamma)
    x0 = ic.get("x0", 0.5 * (cfg.domain[0] + cfg.domain[1]))
    conv = (lambda W: W) if cfg.model == "burgers" else (lambda W: primitive_to_conserved(W, cfg.gamma))
    return model, _riemann_ic(cfg.m, ic["left"], ic["right"], x0, conv, "riemann")


def shock_params(cfg: ExperimentConfig) -> ShockOracleParams | None:
    kind = cfg.ic["type"]
    if kind == "burgers_shock" and cfg.ic.get("x0", 0.0) == 0.0 and cfg.boundary == "outflow":
        return ShockOracleParams(cfg.ic["vL"], cfg.ic["vR"])
    if kind == "burgers_scaling" and cfg.boundary == "outflow":
        return ShockOracleParams([-0.1] * cfg.m, [0.1] * cfg.m)
    return None


# }}}


# {{{ statistics

def _cells(F) -> list[list]:
    """``[k][i]`` nested list of per-cell TTs for either storage format."""
    if isinstance(F, HybridField):
        return [list(row) for row in F.cells]
    return [[spatial_row(A, i) for i in range(F.grid.nx)] for A in F.comps]


def output_statistics(F, model: FluxModel, cfg: SolverConfig, diag: RunDiagnostics | None = None):
    """Per-cell expectation and variance of the output variables.

    Euler statistics are taken of the primitive variables, each obtained
    cell by cell with one cross approximation.
    """
    cells = _cells(F)
    if model.primitive_names != model.component_names:
        prim = [[None] * len(cells[0]) for _ in range(model.n_components)]
        for i in range(len(cells[0])):
            col = [cells[k][i] for k in range(model.n_components)]
            for k in range(model.n_components):
                f = lambda *v, k=k: model.primitive(np.stack(v))[k]
                prim[k][i] = round_tt(_cross(f, col, cfg, diag), cfg.policy)
        cells = prim
    return field_statistics(cells, F.sgrid, cfg.policy)


def cell_ranks(F, cfg: SolverConfig) -> np.ndarray:
    """``(p, nx)`` largest rank per cell; full-TT rows are rounded first."""
    if isinstance(F, HybridField):
        return F.max_ranks()
    return np.array([[round_tt(spatial_row(A, i), cfg.policy).max_rank for i in range(F.grid.nx)]
                     for A in F.comps])


# }}}


# {{{ writing

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _atomic_write(Path(path), buf.getvalue())


def write_cell_csv(path: Path, grid: SpatialGrid, names, values: np.ndarray):
    write_csv(path, ["x_center", *names], zip(grid.centers, *values))


def write_json(path: Path, obj):
    _atomic_write(Path(path), json.dumps(obj, indent=2, sort_keys=True) + "\n")


# }}}


def _diag_summary(F, diag: RunDiagnostics, ranks: np.ndarray) -> dict:
    return {
        "coefficient_count": int(F.coefficient_count()),
        "steps": diag.steps,
        "final_time": diag.t,
        "cross_calls": diag.cross_calls,
        "cross_nonconverged": diag.cross_nonconverged,
        "max_rank": int(ranks.max()),
        "wall_time": diag.wall_time,
    }


def _solve(fmt: str, model, ic, cfg: ExperimentConfig):
    solver = cfg.solver
    runner = run if fmt == "hybrid" else run_fulltt
    F, diag = runner(model, ic, cfg.grid, cfg.sgrid, solver)
    mean, var = output_statistics(F, model, solver, diag)
    return F, diag, mean, var, cell_ranks(F, solver)


def _relative_l1(a: np.ndarray, b: np.ndarray) -> list[float]:
    return [float(np.abs(x - y).sum() / max(np.abs(y).sum(), np.finfo(float).tiny)) for x, y in zip(a, b)]


def _failure(e: Exception) -> tuple[int, dict]:
    if isinstance(e, AdmissibilityError):
        return EXIT_ADMISSIBILITY, {"status": "admissibility_failure", "error": str(e),
                                    "index": e.index, "location": e.location}
    if isinstance(e, ResourceError):
        return EXIT_RESOURCE, {"status": "resource_guard", "error": str(e)}
    if isinstance(e, ConfigurationError):
        return EXIT_CONFIG, {"status": "configuration_error", "error": str(e)}
    raise e


def run_experiment(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Run one configuration and write its artifacts; returns ``(exit_code, summary)``.

    ``summary.json`` holds the configuration, a ``status`` field, and per
    storage format the final coefficient count, step count, cross
    statistics, largest rank and wall time.  With ``format=both`` it also
    holds the relative L1 discrepancy of the two expectation sets, with
    ``mc_samples > 0`` the distance to a Monte Carlo reference, and with
    ``dense_reference`` the largest entrywise deviation from the
    uncompressed scheme.
    """
    if cfg.problem == "burgers_scaling" and cfg.m_list:
        return run_scaling(cfg)
    out = Path(cfg.output_dir)
    summary = {"config": cfg.to_dict(), "status": "ok", "full_tensor_count":
               cfg.nx * cfg.nxi ** cfg.m * (1 if cfg.model == "burgers" else 3)}
    code = EXIT_OK
    try:
        model, ic = build_problem(cfg)
        names = model.primitive_names
        formats = ["hybrid", "full_tt"] if cfg.format == "both" else [cfg.format]
        # first, so that the memory guard fails before any solver work
        dense = dense_sfv_reference(model, ic, cfg.grid, cfg.sgrid, cfg.solver) if cfg.dense_reference else None
        means = {}
        for fmt in formats:
            F, diag, mean, var, ranks = _solve(fmt, model, ic, cfg)
            sub = out if len(formats) == 1 else out / fmt
            write_cell_csv(sub / "expectation.csv", cfg.grid, names, mean)
            write_cell_csv(sub / "variance.csv", cfg.grid, names, var)
            write_cell_csv(sub / "ranks.csv", cfg.grid, model.component_names, ranks)
            summary[fmt] = _diag_summary(F, diag, ranks)
            if dense is not None:
                summary[fmt]["dense_max_abs_diff"] = float(np.abs(F.to_dense() - dense).max())
            means[fmt] = mean
        if len(formats) == 2:
            summary["format_discrepancy_l1"] = dict(zip(names, _relative_l1(means["full_tt"], means["hybrid"])))
        if cfg.mc_samples:
            mc = mc_reference(model, ic, cfg.mc_samples, cfg.seed, cfg.grid, cfg.solver, primitive=True)
            write_cell_csv(out / "mc_expectation.csv", cfg.grid, names, mc.mean)
            write_cell_csv(out / "mc_variance.csv", cfg.grid, names, mc.var)
            summary["mc"] = {"samples_used": mc.n_used, "samples_failed": mc.n_failed,
                             "expectation_l1": {fmt: dict(zip(names, _relative_l1(means[fmt], mc.mean)))
                                                for fmt in formats}}
    except (AdmissibilityError, ResourceError, ConfigurationError) as e:
        code, info = _failure(e)
        summary.update(info)
        log.error("%s", e)
    write_json(out / "summary.json", summary)
    return code, summary


def run_scaling(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Coefficient counts for each ``m`` in ``m_list``; one subdirectory per ``m``."""
    out = Path(cfg.output_dir)
    rows, per_m, code = [], {}, EXIT_OK
    for m in cfg.m_list:
        sub_cfg = replace(cfg, m=m, m_list=(), output_dir=str(out / f"m{m}"))
        code, s = run_experiment(sub_cfg)
        per_m[m] = s
        if code != EXIT_OK:
            break
        fmts = ["hybrid", "full_tt"] if cfg.format == "both" else [cfg.format]
        rows.append([m, *(s[f]["coefficient_count"] for f in fmts), s["full_tensor_count"]])
    fmts = ["hybrid", "full_tt"] if cfg.format == "both" else [cfg.format]
    write_csv(out / "scaling.csv", ["m", *(f"coefficients_{f}" for f in fmts), "coefficients_full_tensor"], rows)
    summary = {"config": cfg.to_dict(), "status": "ok" if code == EXIT_OK else per_m[m]["status"],
               "scaling": {str(m): {f: per_m[m].get(f) for f in fmts} for m in per_m}}
    write_json(out / "summary.json", summary)
    return code, summary


def run_convergence(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Errors against the exact shock statistics over ``nx_list``.

    Writes ``convergence.csv`` with columns ``format, nx, nxi, l1_error_E,
    l1_error_var, order_E, order_var`` (orders between consecutive rows;
    the first row has ``nan``) and the least-squares orders in the summary.
    """
    params = shock_params(cfg)
    if params is None:
        raise ConfigurationError("convergence mode needs a Burgers shock problem with outflow boundaries")
    out = Path(cfg.output_dir)
    fmts = ["hybrid", "full_tt"] if cfg.format == "both" else [cfg.format]
    rows, summary, code = [], {"config": cfg.to_dict(), "status": "ok"}, EXIT_OK
    model, ic = build_problem(cfg)
    try:
        for fmt in fmts:
            dx, errE, errV, runs = [], [], [], []
            for nx in cfg.nx_list:
                c = replace(cfg, nx=nx, nxi=nx if cfg.nxi_equals_nx else cfg.nxi)
                F, diag, mean, var, ranks = _solve(fmt, model, ic, c)
                E, V = exact_cell_statistics(c.t_final, c.grid, params)
                dx.append(c.grid.dx)
                errE.append(l1_relative_error(mean[0], None, c.grid, exact=E))
                errV.append(l1_relative_error(var[0], None, c.grid, exact=V))
                oE = observed_order(dx[-2:], errE[-2:]) if len(dx) > 1 else math.nan
                oV = observed_order(dx[-2:], errV[-2:]) if len(dx) > 1 else math.nan
                rows.append([fmt, nx, c.nxi, errE[-1], errV[-1], oE, oV])
                runs.append({"nx": nx, "nxi": c.nxi, **_diag_summary(F, diag, ranks)})
            summary[fmt] = {
                "runs": runs,
                "l1_error_E": errE,
                "l1_error_var": errV,
                "order_E": observed_order(dx, errE) if len(dx) > 1 else None,
                "order_var": observed_order(dx, errV) if len(dx) > 1 else None,
            }
    except (AdmissibilityError, ResourceError) as e:
        code, info = _failure(e)
        summary.update(info)
    write_csv(out / "convergence.csv",
              ["format", "nx", "nxi", "l1_error_E", "l1_error_var", "order_E", "order_var"], rows)
    write_json(out / "summary.json", summary)
    return code, summary

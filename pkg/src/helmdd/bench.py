"""Benchmark harness: scenario configs, threshold sweeps and table output."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coarse import DEFAULT_TAU, Method, SelectionMode, SelectionRule, assemble_coarse, compute_spectra, dtn_threshold, subdomain_wavenumber
from .decomp import PouVariant, assemble_local_matrices, decompose, global_operators
from .errors import ConfigurationError
from .fem import global_system
from .linalg import GmresConfig
from .problems import Kind, make_problem
from .solver import OneLevelPreconditioner, TwoLevelPreconditioner, solve

log = logging.getLogger(__name__)

COLUMNS = [
    "method", "L_lambda", "N", "n", "H_lambda", "n_s_avg", "n_bnd_avg",
    "tau_or_nev", "iterations", "converged", "cs_total", "cs_avg",
]
FORMATS = ("csv", "md", "json")


# -- configuration -------------------------------------------------------------------


def _take(section: str, raw, defaults: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"'{section}' must be an object")
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    return {k: raw.get(k, v) for k, v in defaults.items()}


@dataclass(frozen=True)
class ProblemConfig:
    kind: Kind = Kind.HOMOGENEOUS
    omega: float = 20.0
    rho: float = 10.0
    ppw: float = 20.0
    n_layers: int = 10
    cells: int | None = None


@dataclass(frozen=True)
class DecompositionConfig:
    px: int = 4
    py: int = 4
    overlap_layers: int = 1
    pou_variant: PouVariant = PouVariant.STEEP
    extended_extra_layers: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    decomposition: DecompositionConfig = field(default_factory=DecompositionConfig)
    method: Method = Method.ONE_LEVEL
    selection: SelectionRule | None = None  # None for one-level
    dtn_preset: str | None = None  # "k" or "k43": per-subdomain DtN threshold
    method_options: dict = field(default_factory=dict)
    gmres: GmresConfig = field(default_factory=GmresConfig)
    output_format: str = "csv"
    output_path: str | None = None

    def __post_init__(self):
        d = self.decomposition
        if d.px < 1 or d.py < 1:
            raise ConfigurationError(f"px and py must be >= 1, got {d.px}x{d.py}")
        if d.overlap_layers < 1:
            raise ConfigurationError("overlap_layers must be >= 1")
        if self.method is Method.EXTENDED and d.extended_extra_layers < 1:
            raise ConfigurationError("extended harmonic needs extended_extra_layers >= 1")
        if self.method is not Method.ONE_LEVEL and self.selection is None and self.dtn_preset is None:
            raise ConfigurationError(f"method {self.method.value} needs a selection rule")
        if self.dtn_preset is not None and self.method is not Method.DTN:
            raise ConfigurationError("threshold presets 'k' and 'k43' apply to the DtN method only")
        if self.output_format not in FORMATS:
            raise ConfigurationError(f"output format must be one of {FORMATS}, got {self.output_format!r}")

    @property
    def N(self) -> int:
        return self.decomposition.px * self.decomposition.py

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        try:
            return cls._from_dict(raw)
        except ConfigurationError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"invalid configuration: {exc}") from None

    @classmethod
    def _from_dict(cls, raw: dict) -> "ScenarioConfig":
        top = _take("config", raw, {
            "problem": {}, "decomposition": {}, "method": "one_level",
            "selection": None, "gmres": {}, "output": {},
        })
        p = _take("problem", top["problem"], {
            "kind": "homogeneous", "omega": 20.0, "rho": 10.0, "ppw": 20.0, "n_layers": 10, "cells": None,
        })
        problem = ProblemConfig(Kind(p["kind"]), float(p["omega"]), float(p["rho"]), float(p["ppw"]),
                                int(p["n_layers"]), None if p["cells"] is None else int(p["cells"]))
        d = _take("decomposition", top["decomposition"], {
            "px": 4, "py": 4, "overlap_layers": 1, "pou_variant": "steep", "extended_extra_layers": 1,
        })
        decomposition = DecompositionConfig(int(d["px"]), int(d["py"]), int(d["overlap_layers"]),
                                            PouVariant(d["pou_variant"]), int(d["extended_extra_layers"]))
        m = top["method"]
        options = {}
        if isinstance(m, dict):
            m = dict(m)
            if "name" not in m:
                raise ConfigurationError("'method' object needs a 'name'")
            name = m.pop("name")
            options = m
        else:
            name = m
        method = Method(name)
        _check_options(method, options)

        selection, preset = _parse_selection(method, top["selection"])
        g = _take("gmres", top["gmres"], {"tol": 1e-6, "max_iters": 200})
        gmres = GmresConfig(float(g["tol"]), int(g["max_iters"]))
        o = _take("output", top["output"], {"format": "csv", "path": None})
        return cls(problem, decomposition, method, selection, preset, options, gmres, o["format"], o["path"])

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)


_METHOD_OPTIONS = {
    Method.HK_GENEO: {"p_choice": ("positive_helmholtz", "laplace")},
    Method.HARMONIC: {"solver": ("auto", "saddle", "reduced")},
}


def _check_options(method: Method, options: dict):
    allowed = _METHOD_OPTIONS.get(method, {})
    for k, v in options.items():
        if k not in allowed:
            raise ConfigurationError(f"unknown option {k!r} for method {method.value}")
        if v not in allowed[k]:
            raise ConfigurationError(f"option {k} must be one of {allowed[k]}, got {v!r}")


def _parse_selection(method: Method, raw):
    if method is Method.ONE_LEVEL:
        if raw not in (None, {}):
            log.info("selection ignored for the one-level method")
        return None, None
    if raw is None:
        return SelectionRule.threshold(DEFAULT_TAU[method]), None
    s = _take("selection", raw, {"mode": "threshold", "tau": None, "nev": None, "cap": None})
    try:
        mode = SelectionMode(s["mode"])
    except ValueError:
        raise ConfigurationError(f"selection mode must be 'threshold' or 'fixed_count', got {s['mode']!r}") from None
    cap = None if s["cap"] is None else int(s["cap"])
    if mode is SelectionMode.FIXED_COUNT:
        if s["nev"] is None:
            raise ConfigurationError("fixed_count selection needs 'nev'")
        return SelectionRule.count(int(s["nev"]), cap), None
    tau = s["tau"]
    if tau is None:
        return SelectionRule.threshold(DEFAULT_TAU[method], cap), None
    if isinstance(tau, str):
        if method is not Method.DTN or tau not in ("k", "k43"):
            raise ConfigurationError(f"string thresholds are 'k' or 'k43' for DtN only, got {tau!r}")
        return None, tau
    return SelectionRule.threshold(float(tau), cap), None


# -- reports -------------------------------------------------------------------------


@dataclass
class ScenarioReport:
    method: str
    L_lambda: float
    N: int
    n: int
    H_lambda: float
    n_s_avg: float
    n_bnd_avg: float
    tau_or_nev: float | int | str | None
    iterations: int
    converged: bool
    cs_total: int
    cs_avg: float
    residual_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioReport":
        return cls(**d)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def report_rows(reports: list[ScenarioReport]) -> list[list[str]]:
    return [[_fmt(getattr(r, c)) for c in COLUMNS] for r in reports]


def emit_report(reports: list[ScenarioReport], fmt: str = "csv", path=None) -> str:
    """Render reports as CSV, markdown or JSON; write to ``path`` when given."""
    if not reports:
        raise ConfigurationError("no reports to emit")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(report_rows(reports))
        text = buf.getvalue()
    elif fmt == "md":
        lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
        lines += ["| " + " | ".join(row) + " |" for row in report_rows(reports)]
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        text = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    else:
        raise ConfigurationError(f"unknown output format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise ConfigurationError(f"cannot write report to {path}: {exc.strerror}") from None
    return text


def parse_json_reports(text: str) -> list[ScenarioReport]:
    return [ScenarioReport.from_dict(d) for d in json.loads(text)]


# -- running -------------------------------------------------------------------------


@dataclass
class Scenario:
    """Everything built once per configuration and shared by all sweep points."""

    cfg: ScenarioConfig
    mesh: object
    spec: object
    info: object
    ops: object
    b: np.ndarray
    decomposition: object
    local_mats: list
    one_level: OneLevelPreconditioner
    spectra: list | None = None
    thresholds: list | None = None  # per-subdomain DtN preset thresholds

    @property
    def geometry(self) -> dict:
        subs = self.decomposition.subdomains
        xy = self.mesh.vertices
        diam = [float(np.linalg.norm(np.ptp(xy[s.dofs], axis=0))) for s in subs]
        return {
            "L_lambda": self.info.L_lambda,
            "N": len(subs),
            "n": self.mesh.n_vertices,
            "H_lambda": float(np.mean(diam)) / self.info.lambda_min,
            "n_s_avg": float(np.mean([s.n_dofs for s in subs])),
            "n_bnd_avg": float(np.mean([len(s.boundary_dofs) for s in subs])),
        }


def build_scenario(cfg: ScenarioConfig, threads: int = 1) -> Scenario:
    p, d = cfg.problem, cfg.decomposition
    mesh, spec, info = make_problem(p.kind, p.omega, p.rho, p.ppw, p.n_layers, p.cells)
    log.info("mesh %dx%d, %d dofs", info.cells, info.cells, mesh.n_vertices)
    ops = global_operators(mesh, spec)
    _, b = global_system(mesh, spec)
    extra = d.extended_extra_layers if cfg.method is Method.EXTENDED else 0
    dec = decompose(mesh, d.px, d.py, d.overlap_layers, d.pou_variant, extra_layers=extra)
    local_mats = _map(threads, lambda s: assemble_local_matrices(mesh, s, spec, ops), dec.subdomains)
    one = OneLevelPreconditioner.from_decomposition(dec, local_mats, threads)
    sc = Scenario(cfg, mesh, spec, info, ops, b, dec, local_mats, one)
    if cfg.method is not Method.ONE_LEVEL:
        sc.spectra = compute_spectra(cfg.method, dec, local_mats, threads, **cfg.method_options)
        if cfg.dtn_preset is not None:
            sc.thresholds = [dtn_threshold(cfg.dtn_preset, subdomain_wavenumber(mesh, spec, s)) for s in dec.subdomains]
    return sc


def _map(threads, fn, items):
    if threads == 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads or None) as ex:
        return list(ex.map(fn, items))


def evaluate(sc: Scenario, rule: SelectionRule | None, label=None) -> ScenarioReport:
    """Solve once with the coarse space selected by ``rule`` (None: one-level, or the DtN preset)."""
    cfg = sc.cfg
    coarse = None
    counts = np.zeros(sc.decomposition.N, dtype=int)
    if cfg.method is not Method.ONE_LEVEL:
        if rule is None and sc.thresholds is not None:
            cols = [x.columns(SelectionRule.threshold(t)) for x, t in zip(sc.spectra, sc.thresholds)]
        else:
            cols = [x.columns(rule) for x in sc.spectra]
        if sum(c.count for c in cols):
            coarse = assemble_coarse(cols, sc.ops.A)
            counts = coarse.counts(sc.decomposition.N)
    P = TwoLevelPreconditioner(sc.one_level, coarse, sc.ops.A)
    res = solve(sc.ops.A, sc.b, P, cfg.gmres)
    cs_total = int(counts.sum())
    if label is None:
        label = rule.value if rule is not None else cfg.dtn_preset
    return ScenarioReport(
        method=cfg.method.value,
        **sc.geometry,
        tau_or_nev=label,
        iterations=res.iterations,
        converged=res.converged,
        cs_total=cs_total,
        cs_avg=cs_total / sc.decomposition.N,
        residual_history=list(res.residual_history),
    )


def run_scenario(cfg: ScenarioConfig, threads: int = 1) -> ScenarioReport:
    sc = build_scenario(cfg, threads)
    return evaluate(sc, cfg.selection)


def sweep(cfg: ScenarioConfig, taus=None, nevs=None, threads: int = 1) -> list[ScenarioReport]:
    """One report per threshold (or per count); local spectra are computed once."""
    if (taus is None) == (nevs is None):
        raise ConfigurationError("give exactly one of a threshold list or a count list")
    values = list(taus if taus is not None else nevs)
    if not values:
        raise ConfigurationError("sweep list is empty")
    if cfg.method is Method.ONE_LEVEL:
        raise ConfigurationError("a sweep needs a two-level method")
    cap = cfg.selection.cap if cfg.selection is not None else None
    if taus is not None:
        rules = [SelectionRule.threshold(float(t), cap) for t in values]
    else:
        rules = [SelectionRule.count(int(k), cap) for k in values]
    sc = build_scenario(dataclasses.replace(cfg, dtn_preset=None, selection=rules[0]), threads)
    return [evaluate(sc, r) for r in rules]


def best(reports: list[ScenarioReport]) -> ScenarioReport:
    """Converged report with the fewest iterations (ties: smaller coarse space)."""
    ok = [r for r in reports if r.converged] or reports
    return min(ok, key=lambda r: (r.iterations, r.cs_total))


def parse_list(text: str, kind=float) -> list:
    try:
        vals = [kind(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse list {text!r}") from None
    if not vals or any(not math.isfinite(v) for v in vals):
        raise ConfigurationError(f"invalid list {text!r}")
    return vals

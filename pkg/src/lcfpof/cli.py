"""Command-line pipeline: calibrate, bootstrap, assess, export-hazard.

Every run is described by one YAML config (see :data:`DEFAULTS`); individual
keys can be overridden with ``--set section.key=value`` or the dedicated
flags.  Exit codes: 0 success, 1 validation error, 2 computation error,
3 I/O error.

Outputs are written to temporary files and renamed into place only after
the whole command succeeded, so a failing run leaves no partial outputs.
Each output carries the tool version and a digest of the effective config
and input file contents; the worker count and the output location are not
part of the digest because they do not change any result.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .bootstrap import (
    BootstrapEnsemble,
    load_ensemble,
    run_bootstrap,
    save_ensemble,
    sample_lives,
    pof_curve,
    write_pof_csv,
)
from .calibration import (
    FREE_NAMES,
    CalibrationProblem,
    FitOptions,
    FittedModel,
    load_fitted,
    load_specimens,
    mle_fit,
    save_specimens,
    write_fit_report,
)
from .errors import ComputationError, LcfError, ModelFormatError, ValidationError
from .field_mesh import build_quadrature, export_hazard_field, extract_surface, load_model, write_model
from .hazard import hazard_face_values, ndet_from_state, pof, scale_eta, strain_state, WeibullLife
from .material import load_material, save_material
from .strain_life import N_MAX, N_MIN

log = logging.getLogger("lcfpof")

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "paths": {
        "model": None,
        "material": None,
        "specimens": None,
        "fitted": None,  # default: <output_dir>/fitted_model.json
        "ensemble": None,  # default: <output_dir>/ensemble.json
        "output_dir": "out",
    },
    "mesh": {"quadrature_degree": 4},
    "material": {"amplitude_factor": None, "clamp_life": True, "n_min": N_MIN, "n_max": N_MAX},
    "calibration": {
        "shape_m_init": 2.0,
        "reference_area": 1.0,
        "free": list(FREE_NAMES),
        "restarts": 3,
        "seed": 0,
        "m_upper": 50.0,
        "allow_temperature_clamp": False,
    },
    "bootstrap": {"samples": 2000, "seed": 42, "restarts": 1},
    "curve": {
        # explicit ``values`` take precedence over min/max/count/spacing
        "grid": {"kind": "n_star", "values": None, "min": 0.0, "max": 1.5, "count": 151,
                 "spacing": "linear"},
        "quantiles": [5.0, 95.0],
        "report_n_star": [0.1, 0.5, 1.0],
        "sample_columns": 0,
    },
    "hazard": {"n_star": 0.1, "cycles": None},
    "workers": 1,
}

# keys that do not influence any output value
_NON_DIGEST = {("workers",), ("paths", "output_dir")}


# ---------------------------------------------------------------- config


def _merge(base: dict, over: dict, where=""):
    for key, val in over.items():
        if key not in base:
            raise ValidationError(f"unknown config key '{where}{key}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ValidationError(f"config key '{where}{key}' must be a mapping")
            _merge(base[key], val, f"{where}{key}.")
        else:
            base[key] = val


def _set_dotted(doc: dict, assignment: str):
    if "=" not in assignment:
        raise ValidationError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ValidationError(f"--set {key}: cannot parse value {raw!r}") from exc
    nested = value
    for p in reversed(parts):
        nested = {p: nested}
    _merge(doc, nested)


def _num(v, key, *, integer=False, positive=False, nonneg=False):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ValidationError(f"config {key} must be a number, got {v!r}") from None
    if not math.isfinite(x):
        raise ValidationError(f"config {key} must be finite")
    if integer:
        if x != int(x):
            raise ValidationError(f"config {key} must be an integer")
        x = int(x)
    if positive and not x > 0:
        raise ValidationError(f"config {key} must be > 0")
    if nonneg and not x >= 0:
        raise ValidationError(f"config {key} must be >= 0")
    return x


def _bool(v, key):
    if not isinstance(v, bool):
        raise ValidationError(f"config {key} must be true or false")
    return v


@dataclass(frozen=True)
class GridSpec:
    """Cycle grid: absolute cycles or multiples ``N* = n / eta_MLE``."""

    kind: str
    values: tuple | None = None
    min: float = 0.0
    max: float = 1.0
    count: int = 2
    spacing: str = "linear"

    @classmethod
    def from_dict(cls, d) -> "GridSpec":
        if not isinstance(d, dict):
            raise ValidationError("config curve.grid must be a mapping")
        unknown = set(d) - {"kind", "values", "min", "max", "count", "spacing"}
        if unknown:
            raise ValidationError(f"unknown curve.grid key(s): {sorted(unknown)}")
        kind = d.get("kind", "n_star")
        if kind not in ("n_star", "cycles"):
            raise ValidationError("curve.grid.kind must be 'n_star' or 'cycles'")
        if d.get("values") is not None:
            vals = tuple(_num(v, "curve.grid.values", nonneg=True) for v in d["values"])
            if len(vals) < 1 or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValidationError("curve.grid.values must be non-empty and strictly ascending")
            return cls(kind, vals)
        spacing = d.get("spacing", "linear")
        if spacing not in ("linear", "log"):
            raise ValidationError("curve.grid.spacing must be 'linear' or 'log'")
        lo = _num(d.get("min", 0.0), "curve.grid.min", nonneg=True)
        hi = _num(d.get("max"), "curve.grid.max", positive=True)
        count = _num(d.get("count", 2), "curve.grid.count", integer=True)
        if count < 2 or not hi > lo:
            raise ValidationError("curve.grid needs count >= 2 and max > min")
        if spacing == "log" and not lo > 0:
            raise ValidationError("log-spaced curve.grid needs min > 0")
        return cls(kind, None, lo, hi, count, spacing)

    def points(self) -> np.ndarray:
        if self.values is not None:
            return np.array(self.values, dtype=float)
        if self.spacing == "log":
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)

    def cycles(self, eta_ref: float) -> np.ndarray:
        p = self.points()
        return p * eta_ref if self.kind == "n_star" else p


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path
    model: Path | None
    material: Path | None
    specimens: Path | None
    fitted: Path
    ensemble: Path
    ensemble_explicit: bool
    output_dir: Path
    quadrature_degree: int
    amplitude_factor: float | None
    clamp_life: bool
    n_min: float
    n_max: float
    shape_m_init: float
    reference_area: float
    free: tuple
    fit_options: FitOptions
    samples: int
    seed: int
    boot_options: FitOptions
    grid: GridSpec
    quantiles: tuple
    report_n_star: tuple
    sample_columns: int
    hazard_n_star: float | None
    hazard_cycles: float | None
    allow_temperature_clamp: bool
    workers: int

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "RunConfig":
        raw = copy.deepcopy(DEFAULTS)
        _merge(raw, doc or {})
        base = Path(base_dir)
        P = raw["paths"]

        def path(key):
            v = P[key]
            if v is None:
                return None
            if not isinstance(v, str) or not v:
                raise ValidationError(f"config paths.{key} must be a path string")
            p = Path(v)
            return p if p.is_absolute() else base / p

        out = path("output_dir") or base / "out"
        M, C, B, CU, H = raw["material"], raw["calibration"], raw["bootstrap"], raw["curve"], raw["hazard"]
        free = C["free"]
        if not isinstance(free, (list, tuple)) or any(f not in FREE_NAMES for f in free):
            raise ValidationError(f"calibration.free must be a list drawn from {list(FREE_NAMES)}")
        n_min = _num(M["n_min"], "material.n_min", positive=True)
        n_max = _num(M["n_max"], "material.n_max", positive=True)
        if not n_max > n_min:
            raise ValidationError("material.n_max must exceed material.n_min")
        degree = _num(raw["mesh"]["quadrature_degree"], "mesh.quadrature_degree", integer=True)
        if not 1 <= degree <= 6:
            raise ValidationError("mesh.quadrature_degree must be between 1 and 6")
        factor = M["amplitude_factor"]
        if factor is not None:
            factor = _num(factor, "material.amplitude_factor", positive=True)
        samples = _num(B["samples"], "bootstrap.samples", integer=True)
        if samples < 1:
            raise ValidationError("bootstrap.samples must be >= 1")
        quantiles = tuple(_num(q, "curve.quantiles") for q in CU["quantiles"])
        if any(not 0 <= q <= 100 for q in quantiles):
            raise ValidationError("curve.quantiles must lie in [0, 100] (percent)")
        hn = H["n_star"]
        hc = H["cycles"]
        if (hn is None) == (hc is None):
            raise ValidationError("set exactly one of hazard.n_star and hazard.cycles")
        workers = _num(raw["workers"], "workers", integer=True)
        if workers < 1:
            raise ValidationError("workers must be >= 1")
        m_upper = _num(C["m_upper"], "calibration.m_upper")
        if not m_upper > 1:
            raise ValidationError("calibration.m_upper must be > 1")
        fit_opts = FitOptions(
            restarts=_num(C["restarts"], "calibration.restarts", integer=True, nonneg=True),
            seed=_num(C["seed"], "calibration.seed", integer=True, nonneg=True),
            m_upper=m_upper,
        )
        boot_opts = replace(fit_opts, restarts=_num(B["restarts"], "bootstrap.restarts", integer=True,
                                                    nonneg=True))
        shape_init = _num(C["shape_m_init"], "calibration.shape_m_init")
        if not 1 < shape_init <= m_upper:
            raise ValidationError("calibration.shape_m_init must be in (1, m_upper]")
        return cls(
            raw=raw,
            base_dir=base,
            model=path("model"),
            material=path("material"),
            specimens=path("specimens"),
            fitted=path("fitted") or out / "fitted_model.json",
            ensemble=path("ensemble") or out / "ensemble.json",
            ensemble_explicit=P["ensemble"] is not None,
            output_dir=out,
            quadrature_degree=degree,
            amplitude_factor=factor,
            clamp_life=_bool(M["clamp_life"], "material.clamp_life"),
            n_min=n_min,
            n_max=n_max,
            shape_m_init=shape_init,
            reference_area=_num(C["reference_area"], "calibration.reference_area", positive=True),
            free=tuple(free),
            fit_options=fit_opts,
            samples=samples,
            seed=_num(B["seed"], "bootstrap.seed", integer=True, nonneg=True),
            boot_options=boot_opts,
            grid=GridSpec.from_dict(CU["grid"]),
            quantiles=quantiles,
            report_n_star=tuple(_num(v, "curve.report_n_star", nonneg=True) for v in CU["report_n_star"]),
            sample_columns=_num(CU["sample_columns"], "curve.sample_columns", integer=True, nonneg=True),
            hazard_n_star=None if hn is None else _num(hn, "hazard.n_star", nonneg=True),
            hazard_cycles=None if hc is None else _num(hc, "hazard.cycles", nonneg=True),
            allow_temperature_clamp=_bool(C["allow_temperature_clamp"],
                                          "calibration.allow_temperature_clamp"),
            workers=workers,
        )

    def require(self, *names):
        """Check that the named input files are configured and exist."""
        for name in names:
            p = getattr(self, name)
            if p is None:
                raise ValidationError(f"config paths.{name} is required for this command")
            if not Path(p).is_file():
                raise FileNotFoundError(f"paths.{name}: no such file: {p}")

    def digest(self, inputs: dict) -> str:
        """SHA-256 over the result-relevant config and the input file contents."""
        doc = copy.deepcopy(self.raw)
        for key in _NON_DIGEST:
            d = doc
            for k in key[:-1]:
                d = d[k]
            d.pop(key[-1], None)
        for k in ("model", "material", "specimens", "fitted", "ensemble"):
            doc["paths"].pop(k, None)
        doc["inputs"] = {
            role: hashlib.sha256(Path(p).read_bytes()).hexdigest() for role, p in sorted(inputs.items())
        }
        blob = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path=None, overrides=(), **flags) -> RunConfig:
    doc = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ModelFormatError(f"invalid YAML: {exc}", path) from exc
        if not isinstance(doc, dict):
            raise ModelFormatError("config must be a mapping", path)
        base = path.parent
    merged = copy.deepcopy(DEFAULTS)
    _merge(merged, doc)
    for a in overrides:
        _set_dotted(merged, a)
    for key, val in flags.items():
        if val is not None:
            _set_dotted(merged, f"{key}={json.dumps(val)}")
    return RunConfig.from_dict(merged, base)


# ---------------------------------------------------------------- outputs


class Outputs:
    """Stage output files as temporaries; rename them all into place on commit."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.staged: list[tuple[Path, Path]] = []

    def path(self, final) -> Path:
        final = Path(final)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(f".{final.name}.tmp{os.getpid()}")
        self.staged.append((tmp, final))
        return tmp

    def commit(self) -> list[Path]:
        for tmp, final in self.staged:
            os.replace(tmp, final)
        done = [f for _, f in self.staged]
        self.staged = []
        return done

    def discard(self):
        for tmp, _ in self.staged:
            try:
                tmp.unlink()
            except FileNotFoundError:
                pass
        self.staged = []


def header_lines(command: str, digest: str) -> list[str]:
    return [f"lcfpof {__version__} {command}", f"config-digest sha256:{digest}"]


def _yaml_text(doc, header) -> str:
    return "".join(f"# {h}\n" for h in header) + yaml.safe_dump(doc, sort_keys=False)


# ---------------------------------------------------------------- commands


class Runner:
    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.stage = "config"
        self.out = Outputs(cfg.output_dir)

    def set_stage(self, name):
        self.stage = name
        log.info("%s: %s", self.command, name)

    # shared pieces

    def problem(self, tables, shape_m, records):
        cfg = self.cfg
        return CalibrationProblem(
            tuple(records), tables, free=cfg.free, shape_m=shape_m,
            reference_area=cfg.reference_area, allow_temperature_clamp=cfg.allow_temperature_clamp,
            n_min=cfg.n_min, n_max=cfg.n_max,
        )

    def fitted(self) -> FittedModel:
        self.set_stage("loading fitted model")
        fit = load_fitted(self.cfg.fitted)
        if self.cfg.amplitude_factor is not None:
            fit = replace(fit, tables=replace(fit.tables, amplitude_factor=self.cfg.amplitude_factor))
        return fit

    def component(self, fit: FittedModel):
        cfg = self.cfg
        self.set_stage("loading model")
        mesh, fields = load_model(cfg.model)
        self.set_stage("surface extraction")
        surface = extract_surface(mesh)
        self.set_stage("quadrature")
        quad = build_quadrature(surface, fields, degree=cfg.quadrature_degree)
        self.set_stage("strain state")
        state = strain_state(quad, fit.tables)
        self.set_stage("deterministic life field")
        ndet = ndet_from_state(state, fit.tables, clamp_life=cfg.clamp_life, n_min=cfg.n_min,
                               n_max=cfg.n_max, quad=quad)
        self.set_stage("scale integral")
        eta = scale_eta(quad, ndet, fit.shape_m)
        return surface, quad, state, ndet, eta

    def hazard_cycles(self, eta):
        c = self.cfg
        return c.hazard_cycles if c.hazard_cycles is not None else c.hazard_n_star * eta

    def write_hazard(self, surface, quad, ndet, fit, eta, digest):
        n = self.hazard_cycles(eta)
        self.set_stage("hazard field")
        values = hazard_face_values(n, quad, ndet, fit.shape_m)
        head = " | ".join(header_lines(self.command, digest) + [f"hazard density at n={n!r}"])
        export_hazard_field(surface, values, "hazard_density",
                            self.out.path(self.cfg.output_dir / "hazard_field.vtk"), header=head)
        return n

    # commands

    def calibrate(self):
        cfg = self.cfg
        cfg.require("specimens", "material")
        digest = cfg.digest({"specimens": cfg.specimens, "material": cfg.material})
        self.set_stage("loading inputs")
        tables = load_material(cfg.material)
        if cfg.amplitude_factor is not None:
            tables = replace(tables, amplitude_factor=cfg.amplitude_factor)
        records = load_specimens(cfg.specimens)
        problem = self.problem(tables, cfg.shape_m_init, records)
        self.set_stage("maximum likelihood fit")
        fit = mle_fit(problem, options=cfg.fit_options)
        head = header_lines("calibrate", digest)
        self.set_stage("writing outputs")
        doc = {"header": head, **fit.to_dict()}
        self.out.path(cfg.fitted).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        write_fit_report(fit, problem, self.out.path(cfg.output_dir / "fit_report.yaml"), head)
        return {"shape_m": fit.shape_m, "status": fit.diagnostics["status"]}

    def _bootstrap(self, fit):
        cfg = self.cfg
        cfg.require("specimens")
        records = load_specimens(cfg.specimens)
        problem = self.problem(fit.tables, fit.shape_m, records)
        self.set_stage(f"bootstrap ({cfg.samples} samples)")
        return run_bootstrap(fit, problem, cfg.samples, cfg.seed, workers=cfg.workers,
                             options=cfg.boot_options)

    def bootstrap(self):
        cfg = self.cfg
        cfg.require("fitted", "specimens")
        digest = cfg.digest({"fitted": cfg.fitted, "specimens": cfg.specimens})
        fit = self.fitted()
        ens = self._bootstrap(fit)
        self.set_stage("writing outputs")
        save_ensemble(ens, self.out.path(cfg.ensemble), {"lines": header_lines("bootstrap", digest)})
        return {"samples": len(ens), "failed": ens.failed_count}

    def _ensemble(self, fit, inputs) -> tuple[BootstrapEnsemble, bool]:
        cfg = self.cfg
        if cfg.samples == 1:
            return BootstrapEnsemble.degenerate(fit), False
        if cfg.ensemble.is_file():
            self.set_stage("loading ensemble")
            ens = load_ensemble(cfg.ensemble)
            if ens.seed != cfg.seed or ens.n_requested != cfg.samples:
                raise ValidationError(
                    f"ensemble file {cfg.ensemble} has seed {ens.seed} and B={ens.n_requested}, "
                    f"config asks for seed {cfg.seed} and B={cfg.samples}"
                )
            inputs["ensemble"] = cfg.ensemble
            return ens, False
        if cfg.ensemble_explicit:
            raise FileNotFoundError(f"paths.ensemble: no such file: {cfg.ensemble}")
        inputs["specimens"] = cfg.specimens
        return None, True

    def assess(self):
        cfg = self.cfg
        cfg.require("model", "fitted")
        inputs = {"model": cfg.model, "fitted": cfg.fitted}
        fit = self.fitted()
        ens, run_boot = self._ensemble(fit, inputs)
        if run_boot:
            cfg.require("specimens")
        digest = cfg.digest(inputs)
        surface, quad, state, ndet, eta = self.component(fit)
        if run_boot:
            ens = self._bootstrap(fit)
        self.set_stage("ensemble lives")
        shapes, etas = sample_lives(ens, quad, state=state, clamp_life=cfg.clamp_life,
                                    workers=cfg.workers)
        self.set_stage("total PoF")
        n_grid = cfg.grid.cycles(eta)
        curve = pof_curve(shapes, etas, n_grid, cfg.quantiles, reference_eta=eta)
        head = header_lines("assess", digest)
        write_pof_csv(curve, self.out.path(cfg.output_dir / "pof_curve.csv"), header_lines=head,
                      sample_columns=cfg.sample_columns)
        n_haz = self.write_hazard(surface, quad, ndet, fit, eta, digest)
        if run_boot:
            save_ensemble(ens, self.out.path(cfg.ensemble), {"lines": header_lines("bootstrap", digest)})
        single = WeibullLife(fit.shape_m, eta)
        report = [float(v) for v in cfg.report_n_star]
        summary = {
            "shape_m": float(fit.shape_m),
            "eta_mle": float(eta),
            "surface_area": float(quad.total_area()),
            "faces": int(quad.n_faces),
            "quadrature_points": int(len(quad)),
            "ensemble": {
                "samples": len(ens),
                "requested": int(ens.n_requested),
                "failed": int(ens.failed_count),
                "seed": int(ens.seed),
            },
            "total_pof": {f"{v:g}": float(p) for v, p in zip(report, curve.total_at(np.array(report) * eta))}
            if report else {},
            "mle_pof": {f"{v:g}": float(pof(v * eta, single)) for v in report},
            "hazard_cycles": float(n_haz),
            "clamping": {
                "life_clamped_points": int(ndet.life_clamped.sum()),
                "life_clamped_area_fraction": float(quad.dA[ndet.life_clamped].sum() / quad.dA.sum()),
                "temperature_clamped_points": int(ndet.temperature_clamped.sum()),
            },
        }
        (self.out.path(cfg.output_dir / "assess_summary.yaml")).write_text(_yaml_text(summary, head))
        return summary

    def export_hazard(self):
        cfg = self.cfg
        cfg.require("model", "fitted")
        digest = cfg.digest({"model": cfg.model, "fitted": cfg.fitted})
        fit = self.fitted()
        surface, quad, state, ndet, eta = self.component(fit)
        n = self.write_hazard(surface, quad, ndet, fit, eta, digest)
        return {"eta_mle": eta, "hazard_cycles": n}


# ---------------------------------------------------------------- demo data


def write_demo(directory, *, nx=30, ny=3, nz=24, per_knot=16, shape_m=8.0, seed=42,
               samples=2000) -> Path:
    """Synthetic blade model, material tables, specimens and a matching config."""
    from .synthetic import blade_case, blade_material, simulate_specimens, specimen_design

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mesh, fields, _ = blade_case(nx, ny, nz)
    tables = blade_material()
    design = specimen_design(tables, per_knot, lives=(2.0, 1e8))
    records = simulate_specimens(tables, shape_m, design, seed=seed)
    write_model(d / "blade.model", mesh, fields)
    save_material(tables, d / "material.yaml")
    save_specimens(records, d / "specimens.csv")
    cfg = {
        "paths": {"model": "blade.model", "material": "material.yaml", "specimens": "specimens.csv",
                  "fitted": "out/fitted_model.json", "output_dir": "out"},
        "bootstrap": {"samples": samples, "seed": seed},
    }
    (d / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
    return d / "config.yaml"


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lcfpof", description="LCF crack-initiation probability of failure from FE results.")
    p.add_argument("--version", action="version", version=f"lcfpof {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("calibrate", "fit the probabilistic model to specimen data"),
        ("bootstrap", "parametric bootstrap of the fitted model"),
        ("assess", "total PoF curve, bands, hazard field and summary for a component"),
        ("export-hazard", "hazard-density surface field at one cycle count"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", nargs="?", help="YAML run configuration")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set bootstrap.samples=200")
        s.add_argument("--workers", type=int, help="worker threads")
        s.add_argument("--seed", type=int, help="bootstrap seed")
        s.add_argument("--samples", type=int, help="bootstrap sample count B")
        s.add_argument("--output-dir", help="output directory")
    d = sub.add_parser("demo", help="write a synthetic blade case and config")
    d.add_argument("directory")
    d.add_argument("--nx", type=int, default=30)
    d.add_argument("--ny", type=int, default=3)
    d.add_argument("--nz", type=int, default=24)
    d.add_argument("--per-knot", type=int, default=16)
    d.add_argument("--seed", type=int, default=42)
    d.add_argument("--samples", type=int, default=2000)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    prog = f"lcfpof {args.command}"
    runner = None
    try:
        if args.command == "demo":
            path = write_demo(args.directory, nx=args.nx, ny=args.ny, nz=args.nz,
                              per_knot=args.per_knot, seed=args.seed, samples=args.samples)
            print(f"wrote demo case; run: lcfpof calibrate {path}")
            return EXIT_OK
        cfg = load_config(
            args.config, args.set,
            **{"workers": args.workers, "bootstrap.seed": args.seed, "bootstrap.samples": args.samples,
               "paths.output_dir": args.output_dir},
        )
        runner = Runner(cfg, args.command)
        result = getattr(runner, args.command.replace("-", "_"))()
        written = runner.out.commit()
        for f in written:
            print(f"wrote {f}")
        for k, v in result.items():
            if not isinstance(v, dict):
                print(f"{k}: {v}")
        return EXIT_OK
    except ValidationError as exc:
        code, kind, err = EXIT_VALIDATION, "validation error", exc
    except ComputationError as exc:
        code, kind, err = EXIT_COMPUTATION, "computation error", exc
    except OSError as exc:
        code, kind, err = EXIT_IO, "I/O error", exc
    except LcfError as exc:  # pragma: no cover - all subclasses handled above
        code, kind, err = EXIT_COMPUTATION, "error", exc
    if runner is not None:
        runner.out.discard()
    stage = f" [{runner.stage}]" if runner is not None else ""
    print(f"{prog}: {kind}{stage}: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Fully parametric bootstrap of the calibration and the total PoF curve.

Each bootstrap sample ``b`` draws its random numbers from a Philox stream
keyed by ``SeedSequence(seed, spawn_key=(b,))``, so a sample's content
depends only on ``(seed, b)`` and never on which worker produced it or in
which order.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .calibration import (
    CalibrationProblem,
    FitOptions,
    FittedModel,
    SpecimenRecord,
    mle_fit,
    specimen_eta,
)
from .errors import ComputationError, ConvergenceError, LcfError, ModelFormatError, ValidationError
from .field_mesh import Quadrature
from .hazard import StrainState, ndet_from_state, scale_eta, strain_state
from .material import CMB_NAMES, MaterialTables

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.10


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for bootstrap sample ``index``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def open_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    return (rng.integers(0, 2**53, size=n).astype(float) + 0.5) / 2.0**53


def weibull_inverse_cdf(u, m, eta):
    return eta * (-np.log(u)) ** (1.0 / m)


def _design_records(design):
    if isinstance(design, CalibrationProblem):
        return design.data
    return tuple(SpecimenRecord(*r) for r in design)


def simulate_dataset(fitted: FittedModel, design, rng: np.random.Generator | None = None,
                     uniforms=None) -> list[SpecimenRecord]:
    """Synthetic lives at the design conditions, drawn from the fitted model.

    Records censored in the design are censored again at their original
    cycle count when the draw exceeds it; all other draws are observed.
    ``uniforms`` overrides the random draws (one per record).
    """
    records = _design_records(design)
    m = fitted.shape_m
    if uniforms is None:
        if rng is None:
            raise ValidationError("need rng or uniforms")
        uniforms = open_uniforms(rng, len(records))
    u = np.asarray(uniforms, dtype=float)
    if u.shape != (len(records),) or np.any((u <= 0) | (u >= 1)):
        raise ValidationError("need one uniform in (0, 1) per design record")
    out = []
    for i, (rec, ui) in enumerate(zip(records, u)):
        eta = specimen_eta(rec, fitted.tables, m, specimen_id=i)
        life = float(weibull_inverse_cdf(ui, m, eta))
        if rec.censored and life > rec.cycles:
            out.append(SpecimenRecord(rec.eps_a, rec.temperature, rec.gauge_area, rec.cycles, True))
        else:
            out.append(SpecimenRecord(rec.eps_a, rec.temperature, rec.gauge_area, life, False))
    return out


@dataclass(frozen=True, eq=False)
class BootstrapEnsemble:
    samples: tuple  # retained FittedModel, generation order
    indices: tuple  # generation index of each retained sample
    seed: int
    n_requested: int
    failures: tuple = ()  # (index, message)
    base: FittedModel | None = None

    def __len__(self):
        return len(self.samples)

    @property
    def failed_count(self):
        return len(self.failures)

    @property
    def shapes(self):
        return np.array([s.shape_m for s in self.samples])

    @classmethod
    def degenerate(cls, fitted: FittedModel, copies: int = 1) -> "BootstrapEnsemble":
        """Ensemble of ``copies`` identical samples (point estimate only)."""
        return cls(tuple([fitted] * copies), tuple(range(copies)), 0, copies, (), fitted)


def default_refit_options() -> FitOptions:
    # refits start at the original optimum, one restart is enough to guard it
    return FitOptions(restarts=1)


def run_bootstrap(fitted: FittedModel, design, B: int, seed: int, *, workers: int = 1,
                  options: FitOptions | None = None,
                  max_failed_fraction: float = MAX_FAILED_FRACTION) -> BootstrapEnsemble:
    """Simulate ``B`` datasets from ``fitted``, refit each, collect the refits.

    ``design`` is the original :class:`CalibrationProblem` (its free/fixed
    split is reused) or a plain list of specimen records.  Refits that do
    not converge or end at the m bound are excluded and counted; more than
    ``max_failed_fraction`` failures raise :class:`ComputationError`.
    """
    if B < 1:
        raise ValidationError("B must be >= 1")
    if isinstance(design, CalibrationProblem):
        base_problem = design
    else:
        base_problem = CalibrationProblem(_design_records(design), fitted.tables, shape_m=fitted.shape_m)
    opts = options or default_refit_options()

    def one(b):
        rng = sample_rng(seed, b)
        try:
            data = simulate_dataset(fitted, base_problem, rng)
            problem = replace(base_problem, data=tuple(data), tables=fitted.tables,
                              shape_m=fitted.shape_m)
            fit_opts = replace(opts, seed=int(rng.integers(0, 2**63)))
            fit = mle_fit(problem, init=fitted, options=fit_opts)
        except (ConvergenceError, ValidationError) as exc:
            return b, None, str(exc)
        if fit.diagnostics.get("status") != "converged":
            return b, None, f"refit status {fit.diagnostics.get('status')}"
        return b, fit, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(B)))
    else:
        results = [one(b) for b in range(B)]

    samples, indices, failures = [], [], []
    for b, fit, err in results:
        if fit is None:
            failures.append((b, err))
        else:
            samples.append(fit)
            indices.append(b)
    if len(failures) > max_failed_fraction * B:
        raise ComputationError(
            f"{len(failures)} of {B} bootstrap refits failed (limit {max_failed_fraction:.0%}); "
            f"first: sample {failures[0][0]}: {failures[0][1]}"
        )
    if failures:
        log.warning("%d of %d bootstrap refits failed and were excluded", len(failures), B)
    return BootstrapEnsemble(tuple(samples), tuple(indices), seed, B, tuple(failures), fitted)


# ---------------------------------------------------------------- persistence


def save_ensemble(ens: BootstrapEnsemble, path, header: dict | None = None):
    """JSON file with seed, per-sample parameters and diagnostics."""
    base = ens.base or ens.samples[0]
    doc = {
        "header": header or {},
        "seed": int(ens.seed),
        "n_requested": int(ens.n_requested),
        "fixed_tables": base.tables.to_dict(),
        "base": base.to_dict() if ens.base is not None else None,
        "failures": [[int(b), msg] for b, msg in ens.failures],
        "samples": [
            {
                "index": int(i),
                "shape_m": float(s.shape_m),
                "log_likelihood": float(s.log_likelihood),
                **{n: [float(v) for v in getattr(s.tables, n)] for n in CMB_NAMES},
                "evaluations": int(s.diagnostics.get("evaluations", 0)),
            }
            for i, s in zip(ens.indices, ens.samples)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_ensemble(path) -> BootstrapEnsemble:
    try:
        doc = json.loads(Path(path).read_text())
        fixed = MaterialTables.from_dict(doc["fixed_tables"])
        samples, indices = [], []
        for s in doc["samples"]:
            tables = fixed.with_cmb(*(s[n] for n in CMB_NAMES))
            samples.append(FittedModel(s["shape_m"], tables, s["log_likelihood"],
                                       {"status": "converged", "evaluations": s["evaluations"]}))
            indices.append(int(s["index"]))
        base = FittedModel.from_dict(doc["base"]) if doc.get("base") else None
        return BootstrapEnsemble(tuple(samples), tuple(indices), int(doc["seed"]),
                                 int(doc["n_requested"]),
                                 tuple((int(b), m) for b, m in doc.get("failures", [])), base)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"not an ensemble file: {exc}", path) from exc


# ---------------------------------------------------------------- PoF curves


@dataclass(frozen=True, eq=False)
class PoFCurve:
    n_grid: np.ndarray
    cdf: np.ndarray  # (samples, grid)
    total: np.ndarray
    bands: dict  # quantile percent -> array over grid
    shapes: np.ndarray
    etas: np.ndarray
    reference_eta: float | None = None

    @property
    def n_star(self):
        if self.reference_eta is None:
            return None
        return self.n_grid / self.reference_eta

    def total_at(self, n):
        """Total PoF at arbitrary cycle counts (exact mixture, not interpolated)."""
        F = weibull_cdf(np.asarray(n, dtype=float)[None, ...], self.shapes[:, None], self.etas[:, None])
        return mixture_mean(F)


def weibull_cdf(n, m, eta):
    return -np.expm1(-((n / eta) ** m))


def _pairwise_rows(a):
    while a.shape[0] > 1:
        half = a.shape[0] // 2
        s = a[0 : 2 * half : 2] + a[1 : 2 * half : 2]
        if a.shape[0] % 2:
            s = np.concatenate([s, a[-1:]])
        a = s
    return a[0]


def mixture_mean(F) -> np.ndarray:
    """Equal-weight mean over axis 0, independent of sample order.

    Columns are sorted and summed as offsets from their minimum, so a column
    of identical values returns that value exactly.
    """
    F = np.sort(np.asarray(F, dtype=float), axis=0)
    lo = F[0]
    hi = F[-1]
    mean = lo + _pairwise_rows(F - lo) / F.shape[0]
    return np.clip(mean, lo, hi)


def pof_curve(shapes, etas, n_grid, quantiles=(5.0, 95.0), reference_eta=None) -> PoFCurve:
    shapes = np.asarray(shapes, dtype=float)
    etas = np.asarray(etas, dtype=float)
    n_grid = np.asarray(n_grid, dtype=float)
    if shapes.size == 0:
        raise ValidationError("empty ensemble")
    if np.any(np.diff(n_grid) <= 0) or np.any(n_grid < 0):
        raise ValidationError("cycle grid must be ascending and >= 0")
    cdf = weibull_cdf(n_grid[None, :], shapes[:, None], etas[:, None])
    total = mixture_mean(cdf)
    bands = {float(q): np.percentile(cdf, q, axis=0) for q in quantiles}
    return PoFCurve(n_grid, cdf, total, bands, shapes, etas, reference_eta)


def check_fixed_elastic(ensemble: BootstrapEnsemble):
    """All samples must share E, K', n' (so one cached strain state serves them all)."""
    ref = (ensemble.base or ensemble.samples[0]).tables
    for s in ensemble.samples:
        t = s.tables
        for name in ("young", "ro_K", "ro_n", "temperature_knots"):
            if not np.array_equal(getattr(t, name), getattr(ref, name)):
                raise ValidationError(f"bootstrap sample changes fixed parameter {name!r}")
        if t.amplitude_factor != ref.amplitude_factor:
            raise ValidationError("bootstrap sample changes the amplitude factor")


def sample_lives(ensemble: BootstrapEnsemble, quad: Quadrature, *, state: StrainState | None = None,
                 clamp_life=False, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Weibull shape and component scale for every ensemble sample.

    The strain state is computed once and shared; each sample only redoes
    the CMB inversion and the surface integral.
    """
    if len(ensemble) == 0:
        raise ValidationError("empty ensemble")
    check_fixed_elastic(ensemble)
    if state is None:
        state = strain_state(quad, (ensemble.base or ensemble.samples[0]).tables)

    def one(s):
        nd = ndet_from_state(state, s.tables, clamp_life=clamp_life, quad=quad)
        return s.shape_m, scale_eta(quad, nd, s.shape_m)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, ensemble.samples))
    else:
        out = [one(s) for s in ensemble.samples]
    arr = np.array(out, dtype=float).reshape(-1, 2)
    return arr[:, 0].copy(), arr[:, 1].copy()


def total_pof(ensemble: BootstrapEnsemble, quad: Quadrature, n_grid, *, state=None,
              quantiles=(5.0, 95.0), clamp_life=False, reference_eta=None,
              workers: int = 1) -> PoFCurve:
    """Law of total probability over the ensemble: mean of the per-sample CDFs."""
    shapes, etas = sample_lives(ensemble, quad, state=state, clamp_life=clamp_life, workers=workers)
    return pof_curve(shapes, etas, n_grid, quantiles, reference_eta)


def stride_subset(count: int, k: int) -> np.ndarray:
    """Indices ``0, s, 2s, ...`` (at most ``k``) with stride ``s = ceil(count / k)``."""
    if k <= 0 or count == 0:
        return np.array([], dtype=int)
    s = max(1, math.ceil(count / k))
    return np.arange(0, count, s)[:k]


def write_pof_csv(curve: PoFCurve, path, *, header_lines=(), sample_columns: int = 0):
    """Delimited PoF table: n_star, n, total, one column per band, optional sample curves."""
    cols = ["n_star", "n", "total"] + [f"q{q:g}" for q in curve.bands]
    data = [
        curve.n_star if curve.n_star is not None else np.full(curve.n_grid.size, np.nan),
        curve.n_grid,
        curve.total,
    ] + list(curve.bands.values())
    for i in stride_subset(curve.cdf.shape[0], sample_columns):
        cols.append(f"sample_{i}")
        data.append(curve.cdf[i])
    lines = [f"# {h}" for h in header_lines]
    lines.append(",".join(cols))
    arr = np.stack(data, axis=1)
    for row in arr.tolist():
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pof_csv(path) -> dict:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    cols = rows[0].split(",")
    arr = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return {c: arr[:, j] for j, c in enumerate(cols)}

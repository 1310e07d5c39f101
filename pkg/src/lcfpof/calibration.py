"""Maximum likelihood calibration of the Weibull shape and CMB tables.

Specimens see a uniform strain and temperature over their gauge surface, so
their Weibull scale is ``N_det(eps_a, T) * gauge_area**(-1/m)``.  The
likelihood uses right-censoring for runouts.  E, K' and n' are held fixed;
per-knot sigma_f', b, eps_f', c and a global m are estimated.

The optimizer is a Nelder-Mead simplex in an unconstrained space::

    z_sf = ln(sigma_f') + b * x_ref      z_b = ln(-b)
    z_ef = ln(eps_f')   + c * x_ref      z_c = ln(b - c)   (ln(-c) if b is fixed)
    m    = 1 + softplus(t)

``x_ref`` is the median observed ``ln(2N)``; centring the log coefficients
there decorrelates them from the exponents.  With both exponents free the
two CMB terms could swap roles; ``c < b`` keeps the steeper (plastic)
exponent on the ``eps_f'`` term.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numba
import numpy as np
from scipy.optimize import nnls

from .errors import ConvergenceError, ModelFormatError, ValidationError
from .material import CMB_NAMES, MaterialTables, params_at
from .strain_life import N_MAX, N_MIN, CmbPoint, solve_log2n, solve_ndet

log = logging.getLogger(__name__)

FREE_NAMES = CMB_NAMES + ("m",)
LN2 = math.log(2.0)


class SpecimenRecord(NamedTuple):
    eps_a: float
    temperature: float
    gauge_area: float
    cycles: float
    censored: bool = False


class Theta(NamedTuple):
    """Natural model parameters: CMB rows live in ``tables``."""

    tables: MaterialTables
    shape_m: float


@dataclass(frozen=True, eq=False)
class CalibrationProblem:
    """Specimen data plus the fixed/free split of the parameters.

    ``tables`` supplies E, K', n' (always fixed) and the values of any CMB
    rows that are not listed in ``free``; ``shape_m`` likewise for m.
    ``reference_area`` only documents the area unit that calibrated
    sigma_f' and eps_f' refer to.
    """

    data: tuple
    tables: MaterialTables
    free: tuple = FREE_NAMES
    shape_m: float = 2.0
    reference_area: float = 1.0
    allow_temperature_clamp: bool = False
    n_min: float = N_MIN
    n_max: float = N_MAX

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(SpecimenRecord(*r) for r in self.data))
        object.__setattr__(self, "free", tuple(self.free))
        self.validate()

    @property
    def temperature_knots(self):
        return self.tables.temperature_knots

    def validate(self):
        if not self.data:
            raise ValidationError("no specimen records")
        unknown = set(self.free) - set(FREE_NAMES)
        if unknown:
            raise ValidationError(f"unknown free parameter(s): {sorted(unknown)}")
        if not self.shape_m >= 1:
            raise ValidationError("shape_m must be >= 1")
        knots = self.tables.temperature_knots
        for i, r in enumerate(self.data):
            if not (r.eps_a > 0 and math.isfinite(r.eps_a)):
                raise ValidationError(f"specimen {i}: eps_a must be finite and > 0")
            if not (r.gauge_area > 0 and math.isfinite(r.gauge_area)):
                raise ValidationError(f"specimen {i}: gauge_area must be finite and > 0")
            if not (r.cycles > 0 and math.isfinite(r.cycles)):
                raise ValidationError(f"specimen {i}: cycles must be finite and > 0")
            if not math.isfinite(r.temperature):
                raise ValidationError(f"specimen {i}: temperature must be finite")
            if not self.allow_temperature_clamp and not (knots[0] <= r.temperature <= knots[-1]):
                raise ValidationError(
                    f"specimen {i}: temperature {r.temperature:g} K outside knot range "
                    f"[{knots[0]:g}, {knots[-1]:g}] K and temperature clamping is disabled"
                )
        if any(n in self.free for n in CMB_NAMES):
            T = np.array([r.temperature for r in self.data if not r.censored])
            for k, t in enumerate(knots):
                lo = knots[k - 1] if k > 0 else -np.inf
                hi = knots[k + 1] if k + 1 < knots.size else np.inf
                if not np.any((T > lo) & (T < hi)):
                    raise ValidationError(
                        f"no uncensored specimen in the neighbourhood of knot {t:g} K"
                    )


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 3
    seed: int = 0
    xtol: float = 1e-8
    max_evals: int | None = None
    initial_step: float = 0.1
    restart_scale: float = 0.05
    m_upper: float = 50.0
    boundary_rtol: float = 1e-3


@dataclass(frozen=True, eq=False)
class FittedModel:
    shape_m: float
    tables: MaterialTables
    log_likelihood: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.shape_m >= 1:
            raise ValidationError(f"fitted shape must be >= 1, got {self.shape_m}")

    @property
    def theta(self) -> Theta:
        return Theta(self.tables, self.shape_m)

    def to_dict(self) -> dict:
        return {
            "shape_m": float(self.shape_m),
            "log_likelihood": float(self.log_likelihood),
            "tables": self.tables.to_dict(),
            "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d) -> "FittedModel":
        return cls(
            shape_m=float(d["shape_m"]),
            tables=MaterialTables.from_dict(d["tables"]),
            log_likelihood=float(d.get("log_likelihood", math.nan)),
            diagnostics=dict(d.get("diagnostics", {})),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def save_fitted(model: FittedModel, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n")


def load_fitted(path) -> FittedModel:
    try:
        return FittedModel.from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"not a fitted-model file: {exc}", path) from exc


# ---------------------------------------------------------------- specimen io

SPECIMEN_COLUMNS = ("eps_a", "temperature", "gauge_area", "cycles", "censored")


def load_specimens(path) -> list[SpecimenRecord]:
    """Read a delimited specimen file with header ``eps_a,temperature,gauge_area,cycles,censored``."""
    path = Path(path)
    with open(path, newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t ") if sample.strip() else csv.excel
        except csv.Error:
            dialect = csv.excel
        reader = csv.reader((ln for ln in fh if not ln.lstrip().startswith("#")), dialect)
        rows = [r for r in reader if any(c.strip() for c in r)]
    if not rows:
        raise ModelFormatError("specimen file is empty", path)
    header = [h.strip().lower() for h in rows[0]]
    missing = [c for c in SPECIMEN_COLUMNS if c not in header]
    if missing:
        raise ModelFormatError(f"specimen header lacks column(s): {', '.join(missing)}", path, 1)
    col = {c: header.index(c) for c in SPECIMEN_COLUMNS}
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            vals = {c: row[i].strip() for c, i in col.items()}
            cens = vals["censored"]
            if cens not in ("0", "1"):
                raise ValueError(f"censored must be 0 or 1, got {cens!r}")
            rec = SpecimenRecord(
                float(vals["eps_a"]), float(vals["temperature"]), float(vals["gauge_area"]),
                float(vals["cycles"]), cens == "1",
            )
        except (IndexError, ValueError) as exc:
            raise ModelFormatError(f"bad specimen record: {exc}", path, lineno) from None
        if not (rec.eps_a > 0 and rec.gauge_area > 0 and rec.cycles > 0):
            raise ModelFormatError("eps_a, gauge_area and cycles must be > 0", path, lineno)
        out.append(rec)
    if not out:
        raise ModelFormatError("specimen file has a header but no records", path)
    return out


def save_specimens(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECIMEN_COLUMNS)
        for r in records:
            w.writerow([repr(float(r.eps_a)), repr(float(r.temperature)), repr(float(r.gauge_area)),
                        repr(float(r.cycles)), int(bool(r.censored))])


# ---------------------------------------------------------------- likelihood


def specimen_eta(rec: SpecimenRecord, tables: MaterialTables, m: float, *,
                 n_min=N_MIN, n_max=N_MAX, specimen_id=None) -> float:
    """Weibull scale of a specimen with a uniform gauge section."""
    p = params_at(tables, rec.temperature)
    try:
        ndet = solve_ndet(CmbPoint(rec.eps_a, p), n_min=n_min, n_max=n_max)
    except Exception as exc:
        if specimen_id is not None:
            raise type(exc)(f"specimen {specimen_id}: {exc}") from exc
        raise
    return ndet * rec.gauge_area ** (-1.0 / m)


@numba.njit(cache=True, nogil=True)
def _loglik_nat(nat, K, eps, lo, frac, young, ln_area, ln_cyc, cens, x_lo, x_hi, buf, xw):
    # xw: per-record root from the previous call (warm start), NaN if none
    m = nat[4 * K]
    ln_m = math.log(m)
    n = eps.size
    for i in range(n):
        k = lo[i]
        f = frac[i]
        k2 = k + 1 if f > 0.0 else k
        sf = (1.0 - f) * nat[k] + f * nat[k2]
        b = (1.0 - f) * nat[K + k] + f * nat[K + k2]
        ef = (1.0 - f) * nat[2 * K + k] + f * nat[2 * K + k2]
        c = (1.0 - f) * nat[3 * K + k] + f * nat[3 * K + k2]
        if not (sf > 0.0 and ef > 0.0 and b < 0.0 and c < 0.0):
            return -np.inf
        x, st = solve_log2n(eps[i], math.log(sf / young[i]), b, math.log(ef), c, x_lo, x_hi, xw[i])
        if st != 0:
            return -np.inf
        xw[i] = x
        ln_eta = x - LN2 - ln_area[i] / m
        r = ln_cyc[i] - ln_eta
        zm = math.exp(m * r)
        if cens[i]:
            buf[i] = -zm
        else:
            buf[i] = ln_m - ln_eta + (m - 1.0) * r - zm
    # sorted summation: the result is independent of record order
    terms = np.sort(buf[:n])
    s = 0.0
    for i in range(n):
        s += terms[i]
    if not math.isfinite(s):
        return -np.inf
    return s


@numba.njit(cache=True, nogil=True, inline="always")
def _softplus(t):
    if t > 30.0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


@numba.njit(cache=True, nogil=True)
def _z_to_nat(x, free_idx, z_base, nat_base, K, x_ref, ordered, nat):
    # fixed entries are copied from nat_base so they stay exact even when a
    # free exponent moves the centring of a fixed coefficient
    z = z_base.copy()
    for i in range(nat.size):
        nat[i] = nat_base[i]
    for j in range(free_idx.size):
        z[free_idx[j]] = x[j]
    free = np.zeros(nat.size, dtype=np.bool_)
    for j in range(free_idx.size):
        free[free_idx[j]] = True
    for k in range(K):
        if free[K + k]:
            nat[K + k] = -math.exp(z[K + k])
        b = nat[K + k]
        if free[3 * K + k]:
            if ordered:
                nat[3 * K + k] = b - math.exp(z[3 * K + k])
            else:
                nat[3 * K + k] = -math.exp(z[3 * K + k])
        c = nat[3 * K + k]
        if free[k]:
            nat[k] = math.exp(z[k] - b * x_ref)
        if free[2 * K + k]:
            nat[2 * K + k] = math.exp(z[2 * K + k] - c * x_ref)
    if free[4 * K]:
        nat[4 * K] = 1.0 + _softplus(z[4 * K])


@numba.njit(cache=True, nogil=True)
def _negll(x, free_idx, z_base, nat_base, K, x_ref, ordered, m_upper, eps, lo, frac, young,
           ln_area, ln_cyc, cens, x_lo, x_hi, buf, xw, nat):
    _z_to_nat(x, free_idx, z_base, nat_base, K, x_ref, ordered, nat)
    if nat[4 * K] > m_upper:
        return np.inf
    for j in range(4 * K):
        if not (math.isfinite(nat[j]) and nat[j] != 0.0):
            return np.inf
    ll = _loglik_nat(nat, K, eps, lo, frac, young, ln_area, ln_cyc, cens, x_lo, x_hi, buf, xw)
    if ll == -np.inf:
        return np.inf
    return -ll


@numba.njit(cache=True, nogil=True)
def _nelder_mead(x0, step, xtol, max_evals, args):
    """Adaptive Nelder-Mead; stops when every vertex is within xtol/2 (inf-norm) of the best."""
    n = x0.size
    alpha = 1.0
    beta = 1.0 + 2.0 / n
    gamma = 0.75 - 0.5 / n
    delta = 1.0 - 1.0 / n
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    for i in range(n):
        sim[i + 1] = x0
        sim[i + 1, i] += step[i]
    evals = 0
    for i in range(n + 1):
        fs[i] = _negll(sim[i], *args)
        evals += 1
    it = 0
    diam = np.inf
    converged = False
    while evals < max_evals:
        order = np.argsort(fs, kind="mergesort")
        sim = sim[order]
        fs = fs[order]
        diam = 0.0
        for i in range(1, n + 1):
            for j in range(n):
                d = abs(sim[i, j] - sim[0, j])
                if d > diam:
                    diam = d
        if diam < 0.5 * xtol:
            converged = True
            break
        it += 1
        cen = np.zeros(n)
        for i in range(n):
            cen += sim[i]
        cen /= n
        xr = cen + alpha * (cen - sim[n])
        fr = _negll(xr, *args)
        evals += 1
        if fr < fs[0]:
            xe = cen + beta * (xr - cen)
            fe = _negll(xe, *args)
            evals += 1
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
        elif fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
        else:
            if fr < fs[n]:
                xc = cen + gamma * (xr - cen)
                fc = _negll(xc, *args)
                evals += 1
                accept = fc <= fr
            else:
                xc = cen - gamma * (cen - sim[n])
                fc = _negll(xc, *args)
                evals += 1
                accept = fc < fs[n]
            if accept:
                sim[n] = xc
                fs[n] = fc
            else:
                for i in range(1, n + 1):
                    sim[i] = sim[0] + delta * (sim[i] - sim[0])
                    fs[i] = _negll(sim[i], *args)
                    evals += 1
    best = np.argmin(fs)
    return sim[best].copy(), fs[best], evals, it, diam, converged


class _Context:
    """Flattened problem arrays for the compiled likelihood."""

    def __init__(self, problem: CalibrationProblem):
        self.problem = problem
        tables = problem.tables
        knots = tables.temperature_knots
        K = knots.size
        data = problem.data
        T = np.array([r.temperature for r in data])
        Tc = np.clip(T, knots[0], knots[-1])
        if K == 1:
            lo = np.zeros(T.size, dtype=np.int64)
            frac = np.zeros(T.size)
        else:
            lo = np.clip(np.searchsorted(knots, Tc, side="right") - 1, 0, K - 2).astype(np.int64)
            frac = (Tc - knots[lo]) / (knots[lo + 1] - knots[lo])
            # exactly on the upper knot: use it directly
            top = frac >= 1.0
            lo[top] += 1
            frac[top] = 0.0
        self.K = K
        self.n_clamped = int(np.count_nonzero(T != Tc))
        self.eps = np.array([r.eps_a for r in data])
        self.lo = lo
        self.frac = frac
        self.young = np.interp(Tc, knots, tables.young)
        self.ln_area = np.log([r.gauge_area for r in data])
        self.ln_cyc = np.log([r.cycles for r in data])
        self.cens = np.array([bool(r.censored) for r in data])
        self.x_lo = math.log(2.0 * problem.n_min)
        self.x_hi = math.log(2.0 * problem.n_max)
        unc = ~self.cens
        x_obs = np.log(2.0) + self.ln_cyc[unc] if unc.any() else np.log(2.0) + self.ln_cyc
        self.x_ref = float(np.median(x_obs))
        self.buf = np.empty(len(data))
        free_idx = []
        for j, name in enumerate(CMB_NAMES):
            if name in problem.free:
                free_idx += [j * K + k for k in range(K)]
        if "m" in problem.free:
            free_idx.append(4 * K)
        self.free_idx = np.array(free_idx, dtype=np.int64)
        # with both exponents free the terms are only identified up to a swap;
        # c < b keeps the steeper exponent on the plastic term
        self.ordered = "b_exp" in problem.free and "c_exp" in problem.free

    def nat_from_theta(self, theta: Theta) -> np.ndarray:
        t = theta.tables
        return np.concatenate([t.sigma_f, t.b_exp, t.eps_f, t.c_exp, [theta.shape_m]]).astype(float)

    def z_from_nat(self, nat) -> np.ndarray:
        K = self.K
        z = np.empty(4 * K + 1)
        sf, b, ef, c = nat[:K], nat[K:2 * K], nat[2 * K:3 * K], nat[3 * K:4 * K]
        z[:K] = np.log(sf) + b * self.x_ref
        z[K:2 * K] = np.log(-b)
        z[2 * K:3 * K] = np.log(ef) + c * self.x_ref
        with np.errstate(invalid="ignore", divide="ignore"):
            z[3 * K:4 * K] = np.log(b - c) if self.ordered else np.log(-c)
        y = nat[4 * K] - 1.0
        with np.errstate(divide="ignore"):
            z[4 * K] = y + math.log(-math.expm1(-y)) if y > 0 else -np.inf
        return z

    def theta_from_nat(self, nat) -> Theta:
        K = self.K
        tables = self.problem.tables.with_cmb(nat[:K], nat[K:2 * K], nat[2 * K:3 * K], nat[3 * K:4 * K])
        return Theta(tables, float(nat[4 * K]))

    def loglik_nat(self, nat) -> float:
        return float(_loglik_nat(np.asarray(nat, dtype=float), self.K, self.eps, self.lo, self.frac,
                                 self.young, self.ln_area, self.ln_cyc, self.cens, self.x_lo,
                                 self.x_hi, self.buf, np.full(self.eps.size, np.nan)))

    def args(self, z_base, nat_base, m_upper):
        return (self.free_idx, z_base, nat_base, self.K, self.x_ref, self.ordered, float(m_upper),
                self.eps, self.lo, self.frac, self.young, self.ln_area, self.ln_cyc, self.cens, self.x_lo, self.x_hi,
                np.empty(self.eps.size), np.full(self.eps.size, np.nan), np.empty(4 * self.K + 1))


def log_likelihood(theta, problem: CalibrationProblem) -> float:
    """Censored Weibull log-likelihood; ``-inf`` if any specimen life cannot be solved.

    ``theta`` is a :class:`Theta` or anything with ``tables`` and ``shape_m``.
    Rows of ``theta.tables`` are used as given; E is taken from ``problem``.
    """
    ctx = _Context(problem)
    nat = ctx.nat_from_theta(Theta(theta.tables, theta.shape_m))
    if not nat[-1] >= 1:
        raise ValidationError("shape m must be >= 1")
    return ctx.loglik_nat(nat)


# ---------------------------------------------------------------- initializer


def _linfit(x, y):
    if x.size < 2 or np.ptp(x) <= 0:
        return None
    A = np.stack([np.ones_like(x), x], axis=1)
    (a, s), *_ = np.linalg.lstsq(A, y, rcond=None)
    return a, s


B_GRID = np.linspace(-0.25, -0.03, 23)
C_GRID = np.linspace(-1.2, -0.3, 31)


def _two_term_fit(x, eps, b_grid=B_GRID, c_grid=C_GRID):
    """Least-squares fit of ``eps = A e^{b x} + B e^{c x}`` in relative error.

    For fixed exponents the coefficients solve a non-negative linear
    regression; the exponents are scanned on a grid with ``c < b``.
    Returns ``(A, b, B, c)`` or ``None``.
    """
    best = None
    for b in b_grid:
        u = np.exp(b * x) / eps
        for c in c_grid:
            if c >= b - 0.05:
                continue
            P = np.stack([u, np.exp(c * x) / eps], axis=1)
            coef, res = nnls(P, np.ones_like(x))
            if best is None or res < best[0]:
                best = (res, coef[0], b, coef[1], c)
    if best is None or best[1] <= 0 or best[3] <= 0:
        return None
    return best[1], best[2], best[3], best[4]


def default_initializer(problem: CalibrationProblem) -> Theta:
    """Start values: per-knot two-term CMB regression, then a median-rank Weibull fit.

    The CMB curve is fitted to the uncensored records closest to each knot
    (observed life, area effect ignored).  m comes from median-rank
    regression of the ratios observed life / fitted CMB life.
    """
    tables = problem.tables
    knots = tables.temperature_knots
    K = knots.size
    rows = {n: np.array(getattr(tables, n), dtype=float) for n in CMB_NAMES}
    data = problem.data
    T = np.array([r.temperature for r in data])
    eps = np.array([r.eps_a for r in data])
    x = np.log(2.0 * np.array([r.cycles for r in data]))
    unc = ~np.array([r.censored for r in data])
    nearest = np.abs(T[:, None] - knots[None, :]).argmin(axis=1)
    free_cmb = any(n in problem.free for n in CMB_NAMES)
    for k in range(K):
        if not free_cmb:
            break
        sel = unc & (nearest == k)
        if sel.sum() < 3:
            continue
        fit = _two_term_fit(x[sel], eps[sel])
        if fit is None:
            continue
        A, b, B, c = fit
        fitted = {"sigma_f": A * tables.young[k], "b_exp": b, "eps_f": B, "c_exp": c}
        for name in CMB_NAMES:
            if name in problem.free and math.isfinite(fitted[name]):
                rows[name][k] = fitted[name]
    init_tables = tables.with_cmb(*(rows[n] for n in CMB_NAMES))

    m = problem.shape_m
    if "m" in problem.free:
        ratios = []
        for r in data:
            if r.censored:
                continue
            try:
                nd = specimen_eta(r, init_tables, 1e9, n_min=problem.n_min, n_max=problem.n_max)
            except Exception:
                continue
            ratios.append(r.cycles / nd)
        if len(ratios) >= 3 and np.ptp(np.log(ratios)) > 0:
            lr = np.sort(np.log(ratios))
            n = lr.size
            F = (np.arange(1, n + 1) - 0.3) / (n + 0.4)
            fit = _linfit(lr, np.log(-np.log1p(-F)))
            if fit is not None and fit[1] > 0:
                m = float(fit[1])
        m = float(np.clip(m, 1.05, 20.0))
    return Theta(init_tables, m)


# ---------------------------------------------------------------- fit


def mle_fit(problem: CalibrationProblem, init=None, options: FitOptions | None = None) -> FittedModel:
    """Maximise :func:`log_likelihood` over the free parameters.

    Runs one simplex search from ``init`` (or :func:`default_initializer`),
    then ``options.restarts`` searches from seeded perturbations of the best
    point, keeping the best.  Raises :class:`ConvergenceError` if the best
    run did not shrink below ``options.xtol``, unless m ended at its upper
    bound, which is reported as ``diagnostics['status'] == 'boundary'``.
    """
    opts = options or FitOptions()
    ctx = _Context(problem)
    if init is None:
        init = default_initializer(problem)
    # free entries from init, fixed entries from the problem
    nat = ctx.nat_from_theta(Theta(problem.tables, problem.shape_m))
    nat_init = ctx.nat_from_theta(Theta(init.tables, init.shape_m))
    nat[ctx.free_idx] = nat_init[ctx.free_idx]
    z_base = ctx.z_from_nat(nat)
    if not np.all(np.isfinite(z_base[ctx.free_idx])) or not nat[-1] <= opts.m_upper:
        raise ValidationError(
            "infeasible initial parameters (need m in (1, m_upper] and c < b when both are free)"
        )
    args = ctx.args(z_base, nat, opts.m_upper)
    x0 = z_base[ctx.free_idx].copy()
    n = x0.size
    if n == 0:
        ll = ctx.loglik_nat(nat)
        return FittedModel(float(nat[-1]), ctx.theta_from_nat(nat).tables, ll,
                           {"status": "fixed", "converged": True})
    f0 = _negll(x0, *args)
    if not math.isfinite(f0):
        raise ValidationError(
            "infeasible initial parameters: some specimen life cannot be solved at the start point"
        )
    max_evals = opts.max_evals or 2000 * (n + 1)
    step = np.full(n, opts.initial_step)
    rng = np.random.default_rng(opts.seed)

    runs = []
    x, f, ev, it, diam, conv = _nelder_mead(x0, step, opts.xtol, max_evals, args)
    runs.append((x, f, ev, it, diam, conv))
    best = runs[0]
    for _ in range(opts.restarts):
        start = best[0] + rng.normal(0.0, opts.restart_scale, n)
        if not math.isfinite(_negll(start, *args)):
            start = best[0].copy()
        r = _nelder_mead(start, np.full(n, opts.restart_scale), opts.xtol, max_evals, args)
        runs.append(r)
        if r[1] < best[1] or (r[1] == best[1] and r[5] and not best[5]):
            best = r

    x, f, ev, it, diam, conv = best
    nat_hat = np.empty(4 * ctx.K + 1)
    _z_to_nat(x, ctx.free_idx, z_base, nat, ctx.K, ctx.x_ref, ctx.ordered, nat_hat)
    theta = ctx.theta_from_nat(nat_hat)
    m_hat = theta.shape_m
    boundary = "m" in problem.free and m_hat >= opts.m_upper * (1.0 - opts.boundary_rtol)
    diagnostics = {
        "status": "boundary" if boundary else ("converged" if conv else "not_converged"),
        "converged": bool(conv),
        "boundary": bool(boundary),
        "evaluations": int(sum(r[2] for r in runs)),
        "iterations": int(it),
        "simplex_diameter": float(diam),
        "restarts": int(opts.restarts),
        "run_objectives": [float(r[1]) for r in runs],
        "temperature_clamps": ctx.n_clamped,
        "n_specimens": len(problem.data),
        "n_censored": int(ctx.cens.sum()),
        "free": list(problem.free),
    }
    if boundary:
        log.warning("shape m reached its upper bound %.4g: data show no scatter", opts.m_upper)
    elif not conv:
        raise ConvergenceError(
            f"simplex did not converge in {max_evals} evaluations (diameter {diam:.3g})",
            best=theta, diagnostics=diagnostics,
        )
    try:
        tables = theta.tables
        tables.validate()
    except ValidationError as exc:
        raise ConvergenceError(f"optimum violates table invariants: {exc}", best=theta,
                               diagnostics=diagnostics) from exc
    return FittedModel(m_hat, tables, -float(f), diagnostics)


def write_fit_report(model: FittedModel, problem: CalibrationProblem, path, header_lines=()):
    """Plain-text YAML report of the fit."""
    import yaml

    knots = model.tables.temperature_knots
    report = {
        "shape_m": float(model.shape_m),
        "log_likelihood": float(model.log_likelihood),
        "reference_area": float(problem.reference_area),
        "cmb_tables": {
            name: {f"{t:g}": float(v) for t, v in zip(knots, getattr(model.tables, name))}
            for name in CMB_NAMES
        },
        "free": list(problem.free),
        "diagnostics": _jsonable(model.diagnostics),
    }
    text = "".join(f"# {h}\n" for h in header_lines) + yaml.safe_dump(report, sort_keys=False)
    Path(path).write_text(text)

"""Weibull hazard density, surface hazard rate, scale integral and PoF.

All surface integrals go through :func:`pairwise_sum` over the canonical
quadrature order, so results do not depend on how the per-point work was
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .errors import ComputationError, ValidationError
from .field_mesh import Quadrature
from .material import MaterialTables, neuber_correction, params_at_many, von_mises_amplitude
from .strain_life import N_MAX, N_MIN, solve_ndet_many


def pairwise_sum(values) -> float:
    """Sum by a fixed binary tree: adjacent pairs are added level by level.

    The tree depends only on the length of the input, which makes the result
    reproducible regardless of how the values were produced.
    """
    a = np.array(values, dtype=float).reshape(-1)
    if a.size == 0:
        return 0.0
    while a.size > 1:
        half = a.size // 2
        s = a[0 : 2 * half : 2] + a[1 : 2 * half : 2]
        if a.size % 2:
            s = np.append(s, a[-1])
        a = s
    return float(a[0])


@dataclass(frozen=True)
class WeibullLife:
    shape_m: float
    scale_eta: float

    def __post_init__(self):
        if not self.shape_m >= 1:
            raise ValidationError(f"Weibull shape must be >= 1, got {self.shape_m}")
        if not (self.scale_eta > 0 and math.isfinite(self.scale_eta)):
            raise ValidationError(f"Weibull scale must be finite and > 0, got {self.scale_eta}")


@dataclass(frozen=True, eq=False)
class StrainState:
    """Per-point strain amplitude and temperature.

    Depends on E, K' and n' only, which calibration keeps fixed, so one state
    serves every bootstrap sample.
    """

    eps_a: np.ndarray
    temperature: np.ndarray
    temperature_clamped: np.ndarray


@dataclass(frozen=True, eq=False)
class NdetField:
    values: np.ndarray
    life_clamped: np.ndarray  # points set to N_max
    temperature_clamped: np.ndarray

    def __len__(self):
        return self.values.size


def strain_state(quad: Quadrature, tables: MaterialTables) -> StrainState:
    """Von Mises amplitude -> Neuber strain at each quadrature point."""
    if quad.temperature is None or quad.stress is None:
        raise ValidationError("quadrature carries no fields; build it with a FieldSet")
    p, clamped = params_at_many(tables, quad.temperature, names=("young", "ro_K", "ro_n"))
    amp = tables.amplitude_factor * von_mises_amplitude(quad.stress)
    eps = neuber_correction(amp, SimpleNamespace(**p))
    return StrainState(np.asarray(eps), quad.temperature.copy(), clamped)


def ndet_from_state(state: StrainState, tables: MaterialTables, *, clamp_life=False,
                    n_min=N_MIN, n_max=N_MAX, quad: Quadrature | None = None) -> NdetField:
    """Solve the CMB equation at every point of a cached strain state."""
    p, _ = params_at_many(tables, state.temperature, names=("sigma_f", "b_exp", "eps_f", "c_exp", "young"))

    def label(i):
        if quad is not None:
            k = int(np.count_nonzero(quad.face[:i] == quad.face[i]))
            return f"face {int(quad.face[i])} point {k}"
        return f"quadrature point {i}"

    N = solve_ndet_many(state.eps_a, p["sigma_f"], p["b_exp"], p["eps_f"], p["c_exp"], p["young"],
                        n_min=n_min, n_max=n_max, clamp_life=clamp_life, labels=label)
    return NdetField(N, N == n_max, state.temperature_clamped)


def evaluate_ndet_field(quad: Quadrature, tables: MaterialTables, *, clamp_life=False,
                        n_min=N_MIN, n_max=N_MAX) -> NdetField:
    """Temperature lookup, von Mises, amplitude factor, Neuber, CMB inversion per point."""
    state = strain_state(quad, tables)
    return ndet_from_state(state, tables, clamp_life=clamp_life, n_min=n_min, n_max=n_max, quad=quad)


def _ndet_values(ndet):
    return ndet.values if isinstance(ndet, NdetField) else np.asarray(ndet, dtype=float)


def log_surface_integral(quad: Quadrature, ndet, m: float) -> float:
    """``ln`` of the integral of ``N_det**-m`` over the surface."""
    N = _ndet_values(ndet)
    if len(quad) == 0:
        raise ValidationError("empty surface")
    if N.shape != (len(quad),):
        raise ValidationError(f"N_det field has {N.size} values for {len(quad)} quadrature points")
    if not m >= 1:
        raise ValidationError(f"Weibull shape must be >= 1, got {m}")
    terms = np.log(quad.dA) - m * np.log(N)
    top = terms.max()
    s = pairwise_sum(np.exp(terms - top))
    if not (s > 0 and math.isfinite(top)):
        raise ComputationError("surface integral is not positive")
    return float(top + math.log(s))


def scale_eta(quad: Quadrature, ndet, m: float) -> float:
    """Weibull scale ``(integral of N_det**-m dA) ** (-1/m)``."""
    return math.exp(-log_surface_integral(quad, ndet, m) / m)


def pof(n, life: WeibullLife):
    """``1 - exp(-(n/eta)**m)``; scalar or array ``n``."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValidationError("cycle count must be >= 0")
    out = -np.expm1(-((n / life.scale_eta) ** life.shape_m))
    return float(out) if out.ndim == 0 else out


def hazard_density(n, ndet_value, m: float):
    """Weibull hazard density ``(m/N_det) * (n/N_det)**(m-1)``."""
    n = np.asarray(n, dtype=float)
    N = np.asarray(ndet_value, dtype=float)
    if np.any(n < 0) or np.any(N <= 0):
        raise ValidationError("need n >= 0 and N_det > 0")
    if m == 1.0:
        out = np.broadcast_to(1.0 / N, np.broadcast_shapes(n.shape, N.shape)).copy()
    else:
        with np.errstate(divide="ignore"):
            out = np.exp(math.log(m) + (m - 1.0) * (np.log(n) - np.log(N)) - np.log(N))
        out = np.where(n > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def hazard_rate(n: float, quad: Quadrature, ndet, m: float) -> float:
    """Surface integral of the hazard density at cycle ``n``."""
    if n < 0:
        raise ValidationError("cycle count must be >= 0")
    N = _ndet_values(ndet)
    log_i = log_surface_integral(quad, N, m)  # validates inputs
    if n == 0:
        return math.exp(log_i) if m == 1.0 else 0.0
    terms = np.log(quad.dA) + math.log(m) + (m - 1.0) * math.log(n) - m * np.log(N)
    top = terms.max()
    return math.exp(top) * pairwise_sum(np.exp(terms - top))


def hazard_face_values(n: float, quad: Quadrature, ndet, m: float) -> np.ndarray:
    """Area-weighted mean hazard density per face."""
    rho = hazard_density(n, _ndet_values(ndet), m)
    dA = quad.dA
    num = np.bincount(quad.face, weights=dA * rho, minlength=quad.n_faces)
    den = np.bincount(quad.face, weights=dA, minlength=quad.n_faces)
    return num / den

"""Temperature-dependent material data, equivalent stress and Neuber correction.

Material tables hold Coffin-Manson-Basquin (CMB) coefficients, Young's
modulus and cyclic Ramberg-Osgood constants at a set of temperature knots.
Values between knots are interpolated linearly; outside the knot range they
are clamped to the nearest knot.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numba
import numpy as np
import yaml

from .errors import ConvergenceError, ModelFormatError, ValidationError

log = logging.getLogger(__name__)

PARAM_NAMES = ("sigma_f", "b_exp", "eps_f", "c_exp", "young", "ro_K", "ro_n")
CMB_NAMES = ("sigma_f", "b_exp", "eps_f", "c_exp")

#: Cycle amplitude = factor * operating-state von Mises stress (shutdown state is stress free).
DEFAULT_AMPLITUDE_FACTOR = 0.5


class PointParams(NamedTuple):
    """Material parameters at a single temperature."""

    sigma_f: float
    b_exp: float
    eps_f: float
    c_exp: float
    young: float
    ro_K: float = math.inf
    ro_n: float = 1.0


@dataclass(frozen=True, eq=False)
class MaterialTables:
    """Per-knot material parameters.

    All arrays have the same length as ``temperature_knots`` (kelvin, strictly
    ascending).  ``sigma_f``, ``young`` and ``ro_K`` share one stress unit.
    """

    temperature_knots: np.ndarray
    sigma_f: np.ndarray
    b_exp: np.ndarray
    eps_f: np.ndarray
    c_exp: np.ndarray
    young: np.ndarray
    ro_K: np.ndarray
    ro_n: np.ndarray
    amplitude_factor: float = DEFAULT_AMPLITUDE_FACTOR
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        knots = np.atleast_1d(np.asarray(self.temperature_knots, dtype=float))
        object.__setattr__(self, "temperature_knots", knots)
        for name in PARAM_NAMES:
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != knots.shape:
                raise ValidationError(
                    f"material parameter {name!r} has {arr.size} values for {knots.size} knots"
                )
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        knots.setflags(write=False)
        self.validate()

    @property
    def n_knots(self) -> int:
        return self.temperature_knots.size

    def validate(self):
        k = self.temperature_knots
        if k.size < 1:
            raise ValidationError("material tables need at least one temperature knot")
        if not np.all(np.isfinite(k)) or np.any(np.diff(k) <= 0):
            raise ValidationError("temperature knots must be finite and strictly ascending")
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"material parameter {name!r} has non-finite values")
        checks = (
            ("sigma_f", self.sigma_f > 0, "> 0"),
            ("eps_f", self.eps_f > 0, "> 0"),
            ("young", self.young > 0, "> 0"),
            ("b_exp", self.b_exp < 0, "< 0"),
            ("c_exp", self.c_exp < 0, "< 0"),
            ("ro_K", self.ro_K > 0, "> 0"),
            ("ro_n", (self.ro_n > 0) & (self.ro_n <= 1), "in (0, 1]"),
        )
        for name, ok, what in checks:
            if not np.all(ok):
                bad = int(np.flatnonzero(~ok)[0])
                raise ValidationError(
                    f"material parameter {name!r} must be {what} at every knot "
                    f"(knot {k[bad]:g} K has {getattr(self, name)[bad]:g})"
                )
        if not (math.isfinite(self.amplitude_factor) and self.amplitude_factor > 0):
            raise ValidationError("amplitude_factor must be finite and > 0")

    def with_cmb(self, sigma_f, b_exp, eps_f, c_exp) -> "MaterialTables":
        """Copy with replaced CMB rows; elastic and Ramberg-Osgood rows are kept."""
        return replace(self, sigma_f=sigma_f, b_exp=b_exp, eps_f=eps_f, c_exp=c_exp)

    def to_dict(self) -> dict:
        out = {"amplitude_factor": float(self.amplitude_factor)}
        for name in PARAM_NAMES:
            out[name] = [
                [float(t), float(v)] for t, v in zip(self.temperature_knots, getattr(self, name))
            ]
        return out

    @classmethod
    def from_dict(cls, data: dict, source=None) -> "MaterialTables":
        if not isinstance(data, dict):
            raise ModelFormatError("material file must contain a mapping", source)
        missing = [n for n in PARAM_NAMES if n not in data]
        if missing:
            raise ModelFormatError(f"missing material block(s): {', '.join(missing)}", source)
        knots = None
        values = {}
        for name in PARAM_NAMES:
            rows = data[name]
            try:
                arr = np.array(rows, dtype=float).reshape(-1, 2)
            except (TypeError, ValueError) as exc:
                raise ModelFormatError(
                    f"block {name!r} must be a list of [temperature, value] rows", source
                ) from exc
            if knots is None:
                knots = arr[:, 0]
            elif arr.shape[0] != knots.size or np.any(arr[:, 0] != knots):
                raise ModelFormatError(
                    f"block {name!r} uses different temperature knots than {PARAM_NAMES[0]!r}",
                    source,
                )
            values[name] = arr[:, 1]
        factor = float(data.get("amplitude_factor", DEFAULT_AMPLITUDE_FACTOR))
        return cls(temperature_knots=knots, amplitude_factor=factor, source=source, **values)


def load_material(path) -> MaterialTables:
    """Read material tables from a YAML file.

    Each parameter is a block of ``[temperature, value]`` rows; every block
    must use the same knots.  An optional ``amplitude_factor`` key sets the
    stress-amplitude convention (default 0.5)::

        amplitude_factor: 0.5
        sigma_f: [[300, 1200.0], [1200, 900.0]]
        b_exp:   [[300, -0.09],  [1200, -0.11]]
        ...
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        line = getattr(getattr(exc, "problem_mark", None), "line", None)
        raise ModelFormatError(f"YAML parse error: {exc}", path, None if line is None else line + 1)
    try:
        return MaterialTables.from_dict(data, source=str(path))
    except ModelFormatError:
        raise
    except ValidationError as exc:
        raise ModelFormatError(str(exc), path) from exc


def save_material(tables: MaterialTables, path):
    Path(path).write_text(yaml.safe_dump(tables.to_dict(), sort_keys=False))


def params_at(tables: MaterialTables, T: float, events: list | None = None) -> PointParams:
    """Interpolate all parameters at temperature ``T``.

    Outside the knot range the nearest knot is used.  If ``events`` is given,
    a ``(T, clamped_to)`` tuple is appended for every clamp.
    """
    knots = tables.temperature_knots
    T = float(T)
    if T < knots[0] or T > knots[-1]:
        bound = float(knots[0] if T < knots[0] else knots[-1])
        log.debug("temperature %g K clamped to knot %g K", T, bound)
        if events is not None:
            events.append((T, bound))
    vals = [float(np.interp(T, knots, getattr(tables, name))) for name in PARAM_NAMES]
    return PointParams(*vals)


def params_at_many(tables: MaterialTables, T, names=PARAM_NAMES):
    """Vectorised :func:`params_at`; returns ``(dict name -> array, clamped mask)``."""
    T = np.asarray(T, dtype=float)
    knots = tables.temperature_knots
    clamped = (T < knots[0]) | (T > knots[-1])
    out = {name: np.interp(T, knots, getattr(tables, name)) for name in names}
    return out, clamped


def von_mises_amplitude(stress) -> float | np.ndarray:
    """Von Mises equivalent of stress given as ``(xx, yy, zz, xy, yz, xz)``.

    Accepts a single 6-vector or an ``(n, 6)`` array.
    """
    s = np.asarray(stress, dtype=float)
    xx, yy, zz, xy, yz, xz = np.moveaxis(s, -1, 0)
    vm = np.sqrt(
        0.5 * ((xx - yy) ** 2 + (yy - zz) ** 2 + (zz - xx) ** 2)
        + 3.0 * (xy**2 + yz**2 + xz**2)
    )
    return float(vm) if vm.ndim == 0 else vm


@numba.njit(cache=True, nogil=True)
def _neuber_sigma(s, E, K, n):
    # root of g(x) = x*(x/E + (x/K)**(1/n)) - s*s/E on [0, s]; g increasing and convex
    if s <= 0.0:
        return 0.0
    target = s * s / E
    inv_n = 1.0 / n
    lo = 0.0
    hi = s
    x = s
    for _ in range(200):
        p = (x / K) ** inv_n
        g = x * (x / E + p) - target
        if g > 0.0:
            hi = x
        else:
            lo = x
        dg = 2.0 * x / E + (1.0 + inv_n) * p
        step = g / dg if dg > 0.0 else 0.0
        xn = x - step
        if not (lo < xn < hi) or dg <= 0.0:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-14 * abs(xn) or hi - lo <= 1e-15 * hi:
            return xn
        x = xn
    return np.nan


@numba.njit(cache=True, nogil=True)
def _neuber_strain_many(s, E, K, n, out):
    for i in range(s.size):
        sig = _neuber_sigma(s[i], E[i], K[i], n[i])
        if sig == 0.0:
            out[i] = 0.0
        else:
            out[i] = sig / E[i] + (sig / K[i]) ** (1.0 / n[i])
    return out


def neuber_correction(sigma_el, p: PointParams):
    """Elastic-plastic strain amplitude from an elastic stress amplitude.

    Solves ``sigma * eps = sigma_el**2 / E`` together with the Ramberg-Osgood
    law ``eps = sigma/E + (sigma/K')**(1/n')`` for ``sigma`` in
    ``[0, sigma_el]`` and returns ``eps``.  ``sigma_el`` may be a scalar or an
    array; array inputs take ``p`` fields as scalars or matching arrays.
    """
    s = np.asarray(sigma_el, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValidationError("sigma_el must be finite and >= 0")
    shape = s.shape
    s1 = np.ascontiguousarray(s.reshape(-1))
    E, K, n = (np.broadcast_to(np.asarray(v, dtype=float), shape).reshape(-1).copy()
               for v in (p.young, p.ro_K, p.ro_n))
    out = _neuber_strain_many(s1, E, K, n, np.empty_like(s1))
    if np.any(np.isnan(out)):
        raise ConvergenceError("Neuber bracketing solver did not converge")
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out

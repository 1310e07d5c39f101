"""Coffin-Manson-Basquin strain-life relation and its inversion.

The deterministic life ``N_det`` at a strain amplitude solves::

    eps_a = sigma_f/E * (2N)**b + eps_f * (2N)**c

The root is found in ``x = ln(2N)`` where the log of the right-hand side is
smooth, strictly decreasing and close to linear, so a safeguarded Newton
iteration converges in a handful of steps.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np

from .errors import ConvergenceError, OutOfRangeError, ValidationError
from .material import PointParams

N_MIN = 1e-3
N_MAX = 1e12
MAX_ITER = 200

OK, TOO_HIGH, TOO_LOW, NO_CONVERGENCE = 0, 1, 2, 3


class CmbPoint(NamedTuple):
    eps_a: float
    params: PointParams


def cmb_strain(N, p: PointParams):
    """Strain amplitude at life ``N`` (scalar or array)."""
    twoN = 2.0 * np.asarray(N, dtype=float)
    if np.any(twoN <= 0):
        raise ValidationError("N must be > 0")
    eps = p.sigma_f / p.young * twoN**p.b_exp + p.eps_f * twoN**p.c_exp
    return float(eps) if np.ndim(eps) == 0 else eps


@numba.njit(cache=True, nogil=True, inline="always")
def _g(x, le, la, b, lb, c):
    # ln(strain(x)) - ln(eps) and its derivative, via a stable log-sum-exp
    ta = la + b * x
    tb = lb + c * x
    if ta >= tb:
        e = math.exp(tb - ta)
        return ta + math.log1p(e) - le, (b + c * e) / (1.0 + e)
    e = math.exp(ta - tb)
    return tb + math.log1p(e) - le, (b * e + c) / (1.0 + e)


@numba.njit(cache=True, nogil=True)
def solve_log2n(eps, la, b, lb, c, x_lo, x_hi, x0=np.nan):
    """Solve for ``x = ln(2N)``; ``la = ln(sigma_f/E)``, ``lb = ln(eps_f)``.

    ``x0`` is an optional start value.  Returns ``(x, status)`` with status
    OK, TOO_HIGH (strain above the N_min strain), TOO_LOW (below the N_max
    strain) or NO_CONVERGENCE.  The window ends are only evaluated when an
    iterate tries to leave the window.
    """
    if not eps > 0.0:
        return x_hi, TOO_LOW
    le = math.log(eps)
    lo = x_lo
    hi = x_hi
    lo_open = True  # sign at the window end not yet known
    hi_open = True
    if x_lo <= x0 <= x_hi:
        x = x0
    else:
        # each single term must not exceed eps, which bounds the root from below
        x = x_lo
        if la > -np.inf:
            x = max(x, (le - la) / b)
        if lb > -np.inf:
            x = max(x, (le - lb) / c)
        x = min(x, x_hi)
    for _ in range(MAX_ITER):
        g, dg = _g(x, le, la, b, lb, c)
        if g == 0.0:
            return x, OK
        if g > 0.0:
            lo = x
            lo_open = False
        else:
            hi = x
            hi_open = False
        xn = x - g / dg
        if xn >= hi:
            if hi_open:
                gh, _ = _g(x_hi, le, la, b, lb, c)
                hi_open = False
                if gh > 0.0:
                    return x_hi, TOO_LOW
                if gh == 0.0:
                    return x_hi, OK
            xn = 0.5 * (lo + hi)
        elif xn <= lo:
            if lo_open:
                gl, _ = _g(x_lo, le, la, b, lb, c)
                lo_open = False
                if gl < 0.0:
                    return x_lo, TOO_HIGH
                if gl == 0.0:
                    return x_lo, OK
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-12 * max(1.0, abs(x)):
            return xn, OK
        x = xn
    return x, NO_CONVERGENCE


@numba.njit(cache=True, nogil=True)
def _solve_many(eps, la, b, lb, c, x_lo, x_hi, clamp, out_x, status):
    for i in range(eps.size):
        x, st = solve_log2n(eps[i], la[i], b[i], lb[i], c[i], x_lo, x_hi)
        if st == TOO_LOW and clamp:
            x, st = x_hi, OK
        out_x[i] = x
        status[i] = st


def _log_coefficients(sigma_f, young, eps_f):
    with np.errstate(divide="ignore"):
        la = np.log(np.asarray(sigma_f, dtype=float) / np.asarray(young, dtype=float))
        lb = np.log(np.asarray(eps_f, dtype=float))
    return la, lb


def solve_ndet_many(eps_a, sigma_f, b_exp, eps_f, c_exp, young, *,
                    n_min=N_MIN, n_max=N_MAX, clamp_life=False, labels=None):
    """Vectorised inversion; all parameter arguments broadcast against ``eps_a``.

    Strains below the ``n_max`` strain raise :class:`OutOfRangeError` unless
    ``clamp_life`` is set, in which case ``n_max`` is returned.  ``labels``
    (optional callable ``index -> str``) locates offending entries in errors.
    """
    eps = np.ascontiguousarray(np.asarray(eps_a, dtype=float).reshape(-1))
    n = eps.size
    la, lb = _log_coefficients(sigma_f, young, eps_f)

    def flat(a):
        return np.ascontiguousarray(np.broadcast_to(np.asarray(a, dtype=float), np.shape(eps_a)).reshape(-1))

    x = np.empty(n)
    status = np.empty(n, dtype=np.int8)
    x_lo = math.log(2.0 * n_min)
    x_hi = math.log(2.0 * n_max)
    _solve_many(eps, flat(la), flat(b_exp), flat(lb), flat(c_exp), x_lo, x_hi,
                bool(clamp_life), x, status)
    bad = np.flatnonzero(status != OK)
    if bad.size:
        i = int(bad[0])
        where = labels(i) if labels is not None else f"entry {i}"
        st = int(status[i])
        if st == TOO_HIGH:
            raise OutOfRangeError(
                f"{where}: strain amplitude {eps[i]:.6g} exceeds the CMB strain at N_min={n_min:g}"
            )
        if st == TOO_LOW:
            raise OutOfRangeError(
                f"{where}: strain amplitude {eps[i]:.6g} is below the CMB strain at N_max={n_max:g}"
                " (enable clamp_life to treat it as infinite life)"
            )
        raise ConvergenceError(f"{where}: CMB root solve did not converge")
    N = 0.5 * np.exp(x)
    if clamp_life:
        # exact N_max for clamped points, independent of exp/log rounding
        N[x == x_hi] = n_max
    return N.reshape(np.shape(eps_a))


def solve_ndet(point: CmbPoint, *, n_min=N_MIN, n_max=N_MAX, clamp_life=False) -> float:
    """Deterministic life ``N_det`` with ``cmb_strain(N_det) == point.eps_a``."""
    p = point.params
    if not math.isfinite(point.eps_a) or (point.eps_a <= 0 and not clamp_life):
        raise ValidationError("eps_a must be finite and > 0")
    if p.b_exp >= 0 or p.c_exp >= 0:
        raise ValidationError("CMB exponents b and c must be < 0")
    N = solve_ndet_many(point.eps_a, p.sigma_f, p.b_exp, p.eps_f, p.c_exp, p.young,
                        n_min=n_min, n_max=n_max, clamp_life=clamp_life)
    return float(N)

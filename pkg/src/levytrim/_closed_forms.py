"""Closed forms for the one-sided tails used by the measure catalog.

All functions are vectorized over numpy arrays.  Where a direct formula would
overflow or cancel, an asymptotic series in ``Z = log(e/x)`` is used instead.
"""

from __future__ import annotations

import numpy as np
from scipy import special

EULER = float(np.euler_gamma)
E = float(np.e)

# Z above which the asymptotic series replaces the direct exponential-integral
# formulas for the log-type tails.
_SERIES_SWITCH = 40.0
_SERIES_TERMS = 60


def _factorial_series(w: np.ndarray, start: int = 1) -> np.ndarray:
    """Asymptotic sum ``sum_{k>=start} k! / w**k`` truncated at 60 terms (w >= 40)."""
    total = np.zeros_like(w)
    term = np.ones_like(w)
    for k in range(1, _SERIES_TERMS + 1):
        term = term * k / w
        if k >= start:
            total += term
    return total


# ---------------------------------------------------------------- exponential integral

def e1_inverse(v) -> np.ndarray:
    """Solve ``E1(x) = v`` for ``x`` (vectorized, ``v > 0``).

    For ``v >= 20`` the root is below 1e-8 and the small-argument expansion
    ``log x = -gamma - v + x - x**2/4`` is iterated to full precision.  Otherwise
    Newton's method in ``u = log x`` starts from a lower bound of the root, where
    convexity of ``u -> E1(exp(u))`` makes the iteration monotone.
    """
    v = np.asarray(v, dtype=float)
    x = np.full(v.shape, np.inf)
    pos = v > 0
    big = pos & (v >= 20.0)
    if big.any():
        vb = v[big]
        y = np.exp(-EULER - vb)
        for _ in range(2):
            y = np.exp(-EULER - vb + y - 0.25 * y * y)
        x[big] = y
    small = pos & ~big
    if small.any():
        vs = np.maximum(v[small], 1e-300)
        lower = np.exp(-EULER - vs)
        # E1(x) > exp(-x)/(x+1), so W0(e/v) - 1 is also below the root.
        with np.errstate(over="ignore", invalid="ignore"):
            alt = special.lambertw(E / vs).real - 1.0
        u = np.log(np.maximum(lower, np.where(np.isfinite(alt), alt, 0.0)))
        for _ in range(100):
            xx = np.exp(u)
            with np.errstate(over="ignore", invalid="ignore"):
                step = (special.exp1(xx) - vs) * np.exp(xx)
            step = np.where(np.isfinite(step), step, 0.0)
            u = u + step
            if np.all(np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(u))):
                break
        x[small] = np.exp(u)
    return x


def e1_m1_above(a) -> np.ndarray:
    """``int_(a,1] y * exp(-y)/y dy`` for the unit gamma density."""
    a = np.asarray(a, dtype=float)
    return np.where(a < 1.0, np.exp(-np.minimum(a, 1.0)) - np.exp(-1.0), 0.0)


def e1_m2_below(x) -> np.ndarray:
    """``int_(0,x] y**2 * exp(-y)/y dy = P(2, x)``."""
    return special.gammainc(2.0, np.asarray(x, dtype=float))


def e1_density(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.exp(-x) / x


# ---------------------------------------------------------------- log-corrected tail x^-3 Z^-2

_LOGDOA_C0 = 1.0 - 2.0 * np.exp(-2.0) * float(special.expi(2.0))
_LOGDOA_M1_C = (E - float(special.expi(1.0))) / E


def logdoa_tail(x) -> np.ndarray:
    """One-sided tail of the density ``y**-3 * log(e/y)**-2`` on ``(0, 1)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    inside = x < 1.0
    if not inside.any():
        return out
    z = 1.0 - np.log(x[inside])
    res = np.empty(z.shape)
    far = z >= _SERIES_SWITCH
    with np.errstate(over="ignore"):
        if far.any():
            zf = z[far]
            res[far] = np.exp(2.0 * (zf - 1.0)) / zf * _factorial_series(2.0 * zf) + _LOGDOA_C0
        near = ~far
        if near.any():
            zn = z[near]
            res[near] = (np.exp(-2.0) * (2.0 * special.expi(2.0 * zn) - np.exp(2.0 * zn) / zn)
                         + _LOGDOA_C0)
    out[inside] = np.maximum(res, 0.0)
    return out


def logdoa_density(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        z = 1.0 - np.log(x)
        d = x ** -3.0 / (z * z)
    return np.where(x < 1.0, d, 0.0)


def logdoa_m1_above(a) -> np.ndarray:
    """``int_(a,1] y * y**-3 * log(e/y)**-2 dy``."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape)
    inside = a < 1.0
    if not inside.any():
        return out
    aa = a[inside]
    z = 1.0 - np.log(aa)
    res = np.empty(z.shape)
    far = z >= _SERIES_SWITCH
    with np.errstate(over="ignore"):
        if far.any():
            res[far] = _factorial_series(z[far]) / (aa[far] * z[far]) + _LOGDOA_M1_C
        near = ~far
        if near.any():
            zn = z[near]
            res[near] = (special.expi(zn) - np.exp(zn) / zn - float(special.expi(1.0)) + E) / E
    out[inside] = np.maximum(res, 0.0)
    return out


def logdoa_m2_below(x) -> np.ndarray:
    """``int_(0,x] y**2 * y**-3 * log(e/y)**-2 dy = 1/log(e/x)`` (1 beyond x=1)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        z = 1.0 - np.log(np.minimum(x, 1.0))
    return 1.0 / z


# ---------------------------------------------------------------- relatively stable tail

_RS_KNEE = float(np.exp(-1.0))
_RS_KNEE_TAIL = E / 4.0
_RS_SLOPE = _RS_KNEE_TAIL / (1.0 - _RS_KNEE)
_RS_FIRST_KNEE = 0.25
_RS_MEAN = (3.0 + E) / 8.0
_RS_KNEE_M2 = _RS_KNEE * (-0.25 + float(np.exp(2.0) * special.expn(2, 2.0)))


def _scaled_e2(z: np.ndarray) -> np.ndarray:
    """``exp(z) * E_2(z)`` for ``z >= 2``."""
    out = np.empty(z.shape)
    far = z >= 50.0
    if far.any():
        zf = z[far]
        total = np.zeros(zf.shape)
        term = np.ones(zf.shape)
        for k in range(30):
            total += term
            term = -term * (k + 2) / zf
        out[far] = total / zf
    near = ~far
    if near.any():
        zn = z[near]
        out[near] = np.exp(zn) * special.expn(2, zn)
    return out


def relstable_tail(x) -> np.ndarray:
    """``x**-1 log(e/x)**-2`` on ``(0, 1/e]``, then linear down to 0 at ``x = 1``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        z = 1.0 - np.log(x)
        low = 1.0 / (x * z * z)
    mid = _RS_SLOPE * (1.0 - x)
    return np.where(x <= _RS_KNEE, low, np.where(x < 1.0, mid, 0.0))


def relstable_density(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        z = 1.0 - np.log(x)
        low = (1.0 - 2.0 / z) / (x * x * z * z)
    return np.where(x <= _RS_KNEE, low, np.where(x < 1.0, _RS_SLOPE, 0.0))


def relstable_inverse(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape)
    upper = v >= _RS_KNEE_TAIL
    if upper.any():
        arg = -0.5 / np.sqrt(E * v[upper])
        z = -2.0 * special.lambertw(arg, -1).real
        out[upper] = np.exp(1.0 - z)
    lower = (v > 0) & ~upper
    out[lower] = 1.0 - v[lower] / _RS_SLOPE
    out[v <= 0] = 1.0
    return out


def relstable_first_below(x) -> np.ndarray:
    """``int_(0,x] y Pi(dy)``; equals ``1/Z - 1/Z**2`` below the knee."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        z = 1.0 - np.log(np.minimum(x, _RS_KNEE))
    low = 1.0 / z - 1.0 / (z * z)
    xm = np.clip(x, _RS_KNEE, 1.0)
    mid = _RS_FIRST_KNEE + _RS_SLOPE * (xm * xm - _RS_KNEE ** 2) / 2.0
    return np.where(x <= _RS_KNEE, low, mid)


def relstable_m1_above(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.where(a < 1.0, _RS_MEAN - relstable_first_below(a), 0.0)


def relstable_m2_below(x) -> np.ndarray:
    """``int_(0,x] y**2 Pi(dy)`` via ``-x/Z**2 + 2x exp(Z) E_2(Z)/Z`` below the knee."""
    x = np.asarray(x, dtype=float)
    xl = np.atleast_1d(np.minimum(x, _RS_KNEE))
    with np.errstate(divide="ignore", under="ignore", invalid="ignore"):
        z = 1.0 - np.log(xl)
        low = -xl / (z * z) + 2.0 * xl * _scaled_e2(z) / z
    low = np.where(xl > 0, low, 0.0).reshape(x.shape)
    xm = np.clip(x, _RS_KNEE, 1.0)
    mid = _RS_KNEE_M2 + _RS_SLOPE * (xm ** 3 - _RS_KNEE ** 3) / 3.0
    return np.where(x <= _RS_KNEE, low, mid)


RELSTABLE_MEAN = _RS_MEAN

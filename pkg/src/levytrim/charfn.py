"""Characteristic exponents and characteristic functions of trimmed processes.

Every one-sided jump integral is split at ``c = 1/|theta|``.  Below ``c`` the
kernels ``cos(x) - 1`` and ``sin(x) - x`` are evaluated by series and integrated
in ``log y`` with Gauss-Legendre panels, after removing the ``-x**2/2`` part of
the cosine kernel through the closed-form second moment.  Above ``c`` the
Fourier integrals use QUADPACK's oscillatory weights.

The truncated exponent uses
``Psi_trunc(theta; L) = Psi(theta) - int_{|x| >= L} (exp(i theta x) - 1) Pi(dx)``
(the compensator terms cancel exactly), and the integral above ``L`` is
accumulated across the sorted levels of the Gamma quadrature nodes.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, NumericFailure
from .levy_measure import LevyMeasureSpec, TailFunction, quad_moment
from .pathsim import IDENTITY, TrimMode

#: Probability cells of the Gamma-weight quadrature.
GAMMA_CELLS = 128
#: Gauss-Legendre points used in the two end cells and in every log-space panel.
END_NODES = 8
PANEL_NODES = 16
#: Largest panel length in ``log y`` and largest phase change per panel.
PANEL_LOG_WIDTH = 0.5
PANEL_PHASE = 1.0
#: The series region ``(0, c]`` is integrated down to ``c * exp(-SMALL_DEPTH)``.
SMALL_DEPTH = 40.0
QUAD_RTOL = 1e-10
MODULUS_SLACK = 1e-6
#: Cap on the split ``1/theta``; mass beyond it is below double precision
#: for every supported tail, so the oscillatory remainder is dropped there.
SPLIT_CAP = 1e300

_GL_X, _GL_W = np.polynomial.legendre.leggauss(PANEL_NODES)


# ---------------------------------------------------------------- stable kernels

def _cos_rem(x):
    """``cos(x) - 1 + x**2/2``, accurate for small ``x``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1.0
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    series = np.zeros_like(xs)
    term = x2 * x2 / 24.0
    for k in range(3, 12):
        series = series + term
        term = -term * x2 / ((2 * k - 1) * (2 * k))
    with np.errstate(invalid="ignore"):
        direct = np.cos(x) - 1.0 + 0.5 * x * x
    return np.where(small, series, direct)


def _sin_minus(x):
    """``sin(x) - x``, accurate for small ``x``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1.0
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    series = np.zeros_like(xs)
    term = -xs * x2 / 6.0
    for k in range(2, 12):
        series = series + term
        term = -term * x2 / ((2 * k) * (2 * k + 1))
    return np.where(small, series, np.sin(x) - x)


def _one_minus_cos(x):
    return 2.0 * np.sin(0.5 * np.asarray(x, dtype=float)) ** 2


# ---------------------------------------------------------------- panels in log y

def _log_panels(density, kernel, a, b, theta, breaks=()):
    """``int_a^b kernel(y) density(y) dy`` for many intervals at once.

    ``kernel`` maps an array of ``y`` to a (real) array.  Intervals are split at
    ``breaks`` and subdivided so that each panel is short in ``log y`` and in
    phase ``theta*y``; each panel uses a fixed Gauss-Legendre rule.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    owner = np.arange(a.size)
    keep = b > a
    a, b, owner = a[keep], b[keep], owner[keep]
    out = np.zeros(keep.size)
    if a.size == 0:
        return out
    for bp in breaks:
        cut = (a < bp) & (bp < b)
        if cut.any():
            a = np.concatenate([a, np.full(int(cut.sum()), bp)])
            b = np.concatenate([np.where(cut, bp, b), b[cut]])
            owner = np.concatenate([owner, owner[cut]])
    la, lb = np.log(a), np.log(b)
    step = np.minimum(PANEL_LOG_WIDTH, PANEL_PHASE / np.maximum(theta * b, 1e-300))
    count = np.maximum(1, np.ceil((lb - la) / step)).astype(np.int64)
    reps = np.repeat(np.arange(a.size), count)
    first = np.cumsum(count) - count
    j = np.arange(reps.size) - first[reps]
    width = (lb - la)[reps] / count[reps]
    lo = la[reps] + j * width
    half = 0.5 * width
    s = (lo + half)[:, None] + half[:, None] * _GL_X[None, :]
    y = np.exp(s)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        vals = np.asarray(kernel(y), dtype=float) * np.asarray(density(y), dtype=float) * y
    vals = np.where(np.isfinite(vals), vals, 0.0)
    panel = (vals * _GL_W[None, :]).sum(axis=1) * half
    np.add.at(out, owner[reps], panel)
    return out


def _scalar(f):
    return lambda y: float(np.asarray(f(np.array([y])), dtype=float)[0])


def _fourier(tail: TailFunction, theta: float, lo: float):
    """``(int cos(theta y) f, int sin(theta y) f)`` over ``[lo, support_max)``."""
    f = _scalar(tail.density)
    top = tail.support_max
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if np.isinf(top):
            cos_part = integrate.quad(f, lo, np.inf, weight="cos", wvar=theta, limlst=200)[0]
            sin_part = integrate.quad(f, lo, np.inf, weight="sin", wvar=theta, limlst=200)[0]
            return cos_part, sin_part
        cuts = [lo] + [p for p in sorted(tail.breakpoints) if lo < p < top] + [top]
        cos_part = sin_part = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            opts = dict(wvar=theta, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
            cos_part += integrate.quad(f, a, b, weight="cos", **opts)[0]
            sin_part += integrate.quad(f, a, b, weight="sin", **opts)[0]
    return cos_part, sin_part


def _cont_tail(tail: TailFunction, x: float) -> float:
    return float(tail._cont(np.array([x]))[0])


def _cont_m1(tail: TailFunction, a: float) -> float:
    """``int_(a,1] y f(y) dy`` for the atomless part."""
    if a >= 1.0:
        return 0.0
    if tail.m1_above is not None:
        return float(np.asarray(tail.m1_above(np.array([a])), dtype=float)[0])
    return quad_moment(tail.density, 1, a, min(1.0, tail.support_max), tail.breakpoints)


def _cont_m2(tail: TailFunction, x: float) -> float:
    if tail.m2_below is not None:
        return float(np.asarray(tail.m2_below(np.array([x])), dtype=float)[0])
    return quad_moment(tail.density, 2, 0.0, min(x, tail.support_max), tail.breakpoints)


def _breaks(tail: TailFunction):
    pts = list(tail.breakpoints)
    if np.isfinite(tail.support_max):
        pts.append(tail.support_max)
    return tuple(pts)


def _check_density(tail: TailFunction):
    if tail.has_continuous and tail.density is None:
        raise ConfigError("characteristic functions need a density for the atomless part")


# ---------------------------------------------------------------- one-sided integrals

def _side_psi(tail: TailFunction, theta: float) -> complex:
    """``int (exp(i theta y) - 1 - i theta y 1{y<=1}) Pi(dy)`` over ``y > 0`` (``theta > 0``)."""
    re = im = 0.0
    if tail.has_continuous:
        _check_density(tail)
        top = tail.support_max
        c = min(1.0 / theta, top, SPLIT_CAP)
        deep = c * math.exp(-SMALL_DEPTH)
        brk = _breaks(tail)
        dens = tail.density
        re += -0.5 * theta * theta * _cont_m2(tail, c)
        re += _log_panels(dens, lambda y: _cos_rem(theta * y), [deep], [c], theta, brk)[0]
        one = min(c, 1.0)
        im += _log_panels(dens, lambda y: _sin_minus(theta * y), [deep], [one], theta, brk)[0]
        if c > 1.0:
            im += _log_panels(dens, lambda y: np.sin(theta * y), [1.0], [c], theta, brk)[0]
        if c < min(top, SPLIT_CAP):
            cos_part, sin_part = _fourier(tail, theta, c)
            re += cos_part - _cont_tail(tail, c)
            im += sin_part - theta * _cont_m1(tail, c)
    if tail.has_atoms:
        loc, mass = tail._loc, tail._mass
        re -= float(np.sum(mass * _one_minus_cos(theta * loc)))
        im += float(np.sum(mass * np.where(loc <= 1.0, _sin_minus(theta * loc),
                                           np.sin(theta * loc))))
    return complex(re, im)


def _side_exp_above(tail: TailFunction, theta: float, levels) -> np.ndarray:
    """``int_[L, inf) (exp(i theta y) - 1) Pi(dy)`` for each level ``L`` (``theta > 0``).

    The largest level is integrated directly; smaller ones add the panels
    between consecutive sorted levels.
    """
    levels = np.asarray(levels, dtype=float).reshape(-1)
    out = np.zeros(levels.size, dtype=complex)
    finite = np.isfinite(levels) & (levels > 0)
    if not finite.any():
        return out
    uniq = np.unique(levels[finite])[::-1]
    acc = np.zeros(uniq.size, dtype=complex)
    if tail.has_continuous:
        _check_density(tail)
        top = tail.support_max
        dens = tail.density
        brk = _breaks(tail)
        first = uniq[0]
        head = 0j
        if first < top:
            c = max(first, min(1.0 / theta, top, SPLIT_CAP))
            re = -_log_panels(dens, lambda y: _one_minus_cos(theta * y), [first], [c], theta, brk)[0]
            im = _log_panels(dens, lambda y: np.sin(theta * y), [first], [c], theta, brk)[0]
            if c < min(top, SPLIT_CAP):
                cos_part, sin_part = _fourier(tail, theta, c)
                re += cos_part - _cont_tail(tail, c)
                im += sin_part
            head = complex(re, im)
        hi = np.minimum(uniq[:-1], top)
        lo = uniq[1:]
        re_inc = -_log_panels(dens, lambda y: _one_minus_cos(theta * y), lo, hi, theta, brk)
        im_inc = _log_panels(dens, lambda y: np.sin(theta * y), lo, hi, theta, brk)
        acc += head + np.concatenate([[0j], np.cumsum(re_inc + 1j * im_inc)])
    if tail.has_atoms:
        loc, mass = tail._loc, tail._mass
        terms = mass * (-_one_minus_cos(theta * loc) + 1j * np.sin(theta * loc))
        suffix = np.concatenate([np.cumsum(terms[::-1])[::-1], [0j]])
        acc += suffix[np.searchsorted(loc, uniq, side="left")]
    idx = np.searchsorted(-uniq, -levels[finite])
    out[finite] = acc[idx]
    return out


# ---------------------------------------------------------------- public API

def _psi_parts(spec: LevyMeasureSpec, theta: float):
    """``(base, plus, minus)`` with ``Psi = base + plus + conj(minus)`` for ``theta > 0``."""
    base = complex(-0.5 * spec.sigma2 * theta * theta, theta * spec.gamma)
    return base, _side_psi(spec.tail_plus, theta), _side_psi(spec.tail_minus, theta)


def psi(spec: LevyMeasureSpec, theta):
    """Characteristic exponent ``Psi(theta)`` with truncation function ``1{|x| <= 1}``.

    Vectorized over ``theta``; ``Psi(-theta)`` is the conjugate of ``Psi(theta)``.
    """
    th = np.asarray(theta, dtype=float)
    out = np.zeros(th.shape, dtype=complex)
    for k, value in np.ndenumerate(th):
        if value == 0.0:
            continue
        base, plus, minus = _psi_parts(spec, abs(value))
        res = base + plus + minus.conjugate()
        out[k] = res if value > 0 else res.conjugate()
    return complex(out) if th.ndim == 0 else out


def _ties(spec: LevyMeasureSpec, v: np.ndarray, level: np.ndarray, kind: str):
    """Tie rates for many tail levels at once."""
    if kind == "modulus":
        mass_p = np.asarray(spec.tail_plus.atom_mass(level), dtype=float)
        mass_m = np.asarray(spec.tail_minus.atom_mass(level), dtype=float)
        mass = mass_p + mass_m
        excess = np.maximum(np.asarray(spec.tail_modulus.left_limit(level), dtype=float) - v, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return (np.where(mass > 0, excess * mass_p / mass, 0.0),
                    np.where(mass > 0, excess * mass_m / mass, 0.0))
    tail = spec.side(kind)
    has = np.asarray(tail.atom_mass(level), dtype=float) > 0
    rho = np.where(has, np.maximum(np.asarray(tail.left_limit(level), dtype=float) - v, 0.0), 0.0)
    return rho, np.zeros_like(rho)


def _truncated_sides(spec, theta, kind, v, u):
    """Per-side truncated exponents (plus, conj-minus) and tie terms at levels ``v`` (``u``)."""
    _, plus, minus = _psi_parts(spec, theta)
    v = np.atleast_1d(np.asarray(v, dtype=float)) if v is not None else None
    u = np.atleast_1d(np.asarray(u, dtype=float)) if u is not None else None
    if kind == "modulus":
        level = np.asarray(spec.tail_modulus.inverse(v), dtype=float)
        jp = _side_exp_above(spec.tail_plus, theta, level)
        jm = _side_exp_above(spec.tail_minus, theta, level)
        kp, km = _ties(spec, v, level, "modulus")
        tie = kp * (np.exp(1j * theta * level) - 1) + km * (np.exp(-1j * theta * level) - 1)
        return _clamp(plus - jp), _clamp(minus - jm).conjugate(), tie
    if kind != "asymmetric":
        raise ConfigError(f"unknown truncation kind {kind!r}")
    side_p = side_m = None
    if v is not None:
        lp = np.asarray(spec.tail_plus.inverse(v), dtype=float)
        rho_p, _ = _ties(spec, v, lp, "plus")
        side_p = (_clamp(plus - _side_exp_above(spec.tail_plus, theta, lp))
                  + rho_p * (np.exp(1j * theta * lp) - 1))
    if u is not None:
        lm = np.asarray(spec.tail_minus.inverse(u), dtype=float)
        rho_m, _ = _ties(spec, u, lm, "minus")
        side_m = (_clamp(minus - _side_exp_above(spec.tail_minus, theta, lm))
                  + rho_m * (np.exp(1j * theta * lm) - 1)).conjugate()
    return side_p, side_m, None


def _clamp(z):
    """Drop round-off that pushes ``int_{<L} (cos - 1) dPi`` above 0."""
    z = np.asarray(z, dtype=complex)
    return np.minimum(z.real, 0.0) + 1j * z.imag


def phi_trunc(spec: LevyMeasureSpec, theta: float, kind: str, v: float,
              u: float | None = None) -> complex:
    """Exponent of the truncated process plus tie terms.

    ``kind="modulus"``: jumps of modulus ``>= Pi_inv(v)`` removed, ties with
    rates ``kappa+/-(v)``.  ``kind="asymmetric"``: positive jumps
    ``>= Pi+_inv(v)`` and negative ones ``<= -Pi-_inv(u)`` removed, ties with
    ``rho+(v)``, ``rho-(u)``; a ``None`` level leaves that side untouched.
    """
    for val in (v, u):
        if val is not None and not val > 0:
            raise ConfigError("truncation levels must be positive")
    if theta == 0.0:
        return 0j
    th = abs(float(theta))
    base, plus, minus = _psi_parts(spec, th)
    if kind == "modulus":
        p, m, tie = _truncated_sides(spec, th, "modulus", v, None)
        res = base + complex(p[0]) + complex(m[0]) + complex(tie[0])
    else:
        p, m, _ = _truncated_sides(spec, th, "asymmetric", v, u)
        res = (base + (complex(p[0]) if p is not None else plus)
               + (complex(m[0]) if m is not None else minus.conjugate()))
    return res if theta > 0 else res.conjugate()


def gamma_nodes(r: int, cells: int = GAMMA_CELLS):
    """Probability nodes and weights for ``E g(Gamma_r)`` by quantile substitution.

    Midpoints of ``cells`` equal probability cells, with the two end cells
    replaced by Gauss-Legendre rules.  Returns ``(gamma_values, weights)``.
    """
    h = 1.0 / cells
    mids = (np.arange(1, cells - 1) + 0.5) * h
    x, w = np.polynomial.legendre.leggauss(END_NODES)
    lo = 0.5 * h * (x + 1.0)
    hi = 1.0 - h + 0.5 * h * (x + 1.0)
    p = np.concatenate([lo, mids, hi])
    weights = np.concatenate([0.5 * h * w, np.full(mids.size, h), 0.5 * h * w])
    return special.gammaincinv(r, p), weights


def charfn_trimmed(spec: LevyMeasureSpec, theta, t: float, mode: TrimMode = IDENTITY,
                   cells: int = GAMMA_CELLS):
    """Characteristic function of the trimmed value at time ``t``.

    ``E exp(t * Phi(theta, Gamma_r/t))`` by quadrature against the law of
    ``Gamma_r`` (asymmetric mode: the product of the two one-sided averages,
    since the exponent separates into a plus and a minus part).  ``r = s = 0``
    gives ``exp(t * Psi(theta))``.  Vectorized over ``theta``.

    Raises
    ------
    NumericFailure
        If a computed modulus exceeds ``1 + 1e-6``.
    """
    if not t > 0:
        raise ConfigError("time horizon must be positive")
    mode.check_spec(spec)
    th_arr = np.asarray(theta, dtype=float)
    out = np.ones(th_arr.shape, dtype=complex)
    for k, value in np.ndenumerate(th_arr):
        if value == 0.0:
            continue
        th = abs(float(value))
        res = _charfn_positive(spec, th, t, mode, cells)
        if abs(res) > 1.0 + MODULUS_SLACK:
            raise NumericFailure(f"|charfn| = {abs(res):.9g} exceeds 1 at theta={value}",
                                 (value, abs(res)))
        out[k] = res if value > 0 else res.conjugate()
    return complex(out) if th_arr.ndim == 0 else out


def _charfn_positive(spec, th, t, mode, cells) -> complex:
    base, plus, minus = _psi_parts(spec, th)
    if mode.kind == "modulus":
        if mode.r == 0:
            return complex(np.exp(t * (base + plus + minus.conjugate())))
        g, w = gamma_nodes(mode.r, cells)
        p, m, tie = _truncated_sides(spec, th, "modulus", g / t, None)
        return complex(np.sum(w * np.exp(t * (base + p + m + tie))))
    total = np.exp(t * base)
    if mode.r:
        g, w = gamma_nodes(mode.r, cells)
        p, _, _ = _truncated_sides(spec, th, "asymmetric", g / t, None)
        total *= np.sum(w * np.exp(t * p))
    else:
        total *= np.exp(t * plus)
    if mode.s:
        g, w = gamma_nodes(mode.s, cells)
        _, m, _ = _truncated_sides(spec, th, "asymmetric", None, g / t)
        total *= np.sum(w * np.exp(t * m))
    else:
        total *= np.exp(t * minus.conjugate())
    return complex(total)

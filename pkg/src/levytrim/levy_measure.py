"""Lévy measures as first-class objects.

A measure is described by its drift ``gamma``, Gaussian variance ``sigma2`` and
two one-sided tails ``Pi+(x) = Pi((x, inf))`` and ``Pi-(x) = Pi((-inf, -x))``.
Each tail is a :class:`TailFunction`: an optional continuous part (tail, density
and optional closed-form moments) plus a finite list of atoms.

Conventions used throughout the package:

* the right-continuous inverse of a nonincreasing ``f`` is
  ``f_inv(v) = inf{y > 0 : f(y) <= v}``;
* ``nu(x) = gamma - int_{x<|y|<=1} y Pi(dy)`` and
  ``V(x) = sigma2 + int_{|y|<=x} y**2 Pi(dy)``.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import integrate

from . import _closed_forms as cf
from .errors import ConfigError, NumericFailure, UnsupportedMeasureError

#: Smallest and largest levels considered by numeric inversion.
LEVEL_FLOOR = 1e-300
LEVEL_CEIL = 1e300
#: Relative tolerance on the level returned by numeric inversion.
INVERSE_RTOL = 1e-12
INVERSE_MAX_STEPS = 200
#: Relative tolerance of adaptive quadrature fallbacks.
QUAD_RTOL = 1e-10

Array = np.ndarray
VecFn = Callable[[Array], Array]


def _arr(x) -> Array:
    return np.asarray(x, dtype=float)


def _out(value: Array, like) -> Any:
    """Return a Python float for scalar input, an array otherwise."""
    if np.ndim(like) == 0:
        return float(np.asarray(value).reshape(-1)[0]) if np.size(value) else float("nan")
    return value


def quad_moment(density: VecFn, power: int, lo: float, hi: float,
                breakpoints: tuple = ()) -> float:
    """``int_lo^hi y**power density(y) dy`` by adaptive quadrature.

    Pieces touching 0 or infinity are mapped to ``(0, inf)`` in ``s`` through
    ``y = b*exp(-s)`` or ``y = a*exp(s)``, which removes the power singularity
    at 0 of every catalog density.
    """
    if not hi > lo:
        return 0.0
    cuts = [lo] + [b for b in sorted(breakpoints) if lo < b < hi] + [hi]
    total = 0.0

    def scalar(f, y):
        return float(np.asarray(f(np.asarray([y])))[0])

    for a, b in zip(cuts[:-1], cuts[1:]):
        if a <= 0.0:
            def g(s, b=b):
                y = b * math.exp(-s)
                return y ** (power + 1) * scalar(density, y) if y > 0 else 0.0
            lo_s, hi_s = 0.0, np.inf
        else:
            def g(s, a=a):
                if s > 700.0:
                    return 0.0
                y = a * math.exp(s)
                return y ** (power + 1) * scalar(density, y)
            lo_s, hi_s = 0.0, (np.inf if np.isinf(b) else math.log(b / a))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(g, lo_s, hi_s, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
        total += val
    return total


@dataclass(frozen=True, eq=False)
class TailFunction:
    """One-sided tail ``x -> Pi((x, inf))`` of a measure on ``(0, inf)``.

    Parameters
    ----------
    continuous : callable, optional
        Tail of the atomless part (vectorized, continuous, nonincreasing).
    density : callable, optional
        Density of the atomless part.
    atoms : sequence of (location, mass)
        Point masses; locations must be distinct and positive.
    analytic_inverse : callable, optional
        Vectorized closed form of the right-continuous inverse of the whole tail.
    m1_above : callable, optional
        Closed form of ``int_(a,1] y density(y) dy`` (atomless part only).
    m2_below : callable, optional
        Closed form of ``int_(0,x] y**2 density(y) dy`` (atomless part only).
    support_max : float
        The atomless part puts no mass above this level.
    breakpoints : tuple of float
        Levels where the density is discontinuous (split points for quadrature).
    infinite_activity : bool
        Whether the tail diverges at ``0+``.
    """

    continuous: VecFn | None = None
    density: VecFn | None = None
    atoms: tuple = ()
    analytic_inverse: VecFn | None = None
    m1_above: VecFn | None = None
    m2_below: VecFn | None = None
    support_max: float = np.inf
    breakpoints: tuple = ()
    infinite_activity: bool = False
    _loc: Array = field(init=False, repr=False)
    _mass: Array = field(init=False, repr=False)
    _suffix: Array = field(init=False, repr=False)
    _p1: Array = field(init=False, repr=False)
    _p2: Array = field(init=False, repr=False)

    def __post_init__(self):
        pairs = sorted((float(a), float(m)) for a, m in self.atoms if float(m) > 0.0)
        loc = np.array([a for a, _ in pairs], dtype=float)
        mass = np.array([m for _, m in pairs], dtype=float)
        if loc.size and (loc[0] <= 0 or np.any(np.diff(loc) <= 0)):
            raise ConfigError("atom locations must be positive and distinct")
        object.__setattr__(self, "atoms", tuple(pairs))
        object.__setattr__(self, "_loc", loc)
        object.__setattr__(self, "_mass", mass)
        suffix = np.zeros(loc.size + 1)
        suffix[:-1] = np.cumsum(mass[::-1])[::-1]
        object.__setattr__(self, "_suffix", suffix)
        object.__setattr__(self, "_p1", np.concatenate([[0.0], np.cumsum(loc * mass)]))
        object.__setattr__(self, "_p2", np.concatenate([[0.0], np.cumsum(loc * loc * mass)]))
        if self.continuous is None and self.density is not None:
            raise ConfigError("a density requires the matching continuous tail")

    # ---------------------------------------------------------------- evaluation
    @property
    def has_atoms(self) -> bool:
        return self._loc.size > 0

    @property
    def has_continuous(self) -> bool:
        return self.continuous is not None

    def _cont(self, x: Array) -> Array:
        if self.continuous is None:
            return np.zeros(x.shape)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.asarray(self.continuous(x), dtype=float)

    def evaluate(self, x):
        """Tail mass ``Pi((x, inf))``."""
        xa = _arr(x)
        val = self._cont(xa)
        if self.has_atoms:
            val = val + self._suffix[np.searchsorted(self._loc, xa, side="right")]
        return _out(val, x)

    __call__ = evaluate

    def left_limit(self, x):
        """Tail mass at ``x-``, i.e. ``Pi([x, inf))``."""
        xa = _arr(x)
        val = self._cont(xa)
        if self.has_atoms:
            val = val + self._suffix[np.searchsorted(self._loc, xa, side="left")]
        return _out(val, x)

    def atom_mass(self, x):
        """Mass of the atom at ``x`` (0 if ``x`` is not an atom)."""
        xa = _arr(x)
        if not self.has_atoms:
            return _out(np.zeros(xa.shape), x)
        idx = np.searchsorted(self._loc, xa, side="left")
        hit = idx < self._loc.size
        safe = np.minimum(idx, self._loc.size - 1)
        hit &= self._loc[safe] == xa
        return _out(np.where(hit, self._mass[safe], 0.0), x)

    def density_at(self, x):
        """Density of the atomless part (0 where there is none)."""
        xa = _arr(x)
        if self.density is None:
            return _out(np.zeros(xa.shape), x)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return _out(np.asarray(self.density(xa), dtype=float), x)

    @property
    def total_mass(self) -> float:
        """``Pi((0, inf))``; infinite for infinite-activity tails."""
        if self.infinite_activity:
            return np.inf
        cont = float(self._cont(np.array([0.0]))[0]) if self.has_continuous else 0.0
        return cont + float(self._suffix[0])

    # ---------------------------------------------------------------- moments
    def _need_density(self, what: str):
        if self.density is None:
            raise UnsupportedMeasureError(f"{what} needs a density or a closed form")

    def first_moment_above(self, a):
        """``int_(a,1] y Pi(dy)`` (0 for ``a >= 1``)."""
        aa = _arr(a)
        val = np.zeros(aa.shape)
        if self.has_continuous:
            if self.m1_above is not None:
                val = val + np.asarray(self.m1_above(aa), dtype=float)
            else:
                self._need_density("first moment")
                top = min(1.0, self.support_max)
                flat = aa.reshape(-1)
                res = np.array([quad_moment(self.density, 1, float(q), top, self.breakpoints)
                                if q < top else 0.0 for q in flat])
                val = val + res.reshape(aa.shape)
        if self.has_atoms:
            hi = self._p1[np.searchsorted(self._loc, 1.0, side="right")]
            lo = self._p1[np.searchsorted(self._loc, np.minimum(aa, 1.0), side="right")]
            val = val + (hi - lo)
        return _out(val, a)

    def second_moment_below(self, x):
        """``int_(0,x] y**2 Pi(dy)``."""
        xa = _arr(x)
        val = np.zeros(xa.shape)
        if self.has_continuous:
            if self.m2_below is not None:
                val = val + np.asarray(self.m2_below(xa), dtype=float)
            else:
                self._need_density("second moment")
                flat = xa.reshape(-1)
                res = np.array([quad_moment(self.density, 2, 0.0, float(min(q, self.support_max)),
                                            self.breakpoints) for q in flat])
                val = val + res.reshape(xa.shape)
        if self.has_atoms:
            val = val + self._p2[np.searchsorted(self._loc, xa, side="right")]
        return _out(val, x)

    # ---------------------------------------------------------------- inverse
    def inverse(self, v):
        """Right-continuous inverse ``inf{y > 0 : tail(y) <= v}`` (vectorized)."""
        va = _arr(v)
        if self.analytic_inverse is not None:
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                res = np.asarray(self.analytic_inverse(va), dtype=float)
            res = np.where(np.isfinite(res), np.maximum(res, 0.0), res)
            if self.infinite_activity:
                # Levels below the floor are not representable; clamp like the
                # numeric inversion does.
                res = np.where((res < LEVEL_FLOOR) & (va < self.total_mass), LEVEL_FLOOR, res)
            return _out(res, v)
        return _out(_numeric_inverse(self, va), v)

    # ---------------------------------------------------------------- transforms
    def times(self, k: float) -> "TailFunction":
        """The tail of the measure ``k * Pi``."""
        k = float(k)
        if k <= 0:
            return ZERO_TAIL

        def scale(f):
            return None if f is None else (lambda x, f=f: k * np.asarray(f(x), dtype=float))

        inv = None
        if self.analytic_inverse is not None:
            inv = lambda v, f=self.analytic_inverse: f(np.asarray(v, dtype=float) / k)
        return TailFunction(
            continuous=scale(self.continuous), density=scale(self.density),
            atoms=tuple((a, k * m) for a, m in self.atoms), analytic_inverse=inv,
            m1_above=scale(self.m1_above), m2_below=scale(self.m2_below),
            support_max=self.support_max, breakpoints=self.breakpoints,
            infinite_activity=self.infinite_activity)

    def dilate(self, c: float) -> "TailFunction":
        """The tail of the image of ``Pi`` under ``y -> c*y``."""
        c = float(c)
        if c <= 0:
            raise ConfigError("dilation factor must be positive")
        cont = None if self.continuous is None else (
            lambda x, f=self.continuous: f(np.asarray(x, dtype=float) / c))
        dens = None if self.density is None else (
            lambda x, f=self.density: np.asarray(f(np.asarray(x, dtype=float) / c)) / c)
        inv = None if self.analytic_inverse is None else (
            lambda v, f=self.analytic_inverse: c * np.asarray(f(v), dtype=float))
        m2 = None if self.m2_below is None else (
            lambda x, f=self.m2_below: c * c * np.asarray(f(np.asarray(x, dtype=float) / c)))
        return TailFunction(
            continuous=cont, density=dens, atoms=tuple((c * a, m) for a, m in self.atoms),
            analytic_inverse=inv, m1_above=None, m2_below=m2,
            support_max=c * self.support_max, breakpoints=tuple(c * b for b in self.breakpoints),
            infinite_activity=self.infinite_activity)

    def restrict_below(self, level: float) -> "TailFunction":
        """The tail of ``Pi`` restricted to ``(0, level)`` (strict; an atom at ``level`` is dropped)."""
        level = float(level)
        if not level < np.inf:
            return self
        if level <= 0:
            return ZERO_TAIL
        cut = float(self.left_limit(level))
        cont = dens = m1 = m2 = None
        if self.continuous is not None:
            c_at = float(self._cont(np.array([level]))[0])
            cont = lambda x, f=self._cont: np.where(
                np.asarray(x) < level, f(np.asarray(x, dtype=float)) - c_at, 0.0)
        if self.density is not None:
            dens = lambda x, f=self.density: np.where(
                np.asarray(x) < level, np.asarray(f(np.asarray(x, dtype=float)), dtype=float), 0.0)
        if self.continuous is not None and self.m1_above is not None:
            m1 = lambda a, f=self.m1_above: (
                np.asarray(f(np.asarray(a, dtype=float)), dtype=float)
                - np.asarray(f(np.maximum(np.asarray(a, dtype=float), level)), dtype=float))
        if self.continuous is not None and self.m2_below is not None:
            m2 = lambda x, f=self.m2_below: np.asarray(
                f(np.minimum(np.asarray(x, dtype=float), level)), dtype=float)

        def inverse(v, orig=self.inverse):
            return orig(np.asarray(v, dtype=float) + cut)

        return TailFunction(
            continuous=cont, density=dens,
            atoms=tuple((a, m) for a, m in self.atoms if a < level),
            analytic_inverse=inverse, m1_above=m1, m2_below=m2,
            support_max=min(self.support_max, level),
            breakpoints=tuple(b for b in self.breakpoints if b < level),
            infinite_activity=self.infinite_activity)

    @staticmethod
    def sum(a: "TailFunction", b: "TailFunction",
            analytic_inverse: VecFn | None = None) -> "TailFunction":
        """Tail of the sum of two measures on ``(0, inf)``."""
        if not b.has_continuous and not b.has_atoms:
            if analytic_inverse is None:
                return a
        if not a.has_continuous and not a.has_atoms and analytic_inverse is None:
            return b
        merged: dict[float, float] = {}
        for loc, m in a.atoms + b.atoms:
            merged[loc] = merged.get(loc, 0.0) + m

        def add(f, g, zero_ok=True):
            if f is None and g is None:
                return None
            if f is None:
                return g
            if g is None:
                return f
            return lambda x, f=f, g=g: np.asarray(f(x), dtype=float) + np.asarray(g(x), dtype=float)

        def add_closed(name):
            fa, fb = getattr(a, name), getattr(b, name)
            if (a.has_continuous and fa is None) or (b.has_continuous and fb is None):
                return None
            return add(fa, fb)

        return TailFunction(
            continuous=add(a.continuous, b.continuous), density=add(a.density, b.density),
            atoms=tuple(sorted(merged.items())), analytic_inverse=analytic_inverse,
            m1_above=add_closed("m1_above"), m2_below=add_closed("m2_below"),
            support_max=max(a.support_max if a.has_continuous else 0.0,
                            b.support_max if b.has_continuous else 0.0),
            breakpoints=tuple(sorted(set(a.breakpoints) | set(b.breakpoints))),
            infinite_activity=a.infinite_activity or b.infinite_activity)


ZERO_TAIL = TailFunction(analytic_inverse=lambda v: np.zeros(np.shape(v)))


def _numeric_inverse(tail: TailFunction, v: Array) -> Array:
    """Newton-accelerated bisection in ``log y`` keeping an exact bracket.

    The bracket invariant is ``tail(exp(lo)) > v >= tail(exp(hi))``; the result is
    ``exp(hi)`` once ``hi - lo`` is below the relative tolerance, so the Galois
    property ``tail(result) <= v`` holds exactly.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape)
    flat_v = v.reshape(-1)
    res = np.zeros(flat_v.shape)
    lo_level = LEVEL_FLOOR
    ends = []
    if tail.has_continuous:
        ends.append(tail.support_max)
    if tail.has_atoms:
        ends.append(float(tail._loc[-1]))
    hi_level = min(LEVEL_CEIL, max(ends)) if ends else LEVEL_CEIL
    tail_lo = float(np.asarray(tail.evaluate(np.array([lo_level])))[0])
    tail_hi = float(np.asarray(tail.evaluate(np.array([hi_level])))[0])
    todo = np.ones(flat_v.shape, dtype=bool)
    # Everything qualifies: the infimum is 0 for finite total mass, else the floor.
    allq = flat_v >= tail_lo
    if np.any(allq):
        total = tail.total_mass
        res[allq] = np.where(flat_v[allq] >= total, 0.0, lo_level)
        todo &= ~allq
    if np.any(todo & (flat_v < tail_hi)):
        raise NumericFailure("tail inverse bracket does not contain the level",
                             (lo_level, hi_level))
    idx = np.nonzero(todo)[0]
    if idx.size == 0:
        return res.reshape(v.shape) if v.ndim else res.reshape(())
    vv = flat_v[idx]
    lo = np.full(idx.size, math.log(lo_level))
    hi = np.full(idx.size, math.log(hi_level))
    u = 0.5 * (lo + hi)
    tol = INVERSE_RTOL
    delta = tol / 4.0
    has_density = tail.density is not None
    active = np.arange(idx.size)
    for _ in range(INVERSE_MAX_STEPS):
        ua = u[active]
        x = np.exp(ua)
        tv = np.asarray(tail.evaluate(x), dtype=float)
        above = tv > vv[active]
        lo[active] = np.where(above, ua, lo[active])
        hi[active] = np.where(above, hi[active], ua)
        width = hi[active] - lo[active]
        done = width <= tol
        prop = 0.5 * (lo[active] + hi[active])
        if has_density:
            # Newton on log(tail) against log(u): exact in one step for power laws.
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                slope = -x * np.asarray(tail.density_at(x), dtype=float) / tv
                step = -(np.log(tv) - np.log(vv[active])) / slope
            valid = np.isfinite(step) & np.isfinite(slope) & (slope < 0)
            close = valid & (np.abs(step) < delta)
            newton = np.where(close, np.where(above, ua + delta, ua - delta), ua + step)
            ok = valid & (newton > lo[active]) & (newton < hi[active])
            prop = np.where(ok, newton, prop)
        u[active] = prop
        active = active[~done]
        if active.size == 0:
            break
    else:
        k = int(active[0])
        raise NumericFailure("tail inverse did not converge",
                             (float(np.exp(lo[k])), float(np.exp(hi[k]))))
    res[idx] = np.exp(hi)
    return res.reshape(v.shape)


def inverse_tail(tail: TailFunction, v):
    """Right-continuous inverse ``inf{y > 0 : tail(y) <= v}``.

    Parameters
    ----------
    tail : TailFunction
    v : float or array_like
        Positive levels of tail mass.

    Returns
    -------
    float or ndarray
        Uses ``tail.analytic_inverse`` when present, numeric inversion otherwise.
        Levels exceeding the total mass of a finite-activity tail map to 0.
    """
    va = _arr(v)
    if np.any(~(va > 0)):
        raise ConfigError("inverse_tail needs v > 0")
    return tail.inverse(v)


# ====================================================================== specs

@dataclass(frozen=True)
class TruncatedMoments:
    """Truncated mean ``nu`` and second moment ``big_v`` of a spec, as callables."""

    spec: "LevyMeasureSpec"

    def nu(self, x):
        return self.spec.nu(x)

    def big_v(self, x):
        return self.spec.big_v(x)


@dataclass(frozen=True, eq=False)
class LevyMeasureSpec:
    """Lévy triplet ``(gamma, sigma2, Pi)`` with one-sided tails.

    Parameters
    ----------
    gamma : float
        Drift relative to the truncation function ``1{|x| <= 1}``.
    sigma2 : float
        Gaussian variance.
    tail_plus, tail_minus : TailFunction
        Tails of the positive part and of the reflected negative part.
    name : str
        Catalog identifier or ``"custom"``.
    params : dict
        Parameters used to build the spec (for reporting).
    tail_modulus : TailFunction, optional
        Two-sided tail; built as the sum of the one-sided tails when omitted.
    """

    gamma: float
    sigma2: float
    tail_plus: TailFunction
    tail_minus: TailFunction
    name: str = "custom"
    params: dict = field(default_factory=dict)
    tail_modulus: TailFunction | None = None

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ConfigError("gamma must be finite")
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ConfigError("sigma2 must be finite and nonnegative")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if self.tail_modulus is None:
            object.__setattr__(self, "tail_modulus",
                               TailFunction.sum(self.tail_plus, self.tail_minus))

    # -- flags and accessors
    @property
    def density_plus(self):
        return self.tail_plus.density

    @property
    def density_minus(self):
        return self.tail_minus.density

    @property
    def infinite_activity_plus(self) -> bool:
        return self.tail_plus.infinite_activity

    @property
    def infinite_activity_minus(self) -> bool:
        return self.tail_minus.infinite_activity

    @property
    def infinite_activity(self) -> bool:
        return self.infinite_activity_plus or self.infinite_activity_minus

    def side(self, which: str) -> TailFunction:
        """Tail for ``"plus"``, ``"minus"`` or ``"modulus"``."""
        if which == "plus":
            return self.tail_plus
        if which == "minus":
            return self.tail_minus
        if which == "modulus":
            return self.tail_modulus
        raise ConfigError(f"unknown side {which!r}")

    # -- tails and moments
    def tail(self, x):
        """Two-sided tail ``Pi(|y| > x)``."""
        return self.tail_modulus.evaluate(x)

    def nu(self, x):
        """``gamma - int_{x<|y|<=1} y Pi(dy)``."""
        xa = _arr(x)
        inner = (np.asarray(self.tail_plus.first_moment_above(xa), dtype=float)
                 - np.asarray(self.tail_minus.first_moment_above(xa), dtype=float))
        return _out(self.gamma - inner, x)

    def big_v(self, x):
        """``sigma2 + int_{|y|<=x} y**2 Pi(dy)``."""
        xa = _arr(x)
        val = (self.sigma2 + np.asarray(self.tail_plus.second_moment_below(xa), dtype=float)
               + np.asarray(self.tail_minus.second_moment_below(xa), dtype=float))
        return _out(val, x)

    @property
    def moments(self) -> TruncatedMoments:
        return TruncatedMoments(self)

    def scaled(self, c: float) -> "LevyMeasureSpec":
        """Spec of ``c * X``: jumps dilated by ``c``, ``sigma2`` times ``c**2``."""
        plus, minus = self.tail_plus.dilate(c), self.tail_minus.dilate(c)
        gamma = c * float(self.nu(1.0 / c))
        return LevyMeasureSpec(gamma, c * c * self.sigma2, plus, minus,
                               name=f"{self.name}*{c:g}", params=dict(self.params))

    def describe(self) -> dict:
        """JSON-friendly summary with a few tail values."""
        grid = [1e-3, 1e-2, 1e-1, 1.0, 10.0]
        return {
            "name": self.name,
            "params": dict(self.params),
            "gamma": self.gamma,
            "sigma2": self.sigma2,
            "infinite_activity_plus": self.infinite_activity_plus,
            "infinite_activity_minus": self.infinite_activity_minus,
            "atoms_plus": len(self.tail_plus.atoms),
            "atoms_minus": len(self.tail_minus.atoms),
            "tail_plus": {f"{x:g}": float(self.tail_plus.evaluate(x)) for x in grid},
            "tail_minus": {f"{x:g}": float(self.tail_minus.evaluate(x)) for x in grid},
            "nu": {f"{x:g}": float(self.nu(x)) for x in grid},
            "big_v": {f"{x:g}": float(self.big_v(x)) for x in grid},
        }


def truncated_moments(spec: LevyMeasureSpec, x) -> tuple:
    """Return ``(nu(x), V(x))`` for the spec."""
    if np.any(~(_arr(x) > 0)):
        raise ConfigError("truncated_moments needs x > 0")
    return spec.nu(x), spec.big_v(x)


def tie_rates(spec: LevyMeasureSpec, v, mode: str) -> tuple:
    """Poisson rates of tied jumps at the truncation level.

    Parameters
    ----------
    spec : LevyMeasureSpec
    v : float
        Positive tail level.
    mode : {"plus", "minus", "modulus"}
        One-sided modes return ``(rho, 0.0)`` with
        ``rho = Pi_side(L-) - v`` at ``L = inverse(v)``.  The modulus mode splits
        ``Pi(L-) - v`` between the signs in proportion to the atom masses at
        ``+L`` and ``-L``.  All rates vanish when ``L`` is not an atom.
    """
    if not v > 0:
        raise ConfigError("tie_rates needs v > 0")
    if mode in ("plus", "one-sided-plus", "minus", "one-sided-minus"):
        side = spec.tail_plus if mode.endswith("plus") else spec.tail_minus
        level = side.inverse(v)
        if level <= 0 or side.atom_mass(level) <= 0:
            return 0.0, 0.0
        return max(side.left_limit(level) - v, 0.0), 0.0
    if mode != "modulus":
        raise ConfigError(f"unknown tie mode {mode!r}")
    level = spec.tail_modulus.inverse(v)
    if level <= 0:
        return 0.0, 0.0
    mass = spec.tail_modulus.atom_mass(level)
    if mass <= 0:
        return 0.0, 0.0
    excess = max(spec.tail_modulus.left_limit(level) - v, 0.0)
    return (excess * spec.tail_plus.atom_mass(level) / mass,
            excess * spec.tail_minus.atom_mass(level) / mass)


# ====================================================================== catalog

def power_tail(scale: float, alpha: float) -> TailFunction:
    """``scale * x**-alpha`` with ``0 < alpha < 2``."""
    return piecewise_power_tail([1.0], [scale], alpha_below=alpha, alpha_above=alpha)


def piecewise_power_tail(xs, values, alpha_below: float | None = None,
                         alpha_above: float | None = None) -> TailFunction:
    """Tail that is linear in log-log coordinates between table points.

    Between consecutive points ``(x_i, T_i)`` the tail is
    ``T_i * (y/x_i)**-a_i`` with ``a_i = log(T_i/T_{i+1}) / log(x_{i+1}/x_i)``.
    Below ``x_1`` and above ``x_n`` the first and last slopes are extended unless
    ``alpha_below``/``alpha_above`` are given.  The tail must be integrable
    at 0 only when the slope below the table is less than 2; the last slope must
    be positive so the tail vanishes at infinity.
    """
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.size == 0 or xs.size != ts.size:
        raise ConfigError("power table needs matching nonempty x and tail lists")
    if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
        raise ConfigError("power table levels must be positive and increasing")
    if np.any(ts <= 0) or np.any(np.diff(ts) > 0):
        raise ConfigError("power table tail values must be positive and nonincreasing")
    inner = -np.diff(np.log(ts)) / np.diff(np.log(xs))
    if alpha_below is None:
        if inner.size == 0:
            raise ConfigError("a single-point power table needs explicit slopes")
        alpha_below = float(inner[0])
    if alpha_above is None:
        if inner.size == 0:
            raise ConfigError("a single-point power table needs explicit slopes")
        alpha_above = float(inner[-1])
    alphas = np.concatenate([[alpha_below], inner, [alpha_above]])
    if not alphas[0] >= 0:
        raise ConfigError("slope below the table must be nonnegative")
    if not alphas[-1] > 0:
        raise ConfigError("slope above the table must be positive")
    # region j covers [edge_j, edge_{j+1}); anchors (x, T) per region
    ax = np.concatenate([[xs[0]], xs])
    at = np.concatenate([[ts[0]], ts])
    edges = np.concatenate([[0.0], xs, [np.inf]])

    def region(y):
        return np.searchsorted(xs, y, side="right")

    def tail(y):
        y = np.asarray(y, dtype=float)
        j = region(y)
        with np.errstate(divide="ignore", over="ignore"):
            return at[j] * (y / ax[j]) ** (-alphas[j])

    def dens(y):
        y = np.asarray(y, dtype=float)
        j = region(y)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return alphas[j] * at[j] * (y / ax[j]) ** (-alphas[j]) / y

    def inverse(v):
        v = np.asarray(v, dtype=float)
        k = np.sum(ts[None, :] > v.reshape(-1, 1), axis=1).reshape(v.shape)
        a = alphas[k]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            y = ax[k] * (v / at[k]) ** (-1.0 / np.where(a > 0, a, 1.0))
        return np.where((k == 0) & (alphas[0] == 0), 0.0, y)

    def moment(p, lo, hi):
        """``int_lo^hi y**p dens(y) dy`` summed over regions (vectorized in lo/hi)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        total = np.zeros(np.broadcast(lo, hi).shape)
        for j in range(alphas.size):
            a = alphas[j]
            if a == 0:
                continue
            l = np.clip(lo, edges[j], edges[j + 1])
            h = np.clip(hi, edges[j], edges[j + 1])
            coef = a * at[j] * ax[j] ** a
            e = p - a
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                if e == 0:
                    part = coef * (np.log(h) - np.log(l))
                else:
                    part = coef * (np.where(np.isinf(h), 0.0 if e < 0 else np.inf, h ** e)
                                   - np.where(l > 0, l ** e, 0.0)) / e
            total += np.where(h > l, part, 0.0)
        return total

    return TailFunction(
        continuous=tail, density=dens, analytic_inverse=inverse,
        m1_above=lambda a: np.where(np.asarray(a) < 1.0, moment(1, a, 1.0), 0.0),
        m2_below=lambda x: moment(2, 0.0, x),
        breakpoints=tuple(float(b) for b in xs), infinite_activity=alphas[0] > 0)


def step_tail(xs, values) -> TailFunction:
    """Purely atomic tail: ``values[i]`` on ``[xs[i-1], xs[i])`` with ``xs[-1] = 0``.

    Equivalently, atoms at ``xs[i]`` with mass ``values[i] - values[i+1]``
    (``values[n] = 0``); the tail is 0 from ``xs[-1]`` on.
    """
    xs = np.asarray(xs, dtype=float)
    ts = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.size == 0 or xs.size != ts.size:
        raise ConfigError("step table needs matching nonempty x and tail lists")
    if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
        raise ConfigError("step table levels must be positive and increasing")
    if np.any(ts <= 0) or np.any(np.diff(ts) > 0):
        raise ConfigError("step table tail values must be positive and nonincreasing")
    masses = ts - np.concatenate([ts[1:], [0.0]])
    return TailFunction(atoms=tuple((float(a), float(m)) for a, m in zip(xs, masses) if m > 0))


def e1_tail(scale: float = 1.0) -> TailFunction:
    """``scale * E1(x)``, the tail of the density ``scale * exp(-y)/y``."""
    from scipy import special
    return TailFunction(
        continuous=special.exp1, density=cf.e1_density, analytic_inverse=cf.e1_inverse,
        m1_above=cf.e1_m1_above, m2_below=cf.e1_m2_below, infinite_activity=True,
    ).times(scale)


def logdoa_tail() -> TailFunction:
    return TailFunction(
        continuous=cf.logdoa_tail, density=cf.logdoa_density, m1_above=cf.logdoa_m1_above,
        m2_below=cf.logdoa_m2_below, support_max=1.0, infinite_activity=True)


def relstable_tail() -> TailFunction:
    return TailFunction(
        continuous=cf.relstable_tail, density=cf.relstable_density,
        analytic_inverse=cf.relstable_inverse, m1_above=cf.relstable_m1_above,
        m2_below=cf.relstable_m2_below, support_max=1.0,
        breakpoints=(float(np.exp(-1.0)),), infinite_activity=True)


#: Number of comb atoms is ``COMB_DEPTH + 1`` (levels 1, 1/2, ..., 2**-COMB_DEPTH).
COMB_DEPTH = 1000


def comb_tail(weight: float) -> TailFunction:
    """Atoms of mass ``weight * 2**k`` at ``2**-k`` for ``k = 0..COMB_DEPTH``."""
    if weight <= 0:
        return ZERO_TAIL
    ks = np.arange(COMB_DEPTH + 1)
    masses = weight * np.exp2(ks)
    atoms = tuple((float(2.0 ** -k), float(m)) for k, m in zip(ks, masses))
    # levels[m] is the tail at 2**-m, accumulated in the same order as
    # TailFunction's suffix sums so the inverse agrees with evaluate() bit for bit.
    levels = np.concatenate([[0.0], np.cumsum(masses)])

    def inverse(v):
        v = np.asarray(v, dtype=float)
        m = np.searchsorted(levels, v, side="right") - 1
        return np.where(m > COMB_DEPTH, 0.0, np.exp2(-np.minimum(m, COMB_DEPTH).astype(float)))

    return TailFunction(atoms=atoms, analytic_inverse=inverse, infinite_activity=True)


def _symmetric(side: TailFunction, modulus_inverse: VecFn | None) -> tuple:
    both = side.times(2.0)
    if modulus_inverse is not None:
        both = TailFunction(
            continuous=both.continuous, density=both.density, atoms=both.atoms,
            analytic_inverse=modulus_inverse, m1_above=both.m1_above,
            m2_below=both.m2_below, support_max=both.support_max,
            breakpoints=both.breakpoints, infinite_activity=both.infinite_activity)
    return side, side, both


def _param(params: Mapping, key: str, default, lo=None, hi=None, lo_open=True, hi_open=True):
    value = params.get(key, default)
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be a number") from None
    if not np.isfinite(value):
        raise ConfigError(f"parameter {key!r} must be finite")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"parameter {key!r}={value} out of range")
    if hi is not None and (value > hi or (hi_open and value == hi)):
        raise ConfigError(f"parameter {key!r}={value} out of range")
    return value


def _build_symmetric_stable(p):
    alpha = _param(p, "alpha", 1.0, 0.0, 2.0)
    scale = _param(p, "scale", 1.0, 0.0)
    side = power_tail(scale, alpha)
    plus, minus, mod = _symmetric(side, None)
    return 0.0, 0.0, plus, minus, mod, {"alpha": alpha, "scale": scale}


def _build_gamma_type(p, sigma2_default=0.0):
    scale = _param(p, "scale", 1.0, 0.0)
    sigma2 = _param(p, "sigma2", sigma2_default, 0.0, lo_open=False)
    side = e1_tail(scale)
    plus, minus, mod = _symmetric(side, lambda v: cf.e1_inverse(np.asarray(v) / (2.0 * scale)))
    return 0.0, sigma2, plus, minus, mod, {"scale": scale, "sigma2": sigma2}


def _build_gamma_subordinator(p):
    scale = _param(p, "scale", 1.0, 0.0)
    plus = e1_tail(scale)
    gamma = scale * (1.0 - math.exp(-1.0))
    return gamma, 0.0, plus, ZERO_TAIL, plus, {"scale": scale}


def _build_log_doa(p):
    side = logdoa_tail()
    plus, minus, mod = _symmetric(side, None)
    return 0.0, 0.0, plus, minus, mod, {}


def _build_relstable(p):
    plus = relstable_tail()
    return cf.RELSTABLE_MEAN, 0.0, plus, ZERO_TAIL, plus, {}


def _build_comb(p):
    c = _param(p, "c", 1.0, 0.0)
    w = _param(p, "plus_weight", 2.0 / 3.0, 0.0, 1.0, lo_open=False, hi_open=False)
    plus, minus = comb_tail(w * c), comb_tail((1.0 - w) * c)
    mod = comb_tail(c)
    # Use the exact two-sided atoms; the closed-form inverse comes from comb_tail(c).
    mod = TailFunction(atoms=TailFunction.sum(plus, minus).atoms,
                       analytic_inverse=mod.analytic_inverse, infinite_activity=True)
    return 0.0, 0.0, plus, minus, mod, {"c": c, "plus_weight": w}


_BUILDERS = {
    "symmetric-stable": (_build_symmetric_stable,
                         "density alpha*scale*|y|^(-alpha-1) on both sides, 0<alpha<2"),
    "gamma-type": (_build_gamma_type, "two-sided density |y|^-1 exp(-|y|)"),
    "gamma-subordinator": (_build_gamma_subordinator,
                           "density y^-1 exp(-y) on y>0, driftless"),
    "log-doa": (_build_log_doa, "two-sided density |y|^-3 log(e/|y|)^-2 on 0<|y|<1"),
    "relative-stable-subordinator": (
        _build_relstable,
        "tail x^-1 log(e/x)^-2 on (0,1/e], linear to 0 on (1/e,1], driftless"),
    "atomic-comb": (_build_comb,
                    "atoms at 2^-k with total mass c*2^k, split plus_weight : 1-plus_weight"),
    "gaussian-plus-gamma": (lambda p: _build_gamma_type(p, sigma2_default=1.0),
                            "sigma2=1 plus two-sided gamma-type jumps"),
}

CATALOG_NAMES = tuple(_BUILDERS)


def catalog_descriptions() -> dict:
    """Map of catalog names to one-line descriptions."""
    return {name: desc for name, (_, desc) in _BUILDERS.items()}


def catalog(name: str, params: Mapping | None = None) -> LevyMeasureSpec:
    """Build a catalog measure.

    Parameters
    ----------
    name : str
        One of :data:`CATALOG_NAMES`.
    params : mapping, optional
        Catalog parameters (``alpha``, ``scale``, ``sigma2``, ``c``, ``plus_weight``).

    Raises
    ------
    ConfigError
        Unknown name, unknown parameter or parameter out of range.
    """
    params = dict(params or {})
    if name not in _BUILDERS:
        raise ConfigError(f"unknown catalog measure {name!r}; choose from {', '.join(CATALOG_NAMES)}")
    builder = _BUILDERS[name][0]
    gamma, sigma2, plus, minus, mod, used = builder(params)
    unknown = set(params) - set(used)
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    return LevyMeasureSpec(gamma, sigma2, plus, minus, name=name, params=used, tail_modulus=mod)


# ====================================================================== JSON schema

def _tail_from_json(obj: Mapping | None) -> TailFunction:
    if obj is None:
        return ZERO_TAIL
    if not isinstance(obj, Mapping) or "kind" not in obj:
        raise ConfigError("tail descriptions need a 'kind' field")
    kind = obj["kind"]
    if kind == "zero":
        return ZERO_TAIL
    if kind == "powerlaw":
        scale = _param(obj, "scale", 1.0, 0.0)
        alpha = _param(obj, "alpha", 1.0, 0.0, 2.0)
        return power_tail(scale, alpha)
    if kind == "gamma":
        return e1_tail(_param(obj, "scale", 1.0, 0.0))
    if kind == "table":
        pts = obj.get("points")
        if not isinstance(pts, list) or not pts or any(
                not isinstance(p, (list, tuple)) or len(p) != 2 for p in pts):
            raise ConfigError("table tails need 'points': [[x, tail], ...]")
        xs = [float(p[0]) for p in pts]
        ts = [float(p[1]) for p in pts]
        interp = obj.get("interpolation", "step")
        if interp == "step":
            return step_tail(xs, ts)
        if interp == "loglinear":
            below = obj.get("alpha_below")
            above = obj.get("alpha_above")
            tail = piecewise_power_tail(xs, ts, None if below is None else float(below),
                                        None if above is None else float(above))
            if not np.isfinite(tail.second_moment_below(min(xs[0], 1.0))):
                raise ConfigError("loglinear table is not square integrable at 0 (slope >= 2)")
            return tail
        raise ConfigError(f"unknown table interpolation {interp!r}")
    raise ConfigError(f"unknown tail kind {kind!r}")


def measure_from_json(obj: Any) -> LevyMeasureSpec:
    """Build a spec from the JSON measure schema.

    Two forms are accepted::

        {"name": "<catalog id>", "params": {...}}
        {"custom": {"gamma": g, "sigma2": s,
                    "tail_plus": <tail>, "tail_minus": <tail>}}

    A ``<tail>`` is one of ``{"kind": "zero"}``, ``{"kind": "powerlaw",
    "scale": c, "alpha": a}`` (tail ``c*x**-a``), ``{"kind": "gamma", "scale": c}``
    (tail ``c*E1(x)``) or ``{"kind": "table", "points": [[x1, T1], ...],
    "interpolation": "step" | "loglinear"}``.  A step table takes the value
    ``T_i`` on ``[x_{i-1}, x_i)`` (``x_0 = 0``) and 0 from ``x_n`` on.  A loglinear
    table is ``T_i*(y/x_i)**-a_i`` on ``[x_i, x_{i+1})`` with ``a_i`` the log-log
    slope between the points, extended beyond the ends with the end slopes
    (overridable by ``alpha_below``/``alpha_above``).
    """
    if isinstance(obj, str):
        return catalog(obj)
    if not isinstance(obj, Mapping):
        raise ConfigError("measure JSON must be an object")
    if "name" in obj:
        params = obj.get("params", {}) or {}
        if not isinstance(params, Mapping):
            raise ConfigError("'params' must be an object")
        return catalog(str(obj["name"]), params)
    if "custom" in obj:
        c = obj["custom"]
        if not isinstance(c, Mapping):
            raise ConfigError("'custom' must be an object")
        gamma = _param(c, "gamma", 0.0)
        sigma2 = _param(c, "sigma2", 0.0, 0.0, lo_open=False)
        plus = _tail_from_json(c.get("tail_plus"))
        minus = _tail_from_json(c.get("tail_minus"))
        return LevyMeasureSpec(gamma, sigma2, plus, minus, name="custom",
                               params={"json": json.dumps(c, sort_keys=True)})
    raise ConfigError("measure JSON needs a 'name' or a 'custom' field")


def load_measure(text: str, params: Mapping | None = None) -> LevyMeasureSpec:
    """Resolve a measure argument: catalog name, inline JSON or path to a JSON file."""
    text = text.strip()
    if text in _BUILDERS:
        return catalog(text, params)
    if text.startswith("{"):
        try:
            return measure_from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid measure JSON: {exc}") from None
    if os.path.isfile(text):
        with open(text, encoding="utf-8") as fh:
            try:
                return measure_from_json(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid measure JSON in {text}: {exc}") from None
    raise ConfigError(f"unknown measure {text!r}: not a catalog name, JSON object or file")

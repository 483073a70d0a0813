"""Gamma-mixture representations of trimmed Lévy laws.

The ``r``-th largest jump (in modulus, or on one side) up to time ``t`` has the
law of ``Pi_inv(Gamma_r / t)`` where ``Gamma_r`` is a sum of ``r`` unit
exponentials.  Conditionally on ``Gamma_r / t = v`` the trimmed value is the
value of the process with jumps of modulus ``>= L = Pi_inv(v)`` removed, plus
Poisson many jumps tied at ``L``.  This module samples that mixture directly,
without simulating the removed jumps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, ContractError, ResolutionError
from .levy_measure import LevyMeasureSpec, TailFunction, tie_rates
from .pathsim import IDENTITY, SimConfig, TrimMode, default_epsilon
from .rng import Stream, as_stream, map_blocks

#: The truncated process is resolved down to ``L / TRUNCATION_RATIO`` at least.
TRUNCATION_RATIO = 100.0
_HALF_ULP = 2.0 ** -54


@dataclass(frozen=True)
class TruncatedTriplet:
    """Triplet of the process with the jumps at or beyond the truncation levels removed.

    Attributes
    ----------
    kind : {"modulus", "asymmetric"}
    shifted_gamma : float
        Drift with respect to the truncation function ``1{|x| <= 1}``.
    sigma2 : float
    truncated_tail_plus, truncated_tail_minus : TailFunction
        Tails of ``Pi`` restricted to ``|x| < L`` (strictly).
    level_plus, level_minus : float
        Truncation levels; both equal ``L`` in modulus mode, ``inf`` when a side
        is not truncated.
    tie_plus, tie_minus : float
        ``kappa+/-`` (modulus) or ``rho+/-`` (asymmetric) rates.
    """

    kind: str
    shifted_gamma: float
    sigma2: float
    truncated_tail_plus: TailFunction
    truncated_tail_minus: TailFunction
    level_plus: float
    level_minus: float
    tie_plus: float
    tie_minus: float

    @property
    def level(self) -> float:
        """The modulus level ``L`` (modulus mode)."""
        return self.level_plus

    @property
    def spec(self) -> LevyMeasureSpec:
        return LevyMeasureSpec(self.shifted_gamma, self.sigma2, self.truncated_tail_plus,
                               self.truncated_tail_minus, name="truncated")


def _mass_from(tail: TailFunction, level):
    """``int_[L,1] y Pi(dy)``, vectorized; 0 where ``L > 1``."""
    level = np.asarray(level, dtype=float)
    safe = np.where(np.isfinite(level) & (level > 0), level, 2.0)
    val = (np.asarray(tail.first_moment_above(safe), dtype=float)
           + safe * np.asarray(tail.atom_mass(safe), dtype=float))
    return np.where(safe <= 1.0, val, 0.0)


def truncated_triplet(spec: LevyMeasureSpec, kind: str, v: float | None,
                      u: float | None = None) -> TruncatedTriplet:
    """Truncated triplet at tail level ``v`` (and ``u`` for the negative side).

    Parameters
    ----------
    spec : LevyMeasureSpec
    kind : {"modulus", "asymmetric"}
        ``modulus`` truncates at ``L = Pi_inv(v)`` on both sides.  ``asymmetric``
        truncates positive jumps at ``Pi+_inv(v)`` and negative ones at
        ``Pi-_inv(u)``; ``None`` leaves a side untouched.
    v, u : float or None
        Positive tail levels.
    """
    for name, val in (("v", v), ("u", u)):
        if val is not None and not val > 0:
            raise ConfigError(f"{name} must be positive")
    if kind == "modulus":
        if v is None:
            raise ConfigError("modulus truncation needs v")
        level = float(spec.tail_modulus.inverse(v))
        shift = float(_mass_from(spec.tail_plus, level) - _mass_from(spec.tail_minus, level))
        kp, km = tie_rates(spec, v, "modulus")
        return TruncatedTriplet(
            kind, spec.gamma - shift, spec.sigma2, spec.tail_plus.restrict_below(level),
            spec.tail_minus.restrict_below(level), level, level, kp, km)
    if kind != "asymmetric":
        raise ConfigError(f"unknown truncation kind {kind!r}")
    lp = float(spec.tail_plus.inverse(v)) if v is not None else np.inf
    lm = float(spec.tail_minus.inverse(u)) if u is not None else np.inf
    shift = float(_mass_from(spec.tail_plus, lp) - _mass_from(spec.tail_minus, lm))
    rho_p = tie_rates(spec, v, "plus")[0] if v is not None else 0.0
    rho_m = tie_rates(spec, u, "minus")[0] if u is not None else 0.0
    return TruncatedTriplet(
        kind, spec.gamma - shift, spec.sigma2, spec.tail_plus.restrict_below(lp),
        spec.tail_minus.restrict_below(lm), lp, lm, rho_p, rho_m)


# ====================================================================== ordered jumps

def _side_tail(spec: LevyMeasureSpec, side: str) -> TailFunction:
    try:
        return spec.side(side)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"unknown side {side!r}") from exc


def ordered_jump_cdf(spec: LevyMeasureSpec, t: float, r: int, y, side: str = "modulus"):
    """``P(rank-(r+1) jump > y) = P(Gamma_{r+1} < t * Pi(y))``.

    ``side`` selects the tail: ``plus``, ``minus`` or ``modulus``.  Vectorized
    over ``y``.
    """
    if r < 0:
        raise ConfigError("rank offset r must be nonnegative")
    w = t * np.asarray(_side_tail(spec, side).evaluate(np.asarray(y, dtype=float)), dtype=float)
    out = special.gammainc(r + 1, w)
    return float(out) if np.ndim(y) == 0 else out


def ordered_jump_bounds(spec: LevyMeasureSpec, t: float, r: int, y, side: str = "modulus"):
    """Lower and upper bounds ``exp(-w) w**(r+1)/(r+1)!`` and ``w**(r+1)/(r+1)!``.

    Here ``w = t * Pi(y)``; the exceedance probability of the ``(r+1)``-th jump
    lies between them.
    """
    w = t * np.asarray(_side_tail(spec, side).evaluate(np.asarray(y, dtype=float)), dtype=float)
    with np.errstate(over="ignore"):
        upper = w ** (r + 1) / special.factorial(r + 1)
    lower = upper * np.exp(-w)
    lower = np.where(np.isfinite(upper), lower, 0.0)
    if np.ndim(y) == 0:
        return float(lower), float(upper)
    return lower, upper


def _gamma_sum(gen: np.random.Generator, r: int, size: int) -> np.ndarray:
    """``Gamma_r`` as the sum of ``r`` unit exponentials."""
    return gen.standard_exponential((size, r)).sum(axis=1)


def sample_ordered_jump(spec: LevyMeasureSpec, t: float, r: int, side: str = "modulus",
                        rng: Stream | int | None = None, n: int | None = None):
    """Draw the magnitude of the ``r``-th largest jump on ``(0, t]``.

    Returns ``Pi_inv(Gamma_r / t)``; 0 means fewer than ``r`` jumps (possible
    only on finite-activity sides).  ``n`` draws are returned as an array, a
    single float when ``n`` is None.
    """
    if r < 1:
        raise ConfigError("rank r must be at least 1")
    if not t > 0:
        raise ConfigError("time horizon must be positive")
    tail = _side_tail(spec, side)
    gen = as_stream(rng).generator(0)
    g = _gamma_sum(gen, r, 1 if n is None else n)
    out = np.asarray(tail.inverse(g / t), dtype=float)
    return float(out[0]) if n is None else out


# ====================================================================== trimmed samplers

@dataclass
class _RepSetup:
    spec: LevyMeasureSpec
    t: float
    mode: TrimMode
    eps0: float
    budget: float


def _truncated_side(tail: TailFunction, level: np.ndarray, eps: np.ndarray, t: float):
    """Poisson rates and level ranges of resolved jumps in ``(eps, level)``."""
    top = np.asarray(tail.evaluate(eps), dtype=float)
    finite = np.isfinite(level)
    cut = np.where(finite, np.asarray(tail.left_limit(np.where(finite, level, 1.0)), dtype=float),
                   0.0)
    lam = t * np.maximum(top - cut, 0.0)
    return lam, cut, top


def _side_sums(gen, tail, counts, cut, top, size):
    total = int(counts.sum())
    rows = np.repeat(np.arange(size), counts)
    if total == 0:
        return np.zeros(size), rows, np.zeros(0)
    u = gen.random(total) + _HALF_ULP
    lo = cut[rows]
    w = lo + u * (top[rows] - lo)
    sizes = np.asarray(tail.inverse(w), dtype=float)
    return np.bincount(rows, weights=sizes, minlength=size), rows, sizes


def _rep_block(st: _RepSetup, size: int, gen: np.random.Generator, keep_jumps: bool = False):
    spec, t, mode = st.spec, st.t, st.mode
    inf = np.full(size, np.inf)
    if mode.kind == "modulus":
        if mode.r:
            v = _gamma_sum(gen, mode.r, size) / t
            level = np.asarray(spec.tail_modulus.inverse(v), dtype=float)
        else:
            v, level = None, inf
        lp = lm = level
    else:
        vp = _gamma_sum(gen, mode.r, size) / t if mode.r else None
        vm = _gamma_sum(gen, mode.s, size) / t if mode.s else None
        lp = np.asarray(spec.tail_plus.inverse(vp), dtype=float) if mode.r else inf
        lm = np.asarray(spec.tail_minus.inverse(vm), dtype=float) if mode.s else inf
    eps = np.minimum(st.eps0, np.minimum(lp, lm) / TRUNCATION_RATIO)
    lam_p, cut_p, top_p = _truncated_side(spec.tail_plus, lp, eps, t)
    lam_m, cut_m, top_m = _truncated_side(spec.tail_minus, lm, eps, t)
    worst = float(np.max(lam_p + lam_m)) if size else 0.0
    if worst > st.budget:
        raise ResolutionError(f"truncated process needs {worst:.4g} resolved jumps, above the "
                              f"count budget {st.budget:.4g}")
    n_p = gen.poisson(lam_p)
    n_m = gen.poisson(lam_m)
    sum_p, rows_p, sizes_p = _side_sums(gen, spec.tail_plus, n_p, cut_p, top_p, size)
    sum_m, rows_m, sizes_m = _side_sums(gen, spec.tail_minus, n_m, cut_m, top_m, size)
    normals = gen.standard_normal((size, 2))
    small_var = t * np.maximum(np.asarray(spec.big_v(eps), dtype=float) - spec.sigma2, 0.0)
    value = (t * np.asarray(spec.nu(eps), dtype=float)
             + np.sqrt(spec.sigma2 * t) * normals[:, 0] + np.sqrt(small_var) * normals[:, 1]
             + sum_p - sum_m)
    # jumps tied at the truncation level
    if mode.kind == "modulus" and mode.r:
        mass_p = np.asarray(spec.tail_plus.atom_mass(level), dtype=float)
        mass_m = np.asarray(spec.tail_minus.atom_mass(level), dtype=float)
        mass = mass_p + mass_m
        excess = np.maximum(np.asarray(spec.tail_modulus.left_limit(level), dtype=float) - v, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            kp = np.where(mass > 0, excess * mass_p / mass, 0.0)
            km = np.where(mass > 0, excess * mass_m / mass, 0.0)
        y_p, y_m = gen.poisson(t * kp), gen.poisson(t * km)
        value = value + level * (y_p - y_m)
    elif mode.kind == "asymmetric":
        if mode.r:
            rho = np.where(np.asarray(spec.tail_plus.atom_mass(lp)) > 0,
                           np.maximum(np.asarray(spec.tail_plus.left_limit(lp)) - vp, 0.0), 0.0)
            value = value + lp * gen.poisson(t * rho)
        if mode.s:
            rho = np.where(np.asarray(spec.tail_minus.atom_mass(lm)) > 0,
                           np.maximum(np.asarray(spec.tail_minus.left_limit(lm)) - vm, 0.0), 0.0)
            value = value - lm * gen.poisson(t * rho)
    levels = lp if mode.kind == "modulus" else np.column_stack([lp, lm])
    if not keep_jumps:
        return value, levels, None
    jumps = [np.concatenate([sizes_p[rows_p == i], -sizes_m[rows_m == i]]) for i in range(size)]
    return value, levels, jumps


def _setup(spec: LevyMeasureSpec, t: float, mode: TrimMode, config: SimConfig) -> _RepSetup:
    if not t > 0:
        raise ConfigError("time horizon must be positive")
    mode.check_spec(spec)
    eps0 = config.epsilon if config.epsilon is not None else default_epsilon(
        spec, t, mode.total, config)
    return _RepSetup(spec, t, mode, eps0, config.count_budget)


def joint_sample_trimmed_with_jump(spec: LevyMeasureSpec, t: float, mode: TrimMode = IDENTITY,
                                   config: SimConfig = SimConfig(),
                                   rng: Stream | int | None = None, n: int | None = None,
                                   return_jumps: bool = False):
    """Sample the trimmed value jointly with the removed-rank level(s).

    Parameters
    ----------
    spec : LevyMeasureSpec
    t : float
    mode : TrimMode
        ``modulus(r)`` or ``asymmetric(r, s)``.
    config : SimConfig
        Resolution settings; the truncated process is resolved down to
        ``min(eps_default, L / 100)``.
    rng : Stream or int
    n : int, optional
        Number of draws; a single draw when omitted.
    return_jumps : bool
        Also return the resolved jumps of the truncated component (debugging).

    Returns
    -------
    value : float or ndarray
    level : float, ndarray or tuple
        ``L = Pi_inv(Gamma_r/t)`` in modulus mode; ``(L+, L-)`` in asymmetric
        mode, with ``inf`` on an untrimmed side.
    jumps : list of ndarray
        Only with ``return_jumps``.
    """
    st = _setup(spec, t, mode, config)
    stream = as_stream(rng)
    count = 1 if n is None else int(n)
    parts = map_blocks(lambda b, size: _rep_block(st, size, stream.generator(b), return_jumps),
                       count, config.threads, config.block_size)
    value = np.concatenate([p[0] for p in parts])
    levels = np.concatenate([p[1] for p in parts])
    jumps = [j for p in parts for j in (p[2] or [])]
    if n is None:
        value = float(value[0])
        levels = float(levels[0]) if levels.ndim == 1 else tuple(float(x) for x in levels[0])
        jumps = jumps[0] if return_jumps else None
    return (value, levels, jumps) if return_jumps else (value, levels)


def sample_trimmed_rep(spec: LevyMeasureSpec, t: float, mode: TrimMode = IDENTITY,
                       config: SimConfig = SimConfig(), rng: Stream | int | None = None,
                       n: int | None = None):
    """Sample the trimmed value at ``t`` through the Gamma-mixture representation.

    Same draws as :func:`joint_sample_trimmed_with_jump`; returns only the value.
    """
    return joint_sample_trimmed_with_jump(spec, t, mode, config, rng, n)[0]

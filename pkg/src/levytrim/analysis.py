"""Analytic small-time classification, norming functions and limit diagnostics.

Everything here is deterministic: tails, truncated moments and their ratios
are evaluated on finite grids, and the limit statements they stand for are
turned into monotone-trend tests whose outcome is labelled as evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConstructionError, InconsistentMeasureError
from .levy_measure import LevyMeasureSpec, quad_moment

#: A ratio "tends to 0" when its last grid value is at most this.
TREND_TOL = 0.1
#: Allowed relative violation of monotonicity between consecutive grid points.
TREND_NOISE = 0.05
#: A ratio "tends to infinity" when its last grid value is at least this.
DIVERGE_LEVEL = 5.0
#: The trend window covers the final two decades of the grid.
TREND_DECADES = 2.0
MIN_DECADES = 4.0
#: Default classification grid: 1 down to 1e-8, four points per decade.
DEFAULT_X_GRID = np.logspace(0.0, -8.0, 33)

#: Search bracket for norming roots and the bisection stopping width in log b.
NORMING_BRACKET = (1e-300, 1e300)
NORMING_LOG_TOL = 1e-15
NORMING_MAX_STEPS = 400
#: A root must satisfy its defining equation to this relative accuracy.
NORMING_RTOL = 1e-10

#: Depth in ``log y`` of the quadrature window for the squared-jump moment.
QV_HEAD_DEPTH = 40.0

NORMING_MODES = ("normal", "relative-stability", "weak-derivative", "auto")

LABEL_NORMAL = "normal-DOA-evidence"
LABEL_PARTIAL = "partial-attraction-only-evidence"
LABEL_RELSTABLE = "relatively-stable-evidence"
LABEL_NONE = "none"


def _positive(x, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.size == 0 or np.any(~(arr > 0)) or np.any(~np.isfinite(arr)):
        raise ConfigError(f"{what} must be positive and finite")
    return arr


def _shape_out(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else values


# ---------------------------------------------------------------- normal DOA ratio

def doa_normal_ratio(spec: LevyMeasureSpec, x):
    """``x**2 * Pi(|y| > x) / V(x)``, the normal domain-of-attraction ratio.

    Parameters
    ----------
    spec : LevyMeasureSpec
    x : float or array_like
        Positive levels.

    Returns
    -------
    float or ndarray
        The ratio; 0 wherever both ``V(x)`` and the tail vanish.

    Raises
    ------
    InconsistentMeasureError
        ``V(x) = 0`` while the tail above ``x`` is positive.
    """
    xa = _positive(x, "x")
    tail = np.asarray(spec.tail(xa), dtype=float)
    v = np.asarray(spec.big_v(xa), dtype=float)
    bad = (v <= 0) & (tail > 0)
    if np.any(bad):
        raise InconsistentMeasureError(
            f"V(x) = 0 with positive tail at x = {float(xa[bad].flat[0]):g}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(v > 0, xa * xa * tail / v, 0.0)
    return _shape_out(ratio, x)


# ---------------------------------------------------------------- classification

def _trend_window(grid: np.ndarray) -> np.ndarray:
    return grid <= grid[-1] * 10.0 ** TREND_DECADES


def trend_to_zero(values, window) -> bool:
    """Last value at most :data:`TREND_TOL`, nonincreasing (within noise) on ``window``."""
    w = np.asarray(values, dtype=float)[window]
    if not np.all(np.isfinite(w)):
        return False
    return bool(w[-1] <= TREND_TOL and np.all(w[1:] <= w[:-1] * (1 + TREND_NOISE) + 1e-300))


def trend_to_infinity(values, window) -> bool:
    """Last value at least :data:`DIVERGE_LEVEL`, nondecreasing (within noise) on ``window``."""
    w = np.asarray(values, dtype=float)[window]
    if np.any(np.isnan(w)):
        return False
    return bool(w[-1] >= DIVERGE_LEVEL and np.all(w[1:] >= w[:-1] * (1 - TREND_NOISE)))


@dataclass(frozen=True)
class Classification:
    """Finite-grid evidence for a small-time regime.

    Attributes
    ----------
    label : str
        Strongest label whose trend test passed.
    delta : float or None
        Fitted weak-derivative limit, ``nu`` at the smallest grid point.
    grid : ndarray
        The ``x`` grid, decreasing.
    values : dict
        ``ratio``, ``x_tail``, ``nu`` and ``nu_over_x_tail`` on the grid.
    trend_pass : dict
        Outcome of every individual criterion.
    """

    label: str
    delta: float | None
    grid: np.ndarray
    values: dict
    trend_pass: dict

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "delta": self.delta,
            "grid": [float(g) for g in self.grid],
            "values": {k: [float(u) for u in v] for k, v in self.values.items()},
            "trend_pass": dict(self.trend_pass),
        }


def _check_grid(x_grid) -> np.ndarray:
    grid = _positive(x_grid, "x_grid").reshape(-1)
    if grid.size < 2 or np.any(np.diff(grid) >= 0):
        raise ConfigError("x_grid must be strictly decreasing")
    if math.log10(grid[0] / grid[-1]) < MIN_DECADES - 1e-9:
        raise ConfigError(f"x_grid must span at least {MIN_DECADES:g} decades")
    return grid


def classify_small_time(spec: LevyMeasureSpec, x_grid=DEFAULT_X_GRID) -> Classification:
    """Label the small-time regime from trends of tail ratios on ``x_grid``.

    Criteria, each a trend test over the final two decades of the grid:

    * normal: ``x**2 Pi(|y|>x)/V(x) -> 0``;
    * partial attraction: the minimum of that ratio is at most the tolerance;
    * weak derivative: ``sigma2 = 0``, ``x Pi(|y|>x) -> 0`` and ``nu`` settles;
    * relative stability: ``sigma2 = 0`` and ``nu(x)/(x Pi(|y|>x)) -> +inf``.

    Precedence is normal, relative stability, weak derivative, partial.
    A weak derivative with ``delta != 0`` also passes the relative-stability
    test; the weak-derivative label is then used because it fixes ``b_t = t``.

    Raises
    ------
    ConfigError
        Grid not strictly decreasing or spanning fewer than four decades.
    """
    grid = _check_grid(x_grid)
    window = _trend_window(grid)
    ratio = np.asarray(doa_normal_ratio(spec, grid), dtype=float)
    x_tail = grid * np.asarray(spec.tail(grid), dtype=float)
    nu = np.asarray(spec.nu(grid), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu_ratio = np.where(x_tail > 0, nu / x_tail, np.sign(nu) * np.inf)
    delta = float(nu[-1])
    nu_w = nu[window]
    nu_settled = bool(np.ptp(nu_w) <= TREND_TOL * max(1.0, abs(delta)))
    no_gauss = spec.sigma2 == 0.0
    passes = {
        "normal": trend_to_zero(ratio, window),
        "partial": bool(np.min(ratio[window]) <= TREND_TOL),
        "weak_derivative": no_gauss and trend_to_zero(x_tail, window) and nu_settled,
        "relatively_stable": no_gauss and trend_to_infinity(nu_ratio, window),
    }
    # delta is clearly nonzero when it dominates the variation of nu on the window.
    delta_nonzero = abs(delta) > np.ptp(nu_w) / TREND_TOL
    if passes["normal"]:
        label = LABEL_NORMAL
    elif passes["weak_derivative"] and (delta_nonzero or not passes["relatively_stable"]):
        label = f"weak-derivative({round(delta, 6):g})-evidence"
    elif passes["relatively_stable"]:
        label = LABEL_RELSTABLE
    elif passes["partial"]:
        label = LABEL_PARTIAL
    else:
        label = LABEL_NONE
    values = {"ratio": ratio, "x_tail": x_tail, "nu": nu, "nu_over_x_tail": nu_ratio}
    return Classification(label, delta if passes["weak_derivative"] else None,
                          grid, values, passes)


# ---------------------------------------------------------------- norming

def _bisect_log(sign_fn, what: str):
    """Bisection in ``log b`` for a sign change from positive to nonpositive."""
    lo, hi = (math.log(v) for v in NORMING_BRACKET)
    f_lo, f_hi = sign_fn(lo), sign_fn(hi)
    if not (f_lo > 0 and f_hi <= 0):
        raise ConstructionError(f"no {what} root in bracket {NORMING_BRACKET}",
                                bracket_values=(f_lo, f_hi))
    for _ in range(NORMING_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        if sign_fn(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= NORMING_LOG_TOL * max(1.0, abs(mid)):
            break
    return lo, hi


def _log_or_neg_inf(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def _normal_b(spec: LevyMeasureSpec, t: float) -> float:
    log_t = math.log(t)

    def log_excess(s):
        return log_t + _log_or_neg_inf(float(spec.big_v(math.exp(s)))) - 2.0 * s

    lo, hi = _bisect_log(log_excess, "normal norming")
    b = math.exp(0.5 * (lo + hi))
    resid = t * float(spec.big_v(b)) / (b * b) - 1.0
    if abs(resid) > NORMING_RTOL:
        # V jumps at an atom between the bracket ends: no continuous root.
        vals = (t * float(spec.big_v(math.exp(lo))) / math.exp(2 * lo) - 1.0,
                t * float(spec.big_v(math.exp(hi))) / math.exp(2 * hi) - 1.0)
        raise ConstructionError(f"t*V(b)/b^2 = 1 has no continuous root near b = {b:.6g}",
                                bracket_values=vals)
    return b


def _relstable_b(spec: LevyMeasureSpec, t: float) -> float:
    log_t = math.log(t)

    def log_excess(s):
        return log_t + _log_or_neg_inf(float(spec.nu(math.exp(s)))) - s

    lo, hi = _bisect_log(log_excess, "relative-stability norming")
    b = math.exp(0.5 * (lo + hi))
    resid = t * float(spec.nu(b)) / b - 1.0
    if abs(resid) > NORMING_RTOL:
        vals = (t * float(spec.nu(math.exp(lo))) / math.exp(lo) - 1.0,
                t * float(spec.nu(math.exp(hi))) / math.exp(hi) - 1.0)
        raise ConstructionError(f"t*nu(b) = b has no continuous root near b = {b:.6g}",
                                bracket_values=vals)
    return b


@dataclass(frozen=True)
class NormingPair:
    """Norming ``b_t`` and centering ``a_t`` for one spec.

    Attributes
    ----------
    spec : LevyMeasureSpec
    construction : str
        ``"normal"``, ``"relative-stability"`` or ``"weak-derivative"``.

    Notes
    -----
    ``normal``: ``t V(b)/b**2 = 1`` and ``a_t = t nu(b_t)``.
    ``relative-stability``: ``t nu(b) = b`` and ``a_t = 0``.
    ``weak-derivative``: ``b_t = t`` and ``a_t = 0``.
    """

    spec: LevyMeasureSpec = field(repr=False)
    construction: str

    def b(self, t: float) -> float:
        t = float(_positive(t, "t"))
        if self.construction == "normal":
            return _normal_b(self.spec, t)
        if self.construction == "relative-stability":
            return _relstable_b(self.spec, t)
        return t

    def a(self, t: float) -> float:
        if self.construction == "normal":
            return float(t) * float(self.spec.nu(self.b(t)))
        float(_positive(t, "t"))
        return 0.0

    def at(self, t: float) -> tuple:
        """``(a_t, b_t)``."""
        b = self.b(t)
        a = float(t) * float(self.spec.nu(b)) if self.construction == "normal" else 0.0
        return a, b


def _auto_construction(spec: LevyMeasureSpec, t: float) -> str:
    label = classify_small_time(spec).label
    if label == LABEL_NORMAL:
        return "normal"
    if label == LABEL_RELSTABLE:
        return "relative-stability"
    if label.startswith("weak-derivative"):
        return "weak-derivative"
    try:
        _normal_b(spec, t)
        return "normal"
    except ConstructionError:
        return "weak-derivative"


def norming(spec: LevyMeasureSpec, t: float, mode: str = "auto") -> NormingPair:
    """Build the norming pair and check it can be evaluated at ``t``.

    Parameters
    ----------
    spec : LevyMeasureSpec
    t : float
        Positive time at which the construction is validated.
    mode : {"auto", "normal", "relative-stability", "weak-derivative"}
        ``auto`` follows :func:`classify_small_time` on the default grid.
        Unclassified measures use the normal root when one exists and
        ``b_t = t`` otherwise.

    Raises
    ------
    ConfigError
        ``t <= 0`` or unknown mode.
    ConstructionError
        No root of the defining equation in the search bracket.
    """
    t = float(_positive(t, "t"))
    if mode not in NORMING_MODES:
        raise ConfigError(f"unknown norming mode {mode!r}; choose from {', '.join(NORMING_MODES)}")
    construction = _auto_construction(spec, t) if mode == "auto" else mode
    pair = NormingPair(spec, construction)
    pair.b(t)
    return pair


# ---------------------------------------------------------------- Kallenberg quantities

@dataclass(frozen=True)
class KallenbergLimits:
    """Kallenberg-condition quantities on a ``(t, x)`` grid.

    Attributes
    ----------
    t, x : ndarray
        Time and level grids.
    b, a : ndarray
        Norming and centering along ``t``.
    tail_limit_plus, tail_limit_minus : ndarray, shape (len(t), len(x))
        ``t * Pi_pm(x b_t)``.
    v_limit : ndarray, shape (len(t), len(x))
        ``t * V(x b_t) / b_t**2``.
    centering_limit : ndarray, shape (len(t),)
        ``(t nu(b_t) - a_t) / b_t``.
    """

    t: np.ndarray
    x: np.ndarray
    b: np.ndarray
    a: np.ndarray
    tail_limit_plus: np.ndarray
    tail_limit_minus: np.ndarray
    v_limit: np.ndarray
    centering_limit: np.ndarray


def _norming_grid(pair: NormingPair, t_grid):
    ts = _positive(t_grid, "t_grid").reshape(-1)
    ab = np.array([pair.at(t) for t in ts])
    return ts, ab[:, 0], ab[:, 1]


def kallenberg_diagnostic(spec: LevyMeasureSpec, pair: NormingPair, t_grid,
                          x_grid) -> KallenbergLimits:
    """Tabulate the tail, truncated-variance and centering quantities."""
    ts, a, b = _norming_grid(pair, t_grid)
    xs = _positive(x_grid, "x_grid").reshape(-1)
    lv = b[:, None] * xs[None, :]
    plus = ts[:, None] * np.asarray(spec.tail_plus.evaluate(lv), dtype=float)
    minus = ts[:, None] * np.asarray(spec.tail_minus.evaluate(lv), dtype=float)
    v = ts[:, None] * np.asarray(spec.big_v(lv), dtype=float) / (b * b)[:, None]
    centering = (ts * np.asarray(spec.nu(b), dtype=float) - a) / b
    return KallenbergLimits(ts, xs, b, a, plus, minus, v, centering)


@dataclass(frozen=True)
class TightnessTable:
    """``t * Pi(|y| > x b_t)`` on a grid, with its envelope over ``t``.

    Attributes
    ----------
    t, x : ndarray
    table_plus, table_minus : ndarray, shape (len(t), len(x))
    envelope : ndarray, shape (len(x),)
        ``max_t`` of the two-sided table at each ``x``.
    envelope_decreasing : bool
        Envelope nonincreasing in ``x``.
    tight : bool
        Envelope decreasing and at most :data:`TREND_TOL` at the largest ``x``.
    """

    t: np.ndarray
    x: np.ndarray
    table_plus: np.ndarray
    table_minus: np.ndarray
    envelope: np.ndarray
    envelope_decreasing: bool
    tight: bool


def tightness_diagnostic(spec: LevyMeasureSpec, pair: NormingPair, t_grid,
                         x_grid) -> TightnessTable:
    """Double-limit tightness diagnostic for the given norming."""
    ts, _, b = _norming_grid(pair, t_grid)
    xs = _positive(x_grid, "x_grid").reshape(-1)
    if np.any(np.diff(xs) <= 0):
        raise ConfigError("x_grid must be strictly increasing")
    lv = b[:, None] * xs[None, :]
    plus = ts[:, None] * np.asarray(spec.tail_plus.evaluate(lv), dtype=float)
    minus = ts[:, None] * np.asarray(spec.tail_minus.evaluate(lv), dtype=float)
    env = np.max(plus + minus, axis=0)
    decreasing = bool(np.all(np.diff(env) <= 0))
    return TightnessTable(ts, xs, plus, minus, env, decreasing,
                          decreasing and bool(env[-1] <= TREND_TOL))


# ---------------------------------------------------------------- quadratic variation

def _qv_side(tail, z: float) -> tuple:
    """``(Pi_q((z, inf)), int_(0,z] y Pi_q(dy))`` for the squared-jump image of one side.

    Both come from quadrature of the image density in the squared variable,
    except the first moment below ``z * exp(-QV_HEAD_DEPTH)``. That head is taken
    from the closed-form second moment of the original side, because for
    log-type densities it decays too slowly in ``log y`` to be integrated.
    """
    tail_q = 0.0
    first_q = 0.0
    if tail.has_continuous:
        top = tail.support_max ** 2

        def dens_q(y, f=tail.density):
            r = np.sqrt(y)
            return np.asarray(f(r), dtype=float) / (2.0 * r)

        brk = tuple(p * p for p in tail.breakpoints)
        if z < top:
            tail_q += quad_moment(dens_q, 0, z, top, brk)
        head = z * math.exp(-QV_HEAD_DEPTH)
        if head < top:
            first_q += float(tail.second_moment_below(math.sqrt(head)))
            first_q += quad_moment(dens_q, 1, head, min(z, top), brk)
        else:
            first_q += float(tail.second_moment_below(math.sqrt(z)))
    if tail.has_atoms:
        sq = tail._loc ** 2
        tail_q += float(np.sum(tail._mass[sq > z]))
        first_q += float(np.sum((sq * tail._mass)[sq <= z]))
    return tail_q, first_q


def qv_condition_equivalence(spec: LevyMeasureSpec, x: float, t: float,
                             pair: NormingPair) -> tuple:
    """Both sides of the Kallenberg conditions for the quadratic variation.

    The left pair is computed from the image measure ``Pi_q`` of squared
    jumps by quadrature in the squared variable:
    ``(t Pi_q(x b**2), (t/b**2)(sigma2 + int_(0, x b**2] y Pi_q(dy)))``.
    The right pair uses the original tail and truncated second moment:
    ``(t Pi(sqrt(x) b), t V(sqrt(x) b)/b**2)``.

    Returns
    -------
    tuple
        ``((lhs_tail, lhs_v), (rhs_tail, rhs_v))``.
    """
    x = float(_positive(x, "x"))
    t = float(_positive(t, "t"))
    b = pair.b(t)
    z = x * b * b
    tp, fp = _qv_side(spec.tail_plus, z)
    tm, fm = _qv_side(spec.tail_minus, z)
    lhs = (t * (tp + tm), t * (spec.sigma2 + fp + fm) / (b * b))
    level = math.sqrt(x) * b
    rhs = (t * float(spec.tail(level)), t * float(spec.big_v(level)) / (b * b))
    return lhs, rhs


def qv_tail(spec: LevyMeasureSpec, y):
    """``Pi_q((y, inf)) = Pi(|x| > sqrt(y))``, the tail of the squared-jump measure."""
    ya = _positive(y, "y")
    return _shape_out(np.asarray(spec.tail(np.sqrt(ya)), dtype=float), y)


def norming_slope(pair: NormingPair, t_grid) -> float:
    """Least-squares slope of ``log b_t`` against ``log t``."""
    ts = _positive(t_grid, "t_grid").reshape(-1)
    bs = np.array([pair.b(t) for t in ts])
    return float(np.polyfit(np.log(ts), np.log(bs), 1)[0])

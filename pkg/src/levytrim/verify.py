"""Statistical verification harness: ECDF/KS machinery and named experiments.

Each check draws from disjoint sub-streams of one seed (``"pathsim"`` for the
path simulator, ``"rep"`` for the representation sampler), so a report is
reproducible bit for bit from its name, configuration and seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import analysis
from .charfn import charfn_trimmed
from .errors import ConfigError
from .levy_measure import LevyMeasureSpec
from .pathsim import IDENTITY, SimConfig, TrimMode, simulate_summary
from .representation import ordered_jump_bounds, ordered_jump_cdf, sample_trimmed_rep
from .rng import Stream

#: Kolmogorov critical coefficients at 99% (one-sample) and 99.9% (two-sample).
KS_C99 = 1.63
KS_C999 = 1.95
KS_SLACK = 1.2
#: Standard-error multiplier on Monte Carlo inequality checks.
SE_SLACK = 3.0
ETA_GRID = (0.05, 0.1, 0.2, 0.5)
ECF_TOL = 0.02
CONJ_TOL = 1e-12
#: Convergence study: final KS bound and allowed KS increase between grid points.
KS_FINAL = 0.02
KS_NOISE = 0.005
QV_MEDIAN_RTOL = 0.1
#: Below this median of ``V_t / b_t**2`` the QV limit is treated as degenerate.
QV_DEGENERATE = 1e-3
SANDWICH_POINTS = 64
KEY_POINTS = 8


# ---------------------------------------------------------------- empirical distributions

@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted sample with its right-continuous ECDF.

    Parameters
    ----------
    sorted_samples : ndarray
        Nondecreasing, finite values.
    """

    sorted_samples: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.sorted_samples, dtype=float).reshape(-1)
        if x.size == 0:
            raise ConfigError("empirical distribution needs at least one sample")
        if np.any(np.isnan(x)):
            raise ConfigError("samples must not be NaN")
        if np.any(np.diff(x) < 0):
            raise ConfigError("samples must be sorted")
        object.__setattr__(self, "sorted_samples", x)

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalDistribution":
        return cls(np.sort(np.asarray(samples, dtype=float).reshape(-1)))

    @property
    def n(self) -> int:
        return int(self.sorted_samples.size)

    def cdf(self, y):
        """``#{x_i <= y} / n``."""
        out = np.searchsorted(self.sorted_samples, np.asarray(y, dtype=float), side="right") / self.n
        return float(out) if np.ndim(y) == 0 else out

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.sorted_samples, q))


def _as_emp(x) -> EmpiricalDistribution:
    return x if isinstance(x, EmpiricalDistribution) else EmpiricalDistribution.from_samples(x)


def ks_one_sample(emp, cdf, cdf_left=None) -> float:
    """Kolmogorov distance between an ECDF and a model cdf.

    Both envelopes are evaluated at each distinct sample value: the ECDF after
    the value against ``cdf(x)``, and the ECDF before it against the left
    limit ``cdf(x-)``. The left limit defaults to ``cdf`` at the next smaller
    double, which resolves jumps of the model cdf at atoms.
    """
    emp = _as_emp(emp)
    u, counts = np.unique(emp.sorted_samples, return_counts=True)
    upper = np.cumsum(counts) / emp.n
    lower = upper - counts / emp.n
    f = np.asarray(cdf(u), dtype=float)
    f_left = np.asarray(cdf_left(u) if cdf_left is not None else cdf(np.nextafter(u, -np.inf)),
                        dtype=float)
    return float(max(np.max(upper - f), np.max(f_left - lower), 0.0))


def ks_two_sample(a, b) -> float:
    """Largest difference of two ECDFs over the pooled sample values."""
    a, b = _as_emp(a), _as_emp(b)
    pooled = np.union1d(a.sorted_samples, b.sorted_samples)
    return float(np.max(np.abs(a.cdf(pooled) - b.cdf(pooled))))


def ks_one_sample_threshold(n: int) -> float:
    return KS_SLACK * KS_C99 / math.sqrt(n)


def ks_two_sample_threshold(n: int, m: int | None = None) -> float:
    m = n if m is None else m
    return KS_SLACK * KS_C999 * math.sqrt((n + m) / (n * m))


# ---------------------------------------------------------------- reports

@dataclass
class VerificationReport:
    """Outcome of one named check.

    ``thresholds`` maps statistic names to ``(op, bound)`` with ``op`` one of
    ``"<="`` or ``">="``; ``passed`` holds when every thresholded statistic
    satisfies its bound. Checks that are reported without a verdict have
    ``status == "reported"`` and count as passed.
    """

    check_name: str
    seed: int
    n_samples: int
    config: dict
    statistics: dict
    thresholds: dict
    runtime_ms: float = 0.0
    status: str = ""
    table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.within_thresholds() else "fail"

    def within_thresholds(self) -> bool:
        for name, (op, bound) in self.thresholds.items():
            value = self.statistics[name]
            if value is None or not np.isfinite(value):
                return False
            if op == "<=" and not value <= bound:
                return False
            if op == ">=" and not value >= bound:
                return False
        return True

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_dict(self) -> dict:
        """JSON view with a fixed key order; the runtime is left out so that
        repeated runs are byte-identical."""
        return {
            "check_name": self.check_name,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "config": self.config,
            "statistics": {k: _json_float(v) for k, v in self.statistics.items()},
            "thresholds": {k: {"op": op, "value": _json_float(b)}
                           for k, (op, b) in self.thresholds.items()},
            "status": self.status,
            "pass": self.passed,
        }

    def summary_line(self) -> str:
        shown = ", ".join(f"{k}={self.statistics[k]:.4g}" for k in self.thresholds)
        return f"{self.status.upper():8s} {self.check_name} [{shown}] ({self.runtime_ms:.0f} ms)"


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else None


def _spec_config(spec: LevyMeasureSpec) -> dict:
    return {"measure": spec.name, "params": dict(spec.params)}


def _streams(seed: int) -> tuple:
    root = Stream(int(seed))
    return root.child("pathsim"), root.child("rep")


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = 1000.0 * (time.perf_counter() - self.start)


# ---------------------------------------------------------------- checks

def check_representation(spec: LevyMeasureSpec, t: float, mode: TrimMode, n: int, seed: int,
                         config: SimConfig = SimConfig()) -> VerificationReport:
    """Two-sample KS between pathwise trimming and the representation sampler."""
    mode.check_spec(spec)
    path_stream, rep_stream = _streams(seed)
    with _Timer() as clock:
        paths = simulate_summary(spec, t, n, (mode,), config, path_stream)
        rep = sample_trimmed_rep(spec, t, mode, config, rep_stream, n)
        ks = ks_two_sample(paths[mode].trimmed, rep)
    return VerificationReport(
        "representation", seed, n,
        {**_spec_config(spec), "t": t, "mode": mode.label},
        {"ks": ks}, {"ks": ("<=", ks_two_sample_threshold(n))}, clock.ms)


def _side_mode(side: str, r: int) -> TrimMode:
    if side == "modulus":
        return TrimMode.modulus(r + 1)
    if side == "plus":
        return TrimMode.asymmetric(r + 1, 0)
    if side == "minus":
        return TrimMode.asymmetric(0, r + 1)
    raise ConfigError(f"unknown side {side!r}")


def sandwich_grid(spec: LevyMeasureSpec, t: float, side: str = "modulus",
                  points: int = SANDWICH_POINTS) -> np.ndarray:
    """Levels ``y`` with ``t * Pi(y)`` log-spaced over ``[1e-3, 50]``."""
    w = np.logspace(-3.0, math.log10(50.0), points)
    return np.asarray(spec.side(side).inverse(w / t), dtype=float)


def sandwich_violations(spec: LevyMeasureSpec, t: float, r: int, y, side: str = "modulus") -> int:
    """Grid points where the exceedance leaves ``[lower, upper]`` (exact comparison)."""
    p = np.asarray(ordered_jump_cdf(spec, t, r, y, side), dtype=float)
    lo, hi = ordered_jump_bounds(spec, t, r, y, side)
    return int(np.sum((p < lo) | (p > hi)))


def check_ordered_jump_law(spec: LevyMeasureSpec, t: float, r: int, side: str, n: int, seed: int,
                           config: SimConfig = SimConfig()) -> VerificationReport:
    """One-sample KS of the pathwise ``(r+1)``-th largest jump against its closed form.

    ``r`` is the number of larger jumps, so ``r = 0`` tests the largest jump.
    The analytic sandwich is asserted on :data:`SANDWICH_POINTS` levels.
    """
    mode = _side_mode(side, r)
    mode.check_spec(spec)
    path_stream, _ = _streams(seed)
    with _Timer() as clock:
        paths = simulate_summary(spec, t, n, (mode,), config, path_stream)[mode]
        if side == "modulus":
            jumps = np.abs(paths.removed_modulus[:, r])
        elif side == "plus":
            jumps = paths.removed_plus[:, r]
        else:
            jumps = paths.removed_minus[:, r]
        ks = ks_one_sample(jumps, lambda y: 1.0 - ordered_jump_cdf(spec, t, r, y, side))
        bad = sandwich_violations(spec, t, r, sandwich_grid(spec, t, side), side)
    return VerificationReport(
        "ordered-jump", seed, n,
        {**_spec_config(spec), "t": t, "r": r, "side": side},
        {"ks": ks, "sandwich_violations": float(bad)},
        {"ks": ("<=", ks_one_sample_threshold(n)), "sandwich_violations": ("<=", 0.0)},
        clock.ms)


def key_inequality_right(spec: LevyMeasureSpec, t: float, mode: TrimMode, level):
    """Closed-form right side: exceedance of level ``level`` by the first kept jump(s)."""
    if mode.kind == "modulus":
        return np.asarray(ordered_jump_cdf(spec, t, mode.r, level, "modulus"), dtype=float)
    plus = np.asarray(ordered_jump_cdf(spec, t, mode.r, level, "plus"), dtype=float)
    minus = np.asarray(ordered_jump_cdf(spec, t, mode.s, level, "minus"), dtype=float)
    return np.maximum(plus, minus)


def key_x_grid(spec: LevyMeasureSpec, t: float, mode: TrimMode, b: float,
               points: int = KEY_POINTS) -> np.ndarray:
    """``x`` values (in units of ``b``), log-spaced between the levels where the
    right side equals 0.95 and 1e-3."""
    side = "modulus" if mode.kind == "modulus" else ("plus" if spec.infinite_activity_plus
                                                     else "minus")
    rank = mode.r if side != "minus" else mode.s
    w = special.gammaincinv(rank + 1, np.array([0.95, 1e-3]))
    y_lo, y_hi = np.asarray(spec.side(side).inverse(w / t), dtype=float)
    return np.logspace(math.log10(y_lo), math.log10(y_hi), points) / (4.0 * b)


def check_key_inequality(spec: LevyMeasureSpec, t: float, mode: TrimMode, n: int, seed: int,
                         x_grid=None, config: SimConfig = SimConfig(),
                         norming_mode: str = "auto") -> VerificationReport:
    """Monte Carlo left side ``4 P(|trimmed - a_t| > x b_t)`` against the closed-form right side.

    Passes when ``4 p_L + 3 SE >= p_R`` at every ``x``, i.e. when the smallest
    margin is nonnegative.
    """
    mode.check_spec(spec)
    path_stream, _ = _streams(seed)
    with _Timer() as clock:
        a, b = analysis.norming(spec, t, norming_mode).at(t)
        xs = (key_x_grid(spec, t, mode, b) if x_grid is None
              else np.asarray(x_grid, dtype=float).reshape(-1))
        trimmed = simulate_summary(spec, t, n, (mode,), config, path_stream)[mode].trimmed
        dev = np.sort(np.abs(trimmed - a))
        p_left = 1.0 - np.searchsorted(dev, xs * b, side="right") / n
        se = np.sqrt(p_left * (1.0 - p_left) / n)
        p_right = key_inequality_right(spec, t, mode, 4.0 * xs * b)
        margin = 4.0 * p_left + SE_SLACK * se - p_right
    rows = [(float(x), float(pl), float(s), float(pr), float(m))
            for x, pl, s, pr, m in zip(xs, p_left, se, p_right, margin)]
    return VerificationReport(
        "key-inequality", seed, n,
        {**_spec_config(spec), "t": t, "mode": mode.label, "a_t": a, "b_t": b,
         "x_grid": [float(x) for x in xs]},
        {"min_margin": float(np.min(margin)), "max_p_right": float(np.max(p_right))},
        {"min_margin": (">=", 0.0)}, clock.ms,
        table=(("x", "p_left", "se", "p_right", "margin"), rows))


def _largest_jump(summary, mode: TrimMode) -> np.ndarray:
    ms = summary[mode]
    if mode.kind == "modulus":
        return np.abs(ms.removed_modulus[:, 0])
    cols = [c[:, 0] for c in (ms.removed_plus, ms.removed_minus) if c.shape[1]]
    return np.max(np.column_stack(cols), axis=1)


def convergence_study(spec: LevyMeasureSpec, mode: TrimMode, t_grid, n: int, seed: int,
                      limit: str = "normal", center: float | None = None,
                      eta_grid=ETA_GRID, eta_bounds: dict | None = None,
                      norming_mode: str = "auto",
                      config: SimConfig = SimConfig()) -> VerificationReport:
    """Standardized trimmed and untrimmed values along a decreasing ``t`` grid.

    ``limit="normal"``: one-sample KS against the standard normal at every
    ``t``; passes when KS never grows by more than :data:`KS_NOISE` between
    consecutive times and is at most :data:`KS_FINAL` at the smallest ``t``.

    ``limit="degenerate"``: ``P(|S_t - c| > eta)`` for ``eta`` in ``eta_grid``,
    with ``c = center`` or the sample median at the smallest ``t``. Passes when
    every ``eta`` in ``eta_bounds`` meets its bound at the smallest ``t``, or,
    without bounds, when each probability is nonincreasing along ``t`` within
    3 standard errors.

    Quantiles of the largest removed jump over ``b_t`` are reported for both
    limits and must shrink along ``t``.
    """
    if limit not in ("normal", "degenerate"):
        raise ConfigError(f"unknown limit {limit!r}")
    ts = np.asarray(t_grid, dtype=float).reshape(-1)
    if ts.size == 0 or np.any(np.diff(ts) >= 0):
        raise ConfigError("t_grid must be nonempty and strictly decreasing")
    mode.check_spec(spec)
    path_stream, _ = _streams(seed)
    pair = None
    modes = (mode,) if mode.is_identity else (mode, IDENTITY)
    stats, thresholds, rows = {}, {}, []
    standardized = []
    with _Timer() as clock:
        pair = analysis.norming(spec, float(ts[0]), norming_mode)
        for k, t in enumerate(ts):
            a, b = pair.at(float(t))
            summary = simulate_summary(spec, float(t), n, modes, config, path_stream.child(k))
            trimmed = (summary[mode].trimmed - a) / b
            untrimmed = (summary.value - a) / b
            big = _largest_jump(summary, mode) / b if not mode.is_identity else np.zeros(n)
            standardized.append((t, a, b, trimmed, untrimmed, big))
        if limit == "normal":
            for key, col in (("trimmed", 3), ("untrimmed", 4)):
                ks = np.array([ks_one_sample(s[col], special.ndtr) for s in standardized])
                for t, v in zip(ts, ks):
                    stats[f"ks_{key}_t={t:g}"] = float(v)
                stats[f"ks_{key}_max_rise"] = float(np.max(np.diff(ks))) if ks.size > 1 else 0.0
                stats[f"ks_{key}_final"] = float(ks[-1])
                thresholds[f"ks_{key}_max_rise"] = ("<=", KS_NOISE)
                thresholds[f"ks_{key}_final"] = ("<=", KS_FINAL)
            rows = [(float(s[0]), float(s[1]), float(s[2]),
                     stats[f"ks_trimmed_t={s[0]:g}"], stats[f"ks_untrimmed_t={s[0]:g}"])
                    for s in standardized]
            header = ("t", "a_t", "b_t", "ks_trimmed", "ks_untrimmed")
        else:
            c = float(np.median(standardized[-1][3])) if center is None else float(center)
            stats["center"] = c
            header = ("t", "a_t", "b_t", "eta", "p_trimmed", "p_untrimmed")
            for key, col in (("trimmed", 3), ("untrimmed", 4)):
                for eta in eta_grid:
                    ps = np.array([np.mean(np.abs(s[col] - c) > eta) for s in standardized])
                    for t, p in zip(ts, ps):
                        stats[f"p_{key}_eta={eta:g}_t={t:g}"] = float(p)
                    name = f"p_{key}_eta={eta:g}_final"
                    stats[name] = float(ps[-1])
                    if eta_bounds is not None and eta in eta_bounds:
                        thresholds[name] = ("<=", float(eta_bounds[eta]))
                    elif eta_bounds is None and ps.size > 1:
                        se = np.sqrt(np.maximum(ps * (1 - ps), 1.0 / n) / n)
                        excess = np.max(np.diff(ps) - SE_SLACK * np.hypot(se[1:], se[:-1]))
                        stats[f"p_{key}_eta={eta:g}_max_excess"] = float(excess)
                        thresholds[f"p_{key}_eta={eta:g}_max_excess"] = ("<=", 0.0)
            for s in standardized:
                for eta in eta_grid:
                    rows.append((float(s[0]), float(s[1]), float(s[2]), float(eta),
                                 stats[f"p_trimmed_eta={eta:g}_t={s[0]:g}"],
                                 stats[f"p_untrimmed_eta={eta:g}_t={s[0]:g}"]))
        if not mode.is_identity and ts.size > 1:
            med = np.array([np.median(s[5]) for s in standardized])
            q90 = np.array([np.quantile(s[5], 0.9) for s in standardized])
            for t, m, q in zip(ts, med, q90):
                stats[f"max_jump_median_t={t:g}"] = float(m)
                stats[f"max_jump_q90_t={t:g}"] = float(q)
            stats["max_jump_median_max_rise"] = float(np.max(np.diff(med)))
            thresholds["max_jump_median_max_rise"] = ("<=", 0.0)
    return VerificationReport(
        "convergence", seed, n,
        {**_spec_config(spec), "mode": mode.label, "t_grid": [float(t) for t in ts],
         "limit": limit, "norming": pair.construction},
        stats, thresholds, clock.ms, table=(header, rows))


def check_qv_convergence(spec: LevyMeasureSpec, mode: TrimMode, t_grid, n: int, seed: int,
                         norming_mode: str = "auto",
                         config: SimConfig = SimConfig()) -> VerificationReport:
    """Trimmed and untrimmed ``V_t / b_t**2`` concentrate at the same level.

    Passes when the medians at the smallest ``t`` agree within 10% and both
    interquartile ranges are nonincreasing along ``t``. If the untrimmed median
    is below :data:`QV_DEGENERATE` the limit is degenerate and the report is
    returned with status ``"reported"``.
    """
    ts = np.asarray(t_grid, dtype=float).reshape(-1)
    if ts.size == 0 or np.any(np.diff(ts) >= 0):
        raise ConfigError("t_grid must be nonempty and strictly decreasing")
    mode.check_spec(spec)
    path_stream, _ = _streams(seed)
    stats, rows = {}, []
    with _Timer() as clock:
        pair = analysis.norming(spec, float(ts[0]), norming_mode)
        meds, iqrs = [], []
        for k, t in enumerate(ts):
            b = pair.b(float(t))
            summary = simulate_summary(spec, float(t), n, (mode,), config, path_stream.child(k))
            un = summary.qv / (b * b)
            tr = summary[mode].trimmed_qv / (b * b)
            m = (float(np.median(tr)), float(np.median(un)))
            q = tuple(float(np.subtract(*np.quantile(v, [0.75, 0.25]))) for v in (tr, un))
            meds.append(m)
            iqrs.append(q)
            rows.append((float(t), float(b), m[0], m[1], q[0], q[1]))
            stats[f"median_trimmed_t={t:g}"], stats[f"median_untrimmed_t={t:g}"] = m
            stats[f"iqr_trimmed_t={t:g}"], stats[f"iqr_untrimmed_t={t:g}"] = q
        med_tr, med_un = meds[-1]
        stats["median_rel_diff"] = abs(med_tr - med_un) / max(abs(med_un), 1e-300)
        iq = np.array(iqrs)
        stats["iqr_max_rise"] = float(np.max(np.diff(iq, axis=0))) if ts.size > 1 else 0.0
    thresholds = {"median_rel_diff": ("<=", QV_MEDIAN_RTOL), "iqr_max_rise": ("<=", 0.0)}
    status = "reported" if abs(med_un) < QV_DEGENERATE else ""
    return VerificationReport(
        "qv-convergence", seed, n,
        {**_spec_config(spec), "mode": mode.label, "t_grid": [float(t) for t in ts],
         "norming": pair.construction},
        stats, thresholds, clock.ms, status=status,
        table=(("t", "b_t", "median_trimmed", "median_untrimmed", "iqr_trimmed", "iqr_untrimmed"),
               rows))


def check_charfn(spec: LevyMeasureSpec, t: float, mode: TrimMode, n: int, seed: int,
                 theta_grid=None, config: SimConfig = SimConfig()) -> VerificationReport:
    """Empirical characteristic function of representation samples against quadrature."""
    mode.check_spec(spec)
    thetas = (np.linspace(-5.0, 5.0, 41) if theta_grid is None
              else np.asarray(theta_grid, dtype=float).reshape(-1))
    _, rep_stream = _streams(seed)
    with _Timer() as clock:
        x = sample_trimmed_rep(spec, t, mode, config, rep_stream, n)
        ecf = np.array([np.mean(np.exp(1j * th * x)) for th in thetas])
        quad = charfn_trimmed(spec, thetas, t, mode)
        conj = charfn_trimmed(spec, -thetas, t, mode)
        at_zero = charfn_trimmed(spec, 0.0, t, mode)
    dev = np.abs(quad - ecf)
    rows = [(float(th), float(q.real), float(q.imag), float(e.real), float(e.imag), float(d))
            for th, q, e, d in zip(thetas, quad, ecf, dev)]
    return VerificationReport(
        "charfn", seed, n,
        {**_spec_config(spec), "t": t, "mode": mode.label,
         "theta_grid": [float(th) for th in thetas]},
        {"sup_deviation": float(np.max(dev)),
         "max_modulus": float(np.max(np.abs(quad))),
         "zero_residual": float(abs(at_zero - 1.0)),
         "conjugate_residual": float(np.max(np.abs(conj - np.conj(quad))))},
        {"sup_deviation": ("<=", ECF_TOL), "max_modulus": ("<=", 1.0),
         "zero_residual": ("<=", 0.0), "conjugate_residual": ("<=", CONJ_TOL)},
        clock.ms,
        table=(("theta", "quad_re", "quad_im", "ecf_re", "ecf_im", "abs_diff"), rows))

"""Pathwise simulation of a Lévy process on ``(0, t]`` and pathwise trimming.

Jumps larger than a resolution level ``eps`` are simulated exactly as a marked
Poisson process; the compensated jumps below ``eps`` are replaced by a centred
Gaussian with variance ``t*(V(eps) - sigma2)``.  Trimming removes the largest
resolved jumps, ties in magnitude being broken by arrival time.

Monte Carlo work is split into blocks of :data:`levytrim.rng.BLOCK_SIZE` paths.
Block ``i`` draws from block ``i`` of the caller's stream, so results are
identical for any number of worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, InsufficientResolutionError, ResolutionError
from .levy_measure import LEVEL_FLOOR, LevyMeasureSpec
from .rng import BLOCK_SIZE, Stream, as_stream, map_blocks

_HALF_ULP = 2.0 ** -54


@dataclass(frozen=True)
class TrimMode:
    """Trimming operator: ``asymmetric(r, s)`` or ``modulus(r)``.

    One-sided trimming is ``asymmetric(r, 0)`` or ``asymmetric(0, s)``.
    """

    kind: str
    r: int = 0
    s: int = 0

    def __post_init__(self):
        if self.kind not in ("asymmetric", "modulus"):
            raise ConfigError(f"unknown trimming kind {self.kind!r}")
        if self.r < 0 or self.s < 0:
            raise ConfigError("trimming orders must be nonnegative")
        if self.kind == "modulus" and self.s != 0:
            raise ConfigError("modulus trimming has a single order r")

    @classmethod
    def asymmetric(cls, r: int, s: int) -> "TrimMode":
        return cls("asymmetric", int(r), int(s))

    @classmethod
    def modulus(cls, r: int) -> "TrimMode":
        return cls("modulus", int(r), 0)

    @classmethod
    def one_sided_plus(cls, r: int) -> "TrimMode":
        return cls("asymmetric", int(r), 0)

    @classmethod
    def one_sided_minus(cls, s: int) -> "TrimMode":
        return cls("asymmetric", 0, int(s))

    @property
    def total(self) -> int:
        return self.r + self.s

    @property
    def is_identity(self) -> bool:
        return self.total == 0

    @property
    def label(self) -> str:
        if self.kind == "modulus":
            return f"modulus({self.r})"
        return f"asymmetric({self.r},{self.s})"

    def check_spec(self, spec: LevyMeasureSpec) -> None:
        """Reject trimming of a side that has finitely many jumps."""
        if self.kind == "modulus":
            if self.r > 0 and not spec.infinite_activity:
                raise ContractError("modulus trimming needs infinitely many jumps")
            return
        if self.r > 0 and not spec.infinite_activity_plus:
            raise ContractError("cannot trim positive jumps: finite activity on the positive side")
        if self.s > 0 and not spec.infinite_activity_minus:
            raise ContractError("cannot trim negative jumps: finite activity on the negative side")


IDENTITY = TrimMode.asymmetric(0, 0)


@dataclass(frozen=True)
class SimConfig:
    """Resolution and execution settings of the path simulator.

    Parameters
    ----------
    epsilon : float, optional
        Resolution level; by default solves ``t*Pi(eps) = max(target_count,
        per_rank*(r+s+1))``.
    target_count, per_rank : float
        Parameters of the default resolution rule.
    count_budget : float
        Largest admissible expected number of resolved jumps per path.
    threads : int
        Worker threads for block-parallel sampling.
    block_size : int
        Paths per block; part of the reproducible configuration.
    """

    epsilon: float | None = None
    target_count: float = 500.0
    per_rank: float = 50.0
    count_budget: float = 1e6
    threads: int = 1
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.count_budget <= 0 or self.target_count <= 0 or self.per_rank <= 0:
            raise ConfigError("count settings must be positive")
        if self.threads < 1 or self.block_size < 1:
            raise ConfigError("threads and block_size must be at least 1")


def default_epsilon(spec: LevyMeasureSpec, t: float, order: int = 0,
                    config: SimConfig = SimConfig()) -> float:
    """Resolution level solving ``t*Pi(eps) = max(target, per_rank*(order+1))``.

    The level is clamped at ``LEVEL_FLOOR`` when the target count is not reached
    above it (for example gamma-type tails at small ``t``).
    """
    target = max(config.target_count, config.per_rank * (order + 1))
    eps = float(spec.tail_modulus.inverse(target / t))
    return max(eps, LEVEL_FLOOR)


def resolve_epsilon(spec: LevyMeasureSpec, t: float, order: int, config: SimConfig) -> float:
    """Configured or default resolution level, checked against the count budget."""
    if not t > 0:
        raise ConfigError("time horizon must be positive")
    eps = config.epsilon if config.epsilon is not None else default_epsilon(spec, t, order, config)
    count = t * float(spec.tail(eps))
    if count > config.count_budget:
        raise ResolutionError(
            f"t*Pi(eps) = {count:.4g} exceeds the count budget {config.count_budget:.4g}; "
            f"increase epsilon (currently {eps:.4g})")
    return eps


# ====================================================================== single paths

@dataclass(frozen=True)
class PathSample:
    """One realization on ``(0, t]`` with jumps above ``epsilon`` resolved.

    ``times`` are increasing and ``sizes`` are the matching jump sizes.
    """

    horizon: float
    times: np.ndarray
    sizes: np.ndarray
    epsilon: float
    small_aggregate: float
    gaussian_part: float
    drift_part: float
    gaussian_variance: float = 0.0
    small_variance: float = 0.0
    infinite_activity_plus: bool = True
    infinite_activity_minus: bool = True
    floor_clamped: bool = False

    @property
    def jumps(self) -> list:
        return list(zip(self.times.tolist(), self.sizes.tolist()))

    @property
    def value(self) -> float:
        return float(self.drift_part + self.gaussian_part + self.small_aggregate
                     + np.sum(self.sizes))


@dataclass(frozen=True)
class TrimResult:
    """Trimmed value with the removed jumps.

    ``removed_positive`` and ``removed_negative`` hold magnitudes in decreasing
    order (asymmetric mode); ``removed_modulus`` holds signed jumps ordered by
    decreasing magnitude (modulus mode).
    """

    trimmed_value: float
    removed_positive: list
    removed_negative: list
    removed_modulus: list
    mode: TrimMode
    untrimmed_value: float = 0.0


def _order_matrix(sizes: np.ndarray, counts: np.ndarray, mode: TrimMode, allow_missing: bool):
    """Extract the trimmed order statistics of each row of a padded jump matrix.

    Rows hold the jumps of one path in arrival order, padded with zeros after
    ``counts[i]`` entries.  Repeated ``argmax`` passes return the first
    occurrence, which is the earliest arrival among tied magnitudes.

    Returns
    -------
    plus, minus, modulus : ndarray
        ``(n, r)``, ``(n, s)`` and ``(n, r)`` arrays (magnitudes for the one-sided
        lists, signed values for the modulus list).  Missing order statistics are
        0 when ``allow_missing`` is set.
    removed : ndarray of bool
        Mask of the removed entries, so that trimmed sums can be formed from the
        kept jumps without cancellation.
    """
    n = sizes.shape[0]
    rows = np.arange(n)
    width = sizes.shape[1]
    valid = np.arange(width)[None, :] < counts[:, None]
    removed = np.zeros(sizes.shape, dtype=bool)

    def extract(work: np.ndarray, k: int, signed: bool, what: str):
        out = np.zeros((n, k))
        for i in range(k):
            if width == 0:
                best = np.zeros(n, dtype=int)
                val = np.full(n, -np.inf)
            else:
                best = np.argmax(work, axis=1)
                val = work[rows, best]
            missing = ~np.isfinite(val)
            if missing.any() and not allow_missing:
                raise InsufficientResolutionError(
                    f"fewer than {i + 1} resolved {what}jumps on {int(missing.sum())} path(s); "
                    "decrease epsilon")
            if width == 0:
                continue
            picked = sizes[rows, best] if signed else val
            out[:, i] = np.where(missing, 0.0, picked)
            removed[rows[~missing], best[~missing]] = True
            work[rows, best] = -np.inf
        return out

    empty = np.zeros((n, 0))
    if mode.kind == "modulus":
        if mode.r == 0:
            return empty, empty, empty, removed
        work = np.where(valid, np.abs(sizes), -np.inf)
        return empty, empty, extract(work, mode.r, True, ""), removed
    plus = minus = empty
    if mode.r:
        plus = extract(np.where(valid & (sizes > 0), sizes, -np.inf), mode.r, False, "positive ")
    if mode.s:
        minus = extract(np.where(valid & (sizes < 0), -sizes, -np.inf), mode.s, False, "negative ")
    return plus, minus, empty, removed


def trim(path: PathSample, mode: TrimMode) -> TrimResult:
    """Remove the largest resolved jumps of a path according to ``mode``."""
    if mode.kind == "modulus":
        if mode.r and not (path.infinite_activity_plus or path.infinite_activity_minus):
            raise ContractError("modulus trimming needs infinitely many jumps")
    else:
        if mode.r and not path.infinite_activity_plus:
            raise ContractError("cannot trim positive jumps: finite activity on the positive side")
        if mode.s and not path.infinite_activity_minus:
            raise ContractError("cannot trim negative jumps: finite activity on the negative side")
    sizes = path.sizes.reshape(1, -1)
    counts = np.array([path.sizes.size])
    plus, minus, modl, removed = _order_matrix(sizes, counts, mode, path.floor_clamped)
    kept = float(np.sum(np.where(removed[0], 0.0, path.sizes)))
    trimmed = path.drift_part + path.gaussian_part + path.small_aggregate + kept
    return TrimResult(float(trimmed), plus[0].tolist(), minus[0].tolist(), modl[0].tolist(),
                      mode, path.value)


def quadratic_variation(path: PathSample, mode: TrimMode = IDENTITY) -> tuple:
    """``(V_t, trimmed V_t)`` with the small-jump second moment as a surrogate."""
    trim(path, mode)  # contract checks
    base = path.gaussian_variance + path.small_variance
    sq = path.sizes ** 2
    _, _, _, removed = _order_matrix(path.sizes.reshape(1, -1), np.array([sq.size]), mode,
                                     path.floor_clamped)
    return base + float(np.sum(sq)), base + float(np.sum(np.where(removed[0], 0.0, sq)))


# ====================================================================== batch engine

@dataclass
class _Setup:
    spec: LevyMeasureSpec
    t: float
    eps: float
    lam_plus: float
    lam_minus: float
    tail_plus_eps: float
    tail_minus_eps: float
    drift: float
    gauss_sd: float
    small_sd: float
    small_var: float
    floor_clamped: bool


def _setup(spec: LevyMeasureSpec, t: float, eps: float) -> _Setup:
    tp = float(spec.tail_plus.evaluate(eps))
    tm = float(spec.tail_minus.evaluate(eps))
    small_var = t * max(float(spec.big_v(eps)) - spec.sigma2, 0.0)
    return _Setup(spec, t, eps, t * tp, t * tm, tp, tm, t * float(spec.nu(eps)),
                  float(np.sqrt(spec.sigma2 * t)), float(np.sqrt(small_var)), small_var,
                  eps <= LEVEL_FLOOR)


def _draw_block(st: _Setup, n: int, gen: np.random.Generator,
                time_gen: np.random.Generator | None):
    """Simulate ``n`` paths; returns padded sizes, counts, Gaussian parts, times."""
    lam = st.lam_plus + st.lam_minus
    counts = gen.poisson(lam, size=n) if lam > 0 else np.zeros(n, dtype=np.int64)
    total = int(counts.sum())
    u = gen.random(total) + _HALF_ULP
    normals = gen.standard_normal((n, 2))
    sizes_flat = np.empty(total)
    mass = st.tail_plus_eps + st.tail_minus_eps
    if total:
        w = u * mass
        plus = w < st.tail_plus_eps
        if plus.any():
            sizes_flat[plus] = st.spec.tail_plus.inverse(w[plus])
        minus = ~plus
        if minus.any():
            level = w[minus] - st.tail_plus_eps
            level = np.where(level > 0, level, st.tail_minus_eps * _HALF_ULP)
            sizes_flat[minus] = -np.asarray(st.spec.tail_minus.inverse(level))
    width = int(counts.max()) if n else 0
    sizes = np.zeros((n, width))
    rows = np.repeat(np.arange(n), counts)
    starts = np.cumsum(counts) - counts
    cols = np.arange(total) - np.repeat(starts, counts)
    sizes[rows, cols] = sizes_flat
    times = None
    if time_gen is not None:
        times = np.zeros((n, width))
        times[rows, cols] = st.t * (1.0 - time_gen.random(total))
        # sort the valid prefix of every row; padding sorts to the end as +inf
        padded = np.where(np.arange(width)[None, :] < counts[:, None], times, np.inf)
        times = np.sort(padded, axis=1)
    gauss = st.gauss_sd * normals[:, 0]
    small = st.small_sd * normals[:, 1]
    return sizes, counts, gauss, small, times


@dataclass
class ModeSummary:
    """Per-path trimmed quantities for one trimming mode."""

    mode: TrimMode
    trimmed: np.ndarray
    trimmed_qv: np.ndarray
    removed_plus: np.ndarray
    removed_minus: np.ndarray
    removed_modulus: np.ndarray


@dataclass
class BatchSummary:
    """Per-path results of :func:`simulate_summary`."""

    t: float
    epsilon: float
    value: np.ndarray
    qv: np.ndarray
    counts: np.ndarray
    modes: dict = field(default_factory=dict)

    def __getitem__(self, mode: TrimMode) -> ModeSummary:
        return self.modes[mode]


def simulate_summary(spec: LevyMeasureSpec, t: float, n: int, modes=(IDENTITY,),
                     config: SimConfig = SimConfig(), rng: Stream | int | None = None
                     ) -> BatchSummary:
    """Simulate ``n`` paths and trim each of them under every mode in ``modes``.

    Parameters
    ----------
    spec : LevyMeasureSpec
    t : float
        Time horizon.
    n : int
        Number of paths.
    modes : sequence of TrimMode
        All modes are applied to the same paths.
    config : SimConfig
    rng : Stream or int
        Random stream (or seed).

    Returns
    -------
    BatchSummary
        Untrimmed values, quadratic variations, resolved counts and one
        :class:`ModeSummary` per mode.
    """
    modes = tuple(modes)
    for m in modes:
        m.check_spec(spec)
    order = max((m.total for m in modes), default=0)
    eps = resolve_epsilon(spec, t, order, config)
    st = _setup(spec, t, eps)
    stream = as_stream(rng)

    def work(block: int, size: int):
        sizes, counts, gauss, small, _ = _draw_block(st, size, stream.generator(block), None)
        base = st.drift + gauss + small
        value = base + sizes.sum(axis=1)
        qv_base = st.spec.sigma2 * t + st.small_var
        sq = np.square(sizes)
        qv = qv_base + sq.sum(axis=1)
        per_mode = []
        for m in modes:
            plus, minus, modl, removed = _order_matrix(sizes, counts, m, st.floor_clamped)
            trimmed = base + np.where(removed, 0.0, sizes).sum(axis=1)
            tqv = qv_base + np.where(removed, 0.0, sq).sum(axis=1)
            per_mode.append((trimmed, tqv, plus, minus, modl))
        return value, qv, counts, per_mode

    parts = map_blocks(work, n, config.threads, config.block_size)
    summary = BatchSummary(
        t, eps,
        np.concatenate([p[0] for p in parts]) if parts else np.empty(0),
        np.concatenate([p[1] for p in parts]) if parts else np.empty(0),
        np.concatenate([p[2] for p in parts]) if parts else np.empty(0, dtype=np.int64))
    for j, m in enumerate(modes):
        cols = [np.concatenate([p[3][j][k] for p in parts]) for k in range(5)]
        summary.modes[m] = ModeSummary(m, *cols)
    return summary


def simulate_paths(spec: LevyMeasureSpec, t: float, n: int, config: SimConfig = SimConfig(),
                   rng: Stream | int | None = None, order: int = 0) -> list:
    """Simulate ``n`` full paths (jump times included).

    Path ``i`` uses the same draws as path ``i`` of :func:`simulate_summary`
    with the same stream and resolution.
    """
    eps = resolve_epsilon(spec, t, order, config)
    st = _setup(spec, t, eps)
    stream = as_stream(rng)
    times_stream = stream.child("times")

    def work(block: int, size: int):
        sizes, counts, gauss, small, times = _draw_block(
            st, size, stream.generator(block), times_stream.generator(block))
        out = []
        for i in range(size):
            k = int(counts[i])
            out.append(PathSample(
                t, times[i, :k].copy(), sizes[i, :k].copy(), eps, float(small[i]),
                float(gauss[i]), st.drift, spec.sigma2 * t, st.small_var,
                spec.infinite_activity_plus, spec.infinite_activity_minus, st.floor_clamped))
        return out

    parts = map_blocks(work, n, config.threads, config.block_size)
    return [p for part in parts for p in part]


def simulate_path(spec: LevyMeasureSpec, t: float, config: SimConfig = SimConfig(),
                  rng: Stream | int | None = None, order: int = 0) -> PathSample:
    """Simulate one path on ``(0, t]``.

    The resolution level follows ``config`` (default rule with trimming order
    ``order``).  Equal to the first path of :func:`simulate_paths`.
    """
    return simulate_paths(spec, t, 1, config, rng, order)[0]

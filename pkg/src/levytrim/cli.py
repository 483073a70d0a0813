"""Command-line front door: catalog browsing, simulation, analytic diagnostics
and the verification suite.

Exit codes: 0 when every selected check passes, 1 when a check fails or a
numerical routine breaks down, 2 on configuration or parse errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import analysis, suite, verify
from .errors import (
    ConfigError, ContractError, InconsistentMeasureError, LevyTrimError, UnsupportedMeasureError,
)
from .levy_measure import catalog_descriptions, load_measure
from .pathsim import IDENTITY, SimConfig, TrimMode, simulate_paths, simulate_summary
from .rng import Stream, default_threads

SEED_ENV = "LEVYTRIM_SEED"
MIN_SAMPLES = 100
DEFAULT_T = 0.1
DEFAULT_N = 10_000
DEFAULT_T_GRID = "0.1,0.01,0.001"
DEFAULT_X_GRID = "0.5,1,2,4,8,16"
VERIFY_CHECKS = ("rep", "jumps", "inequality", "charfn", "convergence", "qv")

_CONFIG_ERRORS = (ConfigError, ContractError, UnsupportedMeasureError, InconsistentMeasureError)


class _UsageError(Exception):
    pass


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Append the default unless the help text already explains it."""

    def _get_help_string(self, action):
        if "default" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- output helpers

def _clean(obj):
    """Replace non-finite floats by ``None`` so the JSON stays standard."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def _write_atomic(directory: str, name: str, text: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------- argument parsing

def _float_list(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("grid must be nonempty")
    return values


def _key_value(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {key!r} must be a number")


def _eta_bound(text: str) -> tuple:
    eta, bound = _key_value(text)
    try:
        return float(eta), bound
    except ValueError:
        raise argparse.ArgumentTypeError(f"eta must be a number, got {eta!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: ${SEED_ENV}, else {suite.DEFAULT_SEED})")
    p.add_argument("--threads", type=int, default=default_threads(),
                   help="worker threads; results do not depend on it")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--quiet", action="store_true", help="suppress the summary lines")


def _measure(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--measure", required=required, default=None,
                   help="catalog name, inline JSON object or path to a JSON file")
    p.add_argument("--param", type=_key_value, action="append", default=[],
                   metavar="KEY=VALUE", help="catalog parameter (repeatable)")


def _mode(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r", type=int, default=0, help="largest positive (or modulus) jumps removed")
    p.add_argument("--s", type=int, default=0, help="largest negative jumps removed")
    p.add_argument("--modulus", action="store_true", help="trim by modulus (uses --r only)")


def _sim(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=None,
                   help="resolution level override (default: chosen from t and the trim order)")
    p.add_argument("--count-budget", type=float, default=SimConfig.count_budget,
                   help="largest expected number of resolved jumps per path")


def _norming(p: argparse.ArgumentParser) -> None:
    p.add_argument("--norming", choices=analysis.NORMING_MODES, default="auto",
                   help="norming construction")


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = _Parser(prog="levytrim", formatter_class=fmt,
                     description="Trimmed Levy processes at small times: sampling, "
                                 "diagnostics and verification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("measure", help="browse the measure catalog", formatter_class=fmt)
    msub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    msub.add_parser("list", help="list catalog measures", formatter_class=fmt)
    d = msub.add_parser("describe", help="print a measure summary as JSON", formatter_class=fmt)
    _measure(d)

    p = sub.add_parser("simulate", help="simulate paths and trim them", formatter_class=fmt)
    _measure(p)
    _mode(p)
    _sim(p)
    p.add_argument("--t", type=float, default=DEFAULT_T, help="time horizon")
    p.add_argument("--n", type=int, default=DEFAULT_N, help="number of paths")
    p.add_argument("--dump-jumps", action="store_true",
                   help="also write every resolved jump (path, time, size) to jumps.csv")
    _common(p)

    p = sub.add_parser("trim-study", help="standardized trimmed vs untrimmed values along t",
                       formatter_class=fmt)
    _measure(p)
    _mode(p)
    _sim(p)
    _norming(p)
    p.add_argument("--t-grid", type=_float_list, default=DEFAULT_T_GRID,
                   help="decreasing comma-separated times")
    p.add_argument("--n", type=int, default=DEFAULT_N, help="paths per time")
    _common(p)

    p = sub.add_parser("doa", help="classify the small-time regime", formatter_class=fmt)
    _measure(p)
    p.add_argument("--x-decades", type=float, default=8.0,
                   help="grid from 1 down to 10**-x_decades, 4 points per decade")
    _common(p)

    p = sub.add_parser("norming", help="norming constants with Kallenberg and tightness tables",
                       formatter_class=fmt)
    _measure(p)
    _norming(p)
    p.add_argument("--t-grid", type=_float_list, default=DEFAULT_T_GRID,
                   help="comma-separated times")
    p.add_argument("--x-grid", type=_float_list, default=DEFAULT_X_GRID,
                   help="increasing comma-separated levels in units of b_t")
    _common(p)

    p = sub.add_parser("verify", help="run one verification check", formatter_class=fmt)
    vsub = p.add_subparsers(dest="check", required=True, parser_class=_Parser)
    helps = {"rep": "pathwise trimming vs representation sampler (two-sample KS)",
             "jumps": "ordered-jump law vs closed form, with sandwich bounds",
             "inequality": "key inequality between trimmed sums and ordered jumps",
             "charfn": "characteristic-function quadrature vs empirical charfn",
             "convergence": "KS to the normal limit or degenerate exceedances along t",
             "qv": "trimmed vs untrimmed quadratic variation along t"}
    for name in VERIFY_CHECKS:
        v = vsub.add_parser(name, help=helps[name], formatter_class=fmt)
        _measure(v)
        if name == "jumps":
            v.add_argument("--rank", type=int, default=1, help="rank of the ordered jump (1 = largest)")
            v.add_argument("--side", choices=("plus", "minus", "modulus"), default="modulus",
                           help="which jumps are ordered")
        else:
            _mode(v)
        if name in ("convergence", "qv"):
            v.add_argument("--t-grid", type=_float_list, default=DEFAULT_T_GRID,
                           help="strictly decreasing comma-separated times")
        else:
            v.add_argument("--t", type=float, default=DEFAULT_T, help="time horizon")
        if name in ("inequality", "convergence", "qv"):
            _norming(v)
        if name == "inequality":
            v.add_argument("--x-grid", type=_float_list, default=None,
                           help="levels in units of b_t (default: 8 log-spaced data-driven points)")
        if name == "charfn":
            v.add_argument("--theta-grid", type=_float_list, default=None,
                           help="theta values (default: 41 points on [-5, 5])")
        if name == "convergence":
            v.add_argument("--limit", choices=("normal", "degenerate"), default="normal",
                           help="limit law")
            v.add_argument("--center", type=float, default=None,
                           help="degenerate limit point (default: median at the smallest t)")
            v.add_argument("--eta-bound", type=_eta_bound, action="append", default=[],
                           metavar="ETA=BOUND",
                           help="bound on P(|S_t - c| > eta) at the smallest t (repeatable)")
        v.add_argument("--n", type=int, default=DEFAULT_N, help="samples per sampler")
        _sim(v)
        _common(v)

    p = sub.add_parser("all", help="run the acceptance suite", formatter_class=fmt)
    p.add_argument("--only", type=int, action="append", default=None, metavar="K",
                   choices=sorted(suite.CRITERIA), help="run criterion K only (repeatable)")
    _common(p)
    return parser


# ---------------------------------------------------------------- resolution of options

def _seed(args) -> int:
    if args.seed is not None:
        seed = args.seed
    elif os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    else:
        seed = suite.DEFAULT_SEED
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    return seed


def _spec(args):
    return load_measure(args.measure, dict(args.param) or None)


def _trim_mode(args) -> TrimMode:
    if args.r < 0 or args.s < 0:
        raise ConfigError("--r and --s must be nonnegative")
    if args.modulus:
        if args.s:
            raise ConfigError("--s cannot be combined with --modulus")
        return TrimMode.modulus(args.r) if args.r else IDENTITY
    return TrimMode.asymmetric(args.r, args.s)


def _sim_config(args) -> SimConfig:
    return SimConfig(epsilon=getattr(args, "epsilon", None),
                     count_budget=getattr(args, "count_budget", SimConfig.count_budget),
                     threads=args.threads)


def _check_n(n: int, floor: int = MIN_SAMPLES) -> None:
    if n < floor:
        raise ConfigError(f"--n must be at least {floor}")


def _positive(value: float, flag: str) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{flag} must be positive and finite")


class _Output:
    def __init__(self, args):
        self.dir = args.out
        self.quiet = args.quiet

    def say(self, line: str) -> None:
        if not self.quiet:
            print(line)

    def write(self, name: str, text: str) -> None:
        _write_atomic(self.dir, name, text)


# ---------------------------------------------------------------- commands

def _cmd_measure(args) -> int:
    if args.action == "list":
        for name, desc in catalog_descriptions().items():
            print(f"{name:30s} {desc}")
        return 0
    sys.stdout.write(_json_text(_spec(args).describe()))
    return 0


def _cmd_simulate(args, out: _Output) -> int:
    _check_n(args.n, 1)
    _positive(args.t, "--t")
    spec, mode, cfg, seed = _spec(args), _trim_mode(args), _sim_config(args), _seed(args)
    stream = Stream(seed).child("pathsim")
    summary = simulate_summary(spec, args.t, args.n, (mode,), cfg, stream)
    ms = summary[mode]
    rows = [(i, summary.value[i], ms.trimmed[i], summary.qv[i], ms.trimmed_qv[i],
             int(summary.counts[i])) for i in range(args.n)]
    out.write("simulate.csv", _csv_text(
        ("path", "value", "trimmed", "qv", "trimmed_qv", "resolved_jumps"), rows))
    if args.dump_jumps:
        paths = simulate_paths(spec, args.t, args.n, cfg, stream, mode.total)
        jrows = [(i, tm, sz) for i, p in enumerate(paths) for tm, sz in p.jumps]
        out.write("jumps.csv", _csv_text(("path", "time", "size"), jrows))
    out.say(f"simulated {args.n} paths of {spec.name} at t={args.t:g} "
            f"(mode {mode.label}, epsilon={summary.epsilon:.4g})")
    return 0


def _cmd_trim_study(args, out: _Output) -> int:
    _check_n(args.n)
    ts = np.asarray(args.t_grid, dtype=float)
    if np.any(ts <= 0) or np.any(np.diff(ts) >= 0):
        raise ConfigError("--t-grid must be positive and strictly decreasing")
    spec, mode, cfg, seed = _spec(args), _trim_mode(args), _sim_config(args), _seed(args)
    pair = analysis.norming(spec, float(ts[0]), args.norming)
    stream = Stream(seed).child("pathsim")
    rows = []
    for k, t in enumerate(ts):
        a, b = pair.at(float(t))
        summary = simulate_summary(spec, float(t), args.n, (mode,), cfg, stream.child(k))
        row = [float(t), a, b]
        for values in (summary.value, summary[mode].trimmed):
            z = (values - a) / b
            q05, q25, q50, q75, q95 = np.quantile(z, [0.05, 0.25, 0.5, 0.75, 0.95])
            row += [float(np.mean(z)), float(q50), float(q75 - q25), float(q05), float(q95)]
        rows.append(row)
    header = ["t", "a_t", "b_t"]
    for key in ("untrimmed", "trimmed"):
        header += [f"{key}_{s}" for s in ("mean", "median", "iqr", "q05", "q95")]
    out.write("trim_study.csv", _csv_text(header, rows))
    out.say(f"trim study of {spec.name} ({mode.label}, norming {pair.construction}) "
            f"over {ts.size} times")
    return 0


def _cmd_doa(args, out: _Output) -> int:
    if not args.x_decades >= analysis.MIN_DECADES:
        raise ConfigError(f"--x-decades must be at least {analysis.MIN_DECADES:g}")
    spec = _spec(args)
    grid = np.logspace(0.0, -args.x_decades, int(round(4 * args.x_decades)) + 1)
    cls = analysis.classify_small_time(spec, grid)
    out.write("doa.json", _json_text(cls.to_dict()))
    keys = list(cls.values)
    out.write("doa.csv", _csv_text(
        ["x", *keys], [(float(x), *(float(cls.values[k][i]) for k in keys))
                       for i, x in enumerate(cls.grid)]))
    out.say(f"{spec.name}: {cls.label}")
    return 0


def _cmd_norming(args, out: _Output) -> int:
    spec = _spec(args)
    ts = np.asarray(args.t_grid, dtype=float)
    xs = np.asarray(args.x_grid, dtype=float)
    if np.any(ts <= 0):
        raise ConfigError("--t-grid must be positive")
    pair = analysis.norming(spec, float(ts[0]), args.norming)
    kal = analysis.kallenberg_diagnostic(spec, pair, ts, xs)
    tight = analysis.tightness_diagnostic(spec, pair, ts, xs)
    out.write("norming.csv", _csv_text(("t", "a_t", "b_t"),
                                       zip(kal.t.tolist(), kal.a.tolist(), kal.b.tolist())))
    krows = [(float(kal.t[i]), float(kal.x[j]), float(kal.tail_limit_plus[i, j]),
              float(kal.tail_limit_minus[i, j]), float(kal.v_limit[i, j]),
              float(kal.centering_limit[i]))
             for i in range(kal.t.size) for j in range(kal.x.size)]
    out.write("kallenberg.csv", _csv_text(
        ("t", "x", "tail_plus", "tail_minus", "v", "centering"), krows))
    trows = [(float(tight.t[i]), float(tight.x[j]), float(tight.table_plus[i, j]),
              float(tight.table_minus[i, j]))
             for i in range(tight.t.size) for j in range(tight.x.size)]
    out.write("tightness.csv", _csv_text(("t", "x", "tail_plus", "tail_minus"), trows))
    out.write("norming.json", _json_text({
        "measure": spec.name, "construction": pair.construction,
        "envelope": tight.envelope.tolist(),
        "envelope_decreasing": tight.envelope_decreasing, "tight": tight.tight}))
    out.say(f"{spec.name}: norming {pair.construction}, tight={tight.tight}")
    return 0


def _run_check(args, spec, seed: int, cfg: SimConfig):
    name = args.check
    if name == "jumps":
        if args.rank < 1:
            raise ConfigError("--rank must be at least 1")
        _positive(args.t, "--t")
        return verify.check_ordered_jump_law(spec, args.t, args.rank - 1, args.side, args.n,
                                             seed, cfg)
    mode = _trim_mode(args)
    if name == "rep":
        _positive(args.t, "--t")
        return verify.check_representation(spec, args.t, mode, args.n, seed, cfg)
    if name == "inequality":
        _positive(args.t, "--t")
        return verify.check_key_inequality(spec, args.t, mode, args.n, seed, args.x_grid, cfg,
                                           args.norming)
    if name == "charfn":
        _positive(args.t, "--t")
        return verify.check_charfn(spec, args.t, mode, args.n, seed, args.theta_grid, cfg)
    if name == "convergence":
        bounds = dict(args.eta_bound) if args.eta_bound else None
        grid = verify.ETA_GRID
        if bounds:
            grid = tuple(sorted(set(grid) | set(bounds)))
        return verify.convergence_study(spec, mode, args.t_grid, args.n, seed, args.limit,
                                        args.center, grid, bounds, args.norming, cfg)
    return verify.check_qv_convergence(spec, mode, args.t_grid, args.n, seed, args.norming, cfg)


def _cmd_verify(args, out: _Output) -> int:
    _check_n(args.n)
    spec, seed, cfg = _spec(args), _seed(args), _sim_config(args)
    report = _run_check(args, spec, seed, cfg)
    out.write(f"verify_{args.check}.json", _json_text([report.to_dict()]))
    if report.table is not None:
        header, rows = report.table
        out.write(f"verify_{args.check}.csv", _csv_text(header, rows))
    out.say(report.summary_line())
    return 0 if report.passed else 1


def _cmd_all(args, out: _Output) -> int:
    seed = _seed(args)
    cfg = SimConfig(threads=args.threads)
    results = suite.run_suite(seed, cfg, args.only, progress=lambda r: out.say(r.line()))
    out.write("acceptance.json", suite.suite_json(results))
    passed = sum(r.passed for r in results)
    out.say(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 1


# ---------------------------------------------------------------- entry points

def run(argv=None) -> int:
    """Parse ``argv`` and execute the sub-command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except SystemExit as exc:
        # --help exits through argparse with code 0
        return int(exc.code or 0)
    try:
        if getattr(args, "threads", 1) < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "measure":
            return _cmd_measure(args)
        out = _Output(args)
        handler = {"simulate": _cmd_simulate, "trim-study": _cmd_trim_study, "doa": _cmd_doa,
                   "norming": _cmd_norming, "verify": _cmd_verify, "all": _cmd_all}
        return handler[args.command](args, out)
    except _CONFIG_ERRORS as exc:
        print(f"levytrim: configuration error: {exc}", file=sys.stderr)
        return 2
    except LevyTrimError as exc:
        print(f"levytrim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())

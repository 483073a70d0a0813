"""Acceptance suite: one function per numbered criterion.

Every criterion returns a :class:`CriterionResult` holding the underlying
verification reports. Analytic criteria are wrapped in reports with
``n_samples = 0`` so that the whole suite serializes uniformly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import analysis, verify
from .charfn import charfn_trimmed
from .levy_measure import CATALOG_NAMES, LevyMeasureSpec, catalog
from .pathsim import IDENTITY, SimConfig, TrimMode
from .verify import VerificationReport

DEFAULT_SEED = 20240601
#: Wall-clock limit per (measure, mode) representation run.
REP_RUNTIME_S = 60.0
DOA_RATIO_MAX = 0.07
STABLE_RATIO_TOL = 1e-6
SLOPE_TOL = 0.05
SLOPE_T_GRID = np.logspace(-6.0, -2.0, 9)
QV_EQUIV_RTOL = 1e-8
QV_EQUIV_POINTS = 20
INVARIANT_THETA = np.linspace(0.25, 5.0, 20)


@dataclass
class CriterionResult:
    """Outcome of one acceptance criterion."""

    number: int
    title: str
    reports: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and all(r.passed for r in self.reports)

    def line(self) -> str:
        failed = [r.check_name for r in self.reports if not r.passed] + self.failures
        tail = "" if not failed else " <- " + "; ".join(failed)
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number}: {self.title}{tail}"

    def to_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "pass": self.passed,
                "failures": list(self.failures),
                "reports": [r.to_dict() for r in self.reports]}


def _named(report: VerificationReport, name: str) -> VerificationReport:
    report.check_name = name
    return report


def _analytic(name: str, config: dict, stats: dict, thresholds: dict) -> VerificationReport:
    return VerificationReport(name, 0, 0, config, stats, thresholds)


# ---------------------------------------------------------------- criteria

def criterion_representation(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(1, "representation identity (two-sample KS)")
    specs = [catalog("gamma-type"), catalog("symmetric-stable", {"alpha": 1.5}),
             catalog("atomic-comb")]
    modes = [TrimMode.modulus(1), TrimMode.modulus(2), TrimMode.asymmetric(1, 1)]
    for spec in specs:
        for mode in modes:
            rep = verify.check_representation(spec, 0.1, mode, 50_000, seed, config)
            res.reports.append(_named(rep, f"rep {spec.name} {mode.label}"))
            if rep.runtime_ms > 1000.0 * REP_RUNTIME_S:
                res.failures.append(f"runtime {spec.name} {mode.label} "
                                    f"{rep.runtime_ms / 1000:.1f}s > {REP_RUNTIME_S:g}s")
    return res


def criterion_ordered_jumps(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(2, "ordered-jump closed form and sandwich bounds")
    cases = [(catalog("symmetric-stable", {"alpha": 1.0}), 0.01), (catalog("atomic-comb"), 0.1)]
    for spec, t in cases:
        for r in (0, 1):
            rep = verify.check_ordered_jump_law(spec, t, r, "modulus", 100_000, seed, config)
            res.reports.append(_named(rep, f"jumps {spec.name} rank={r + 1}"))
    return res


def criterion_key_inequality(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(3, "key inequality 4p_L + 3SE >= p_R")
    modes = [TrimMode.asymmetric(1, 0), TrimMode.asymmetric(1, 1), TrimMode.modulus(1)]
    for name in ("gamma-type", "atomic-comb"):
        spec = catalog(name)
        for t in (0.5, 0.1):
            for mode in modes:
                rep = verify.check_key_inequality(spec, t, mode, 100_000, seed, config=config)
                res.reports.append(_named(rep, f"inequality {name} t={t:g} {mode.label}"))
    return res


def criterion_normal_convergence(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(4, "normal convergence of trimmed and untrimmed sums")
    spec = catalog("gaussian-plus-gamma")
    for mode in (TrimMode.asymmetric(1, 1), TrimMode.modulus(1)):
        rep = verify.convergence_study(spec, mode, [1e-1, 1e-2, 1e-3], 20_000, seed,
                                       config=config)
        res.reports.append(_named(rep, f"convergence {spec.name} {mode.label}"))
    return res


def criterion_degenerate(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(5, "degenerate limits (weak derivative, relative stability)")
    gamma = catalog("gamma-subordinator")
    rep = verify.convergence_study(gamma, TrimMode.asymmetric(1, 0), [1e-2, 1e-3, 1e-4], 20_000,
                                   seed, limit="degenerate", center=0.0,
                                   eta_bounds={0.2: 0.05}, norming_mode="weak-derivative",
                                   config=config)
    res.reports.append(_named(rep, "degenerate gamma-subordinator b_t=t"))
    rel = catalog("relative-stable-subordinator")
    rep = verify.convergence_study(rel, TrimMode.asymmetric(1, 0), [1e-3, 1e-4, 1e-5], 20_000,
                                   seed, limit="degenerate", center=1.0,
                                   eta_bounds={0.25: 0.1}, eta_grid=(0.05, 0.1, 0.2, 0.25, 0.5),
                                   norming_mode="relative-stability", config=config)
    res.reports.append(_named(rep, "degenerate relative-stable-subordinator"))
    return res


def criterion_analytic(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(6, "analytic criteria (ratio trends, norming slopes)")
    log_doa = catalog("log-doa")
    xs = np.exp(-np.linspace(1.0, 9.0, 33))
    ratio = np.asarray(analysis.doa_normal_ratio(log_doa, xs), dtype=float)
    res.reports.append(_analytic(
        "doa-ratio log-doa", {"measure": "log-doa", "x": "exp(-linspace(1, 9, 33))"},
        {"max_increase": float(np.max(np.diff(ratio))), "ratio_at_e-9": float(ratio[-1])},
        {"max_increase": ("<=", 0.0), "ratio_at_e-9": ("<=", DOA_RATIO_MAX)}))
    stable = catalog("symmetric-stable", {"alpha": 1.0})
    sx = np.logspace(-8.0, 2.0, 41)
    sr = np.asarray(analysis.doa_normal_ratio(stable, sx), dtype=float)
    res.reports.append(_analytic(
        "doa-ratio symmetric-stable alpha=1",
        {"measure": "symmetric-stable", "alpha": 1.0, "x": "logspace(-8, 2, 41)"},
        {"max_abs_dev_from_1": float(np.max(np.abs(sr - 1.0)))},
        {"max_abs_dev_from_1": ("<=", STABLE_RATIO_TOL)}))
    for name in CATALOG_NAMES:
        spec = catalog(name)
        label = analysis.classify_small_time(spec).label
        if label == analysis.LABEL_NORMAL:
            target, mode = 0.5, "normal"
        elif name == "relative-stable-subordinator":
            target, mode = 1.0, "relative-stability"
        else:
            continue
        pair = analysis.norming(spec, 1e-2, mode)
        slope = analysis.norming_slope(pair, SLOPE_T_GRID)
        res.reports.append(_analytic(
            f"norming-slope {name}", {"measure": name, "norming": mode, "target": target,
                                      "t_grid": "logspace(-6, -2, 9)"},
            {"slope": slope, "abs_dev": abs(slope - target)},
            {"abs_dev": ("<=", SLOPE_TOL)}))
    return res


def _trimmable_modes(spec: LevyMeasureSpec) -> list:
    modes = [IDENTITY]
    if spec.infinite_activity_plus:
        modes.append(TrimMode.asymmetric(1, 0))
    if spec.infinite_activity_plus and spec.infinite_activity_minus:
        modes += [TrimMode.asymmetric(1, 1), TrimMode.modulus(2)]
    if spec.infinite_activity:
        modes.append(TrimMode.modulus(1))
    return modes


def criterion_charfn(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(7, "characteristic function quadrature and invariants")
    rep = verify.check_charfn(catalog("gamma-type"), 0.1, TrimMode.modulus(1), 100_000, seed,
                              config=config)
    res.reports.append(_named(rep, "charfn gamma-type modulus(1)"))
    for name in CATALOG_NAMES:
        spec = catalog(name)
        mod, zero, conj = 0.0, 0.0, 0.0
        for mode in _trimmable_modes(spec):
            pos = charfn_trimmed(spec, INVARIANT_THETA, 0.1, mode)
            neg = charfn_trimmed(spec, -INVARIANT_THETA, 0.1, mode)
            mod = max(mod, float(np.max(np.abs(pos))))
            conj = max(conj, float(np.max(np.abs(neg - np.conj(pos)))))
            zero = max(zero, abs(complex(charfn_trimmed(spec, 0.0, 0.1, mode)) - 1.0))
        res.reports.append(_analytic(
            f"charfn-invariants {name}",
            {"measure": name, "t": 0.1, "modes": [m.label for m in _trimmable_modes(spec)]},
            {"max_modulus": mod, "zero_residual": zero, "conjugate_residual": conj},
            {"max_modulus": ("<=", 1.0), "zero_residual": ("<=", 0.0),
             "conjugate_residual": ("<=", verify.CONJ_TOL)}))
    return res


def criterion_qv(seed: int, config: SimConfig) -> CriterionResult:
    res = CriterionResult(8, "quadratic-variation equivalence")
    gen = np.random.default_rng(seed)
    for name in CATALOG_NAMES:
        spec = catalog(name)
        worst = 0.0
        for _ in range(QV_EQUIV_POINTS):
            x = 10.0 ** gen.uniform(-2.0, 2.0)
            t = 10.0 ** gen.uniform(-5.0, -0.5)
            lhs, rhs = analysis.qv_condition_equivalence(spec, x, t, analysis.norming(spec, t))
            for u, v in zip(lhs, rhs):
                worst = max(worst, abs(u - v) / max(abs(v), 1e-300))
        res.reports.append(_analytic(
            f"qv-equivalence {name}",
            {"measure": name, "points": QV_EQUIV_POINTS, "seed": seed,
             "x": "10**U(-2, 2)", "t": "10**U(-5, -0.5)"},
            {"max_rel_diff": worst}, {"max_rel_diff": ("<=", QV_EQUIV_RTOL)}))
    rep = verify.check_qv_convergence(catalog("gaussian-plus-gamma"), TrimMode.modulus(1),
                                      [1e-1, 1e-2, 1e-3], 10_000, seed, config=config)
    res.reports.append(_named(rep, "qv-convergence gaussian-plus-gamma modulus(1)"))
    return res


DETERMINISM_COMMANDS = (
    ["verify", "rep", "--measure", "atomic-comb", "--t", "0.5", "--r", "1", "--modulus",
     "--n", "4000"],
    ["verify", "convergence", "--measure", "gaussian-plus-gamma", "--r", "1", "--s", "1",
     "--t-grid", "0.1,0.01", "--n", "3000"],
    ["verify", "charfn", "--measure", "gamma-type", "--t", "0.1", "--r", "1", "--modulus",
     "--n", "3000"],
)


def _output_bytes(directory: str) -> dict:
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = fh.read()
    return out


def criterion_determinism(seed: int, config: SimConfig) -> CriterionResult:
    from . import cli

    res = CriterionResult(9, "byte-identical verify outputs for a fixed seed")
    for argv in DETERMINISM_COMMANDS:
        runs = []
        for threads in (1, 1, max(2, config.threads)):
            with tempfile.TemporaryDirectory() as tmp:
                cli.run([*argv, "--seed", str(seed), "--threads", str(threads), "--out", tmp,
                         "--quiet"])
                runs.append(_output_bytes(tmp))
        label = " ".join(argv[:2])
        if not runs[0]:
            res.failures.append(f"{label}: no output written")
        elif runs[0] != runs[1]:
            res.failures.append(f"{label}: repeated run differs")
        elif runs[0] != runs[2]:
            res.failures.append(f"{label}: output depends on thread count")
    return res


CRITERIA = {
    1: criterion_representation,
    2: criterion_ordered_jumps,
    3: criterion_key_inequality,
    4: criterion_normal_convergence,
    5: criterion_degenerate,
    6: criterion_analytic,
    7: criterion_charfn,
    8: criterion_qv,
    9: criterion_determinism,
}


def run_suite(seed: int = DEFAULT_SEED, config: SimConfig = SimConfig(), only=None,
              progress=None) -> list:
    """Run the selected criteria (all by default) in numeric order."""
    numbers = sorted(CRITERIA) if only is None else sorted(set(only))
    results = []
    for k in numbers:
        result = CRITERIA[k](seed, config)
        results.append(result)
        if progress is not None:
            progress(result)
    return results


def suite_json(results) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2) + "\n"

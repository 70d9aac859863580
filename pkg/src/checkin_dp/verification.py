"""Acceptance checks, shared by ``checkin-dp verify`` and the test suite.

Each check returns a :class:`CriterionResult`. A check passes only if its
assertion holds and it finished inside its time budget. Monte Carlo checks draw
trial ``t`` from ``trial_rng(seed, t)`` with ``seed = 0`` unless told otherwise.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from checkin_dp import accountant as acc
from checkin_dp.learning import ERMTask, excess_risk, lr_avg
from checkin_dp.oracle import exact_posterior, verify_bound
from checkin_dp.protocols import SimConfig, run_trials
from checkin_dp.randomizers import GradientRandomizer, randomized_response

SUITES = {
    "formulas": (1, 2, 7, 9, 11),
    "oracle": (5, 6),
    "montecarlo": (3, 4, 8, 10),
}
SUITES["all"] = tuple(sorted(itertools.chain(*SUITES.values())))


@dataclass
class CriterionResult:
    number: int
    name: str
    ok: bool
    detail: dict
    elapsed: float = 0.0
    budget: float = math.inf
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.ok and self.elapsed < self.budget)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        timing = f"{self.elapsed:.2f}s/{self.budget:g}s"
        return f"[{status}] criterion {self.number:2d} {self.name} ({timing}) {self.summary()}"

    def summary(self) -> str:
        parts = []
        for k, v in self.detail.items():
            if isinstance(v, (dict, list)):
                continue
            parts.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "assertion_held": self.ok, "elapsed_s": self.elapsed, "budget_s": self.budget,
                "detail": self.detail}


def simplified_envelope() -> tuple:
    worst = 0.0
    points = 0
    ok = True
    for e0 in np.round(np.arange(1, 11) / 10, 10):
        spec = acc.LocalSpec(float(e0))
        for delta in (1e-6, 1e-4, 1e-2):
            for m in (10, 100, 1000, 10000):
                for p0 in (0.01, 0.1, 1.0):
                    params = acc.FixedWindowParams(m, m, p0, delta)
                    exact = acc.fixed_window_bound(spec, params).epsilon
                    simple = acc.fixed_window_simplified(spec, params).epsilon
                    ok = ok and exact < simple
                    worst = max(worst, exact / simple)
                    points += 1
    return ok, {"points": points, "max_exact_over_simplified": worst}


FIG_DELTA = 1e-6
FIG_EPS0 = np.geomspace(0.05, 3.0, 60)
FIG_NS = (1000, 10000, 100000)


def figure_curves(eps0=FIG_EPS0, ns=FIG_NS, delta=FIG_DELTA) -> list:
    """Rows ``(eps0, n, eps_new, eps_old, vacuous_new, vacuous_old)`` for the shuffling comparison."""
    rows = []
    for n in ns:
        for e0 in eps0:
            spec = acc.LocalSpec(float(e0))
            new = acc.shuffle_bound_new(spec, n, delta)
            old = acc.shuffle_bound_old(spec, n, delta)
            rows.append((float(e0), n, new.epsilon, old.epsilon, new.vacuous, old.vacuous))
    return rows


def _vacuous_threshold(eps0: np.ndarray, vacuous: np.ndarray) -> float:
    hits = np.flatnonzero(vacuous)
    return float(eps0[hits[0]]) if hits.size else math.inf


def figure_similarity() -> tuple:
    rows = figure_curves()
    dominance = all(new < old for _, _, new, old, vn, vo in rows if not (vn and vo))
    e0 = FIG_EPS0
    new_small = np.array([r[2] for r in rows if r[1] == 1000])
    old_big = np.array([r[3] for r in rows if r[1] == 10000])
    vac_new = np.array([r[4] for r in rows if r[1] == 1000])
    vac_old = np.array([r[5] for r in rows if r[1] == 10000])
    both = ~vac_new & ~vac_old
    rel = np.abs(new_small[both] - old_big[both]) / old_big[both]
    max_rel = float(rel.max()) if rel.size else math.inf
    at = float(e0[both][int(rel.argmax())]) if rel.size else math.nan
    t_new = _vacuous_threshold(e0, vac_new)
    t_old = _vacuous_threshold(e0, vac_old)
    gap = abs(t_new - t_old) if math.isfinite(t_new) and math.isfinite(t_old) else (
        0.0 if t_new == t_old else math.inf)
    ok = dominance and max_rel <= 0.5 and gap < 0.3
    return ok, {"dominance": dominance, "max_rel_diff": max_rel, "max_rel_diff_at_eps0": at,
                "threshold_new_n1e3": t_new, "threshold_old_n1e4": t_old, "threshold_gap": gap}


def dummy_fixed(trials: int = 1000, seed: int = 0, workers=None) -> tuple:
    n, m = 10_000, 100
    ok = True
    detail = {}
    for c in (1, 2, 3):
        p0 = c * m / n
        traces = run_trials(SimConfig(n, m, "fixed", p0=p0), trials, seed, workers=workers)
        mean = float(np.mean([t.dummy_count for t in traces]))
        expected = acc.expected_dummy_fixed(n, m, p0)
        rel = abs(mean - expected) / expected
        cap = m * math.exp(-c) * 1.05
        ok = ok and rel <= 0.02 and mean <= cap
        detail[f"c{c}_mean"] = mean
        detail[f"c{c}_expected"] = expected
        detail[f"c{c}_rel_err"] = rel
        detail[f"c{c}_cap"] = cap
    return ok, detail


def dummy_sliding(trials: int = 1000, seed: int = 0, workers=None) -> tuple:
    n, m = 2000, 50
    traces = run_trials(SimConfig(n, m, "sliding"), trials, seed, workers=workers)
    mean = float(np.mean([t.dummy_count for t in traces]))
    expected = acc.expected_dummy_sliding(n, m)
    rel = abs(mean - expected) / expected
    return rel <= 0.02, {"mean": mean, "expected": expected, "rel_err": rel,
                         "upper": (n - m + 1) / math.e}


ORACLE_SHAPES = ((2, 2), (3, 2), (3, 3))
ORACLE_P0 = (0.5, 1.0)
ORACLE_EPS0 = (0.5, 1.0)
ORACLE_DELTA = 1e-2


def oracle_bounds() -> tuple:
    reports = []
    for e0 in ORACLE_EPS0:
        mech = randomized_response(e0)
        spec = acc.LocalSpec(e0)
        for (n, m), p0 in itertools.product(ORACLE_SHAPES, ORACLE_P0):
            bound = acc.fixed_window_bound(spec, acc.FixedWindowParams(n, m, p0, ORACLE_DELTA))
            reports.append(verify_bound("fixed", n, mech, bound, {"m": m, "p0": p0}))
        for n in (2, 3):
            bound = acc.shuffle_bound_new(spec, n, ORACLE_DELTA)
            reports.append(verify_bound("swap", n, mech, bound))
            reports.append(verify_bound("shuffle", n, mech, bound))
    ok = all(r.passed for r in reports)
    worst = max(reports, key=lambda r: r.delta_emp)
    return ok, {"instances": len(reports), "max_delta_emp": worst.delta_emp,
                "failures": sum(not r.passed for r in reports),
                "reports": [r.to_dict() for r in reports]}


POSTERIOR_SLACK = 1e-9


def oracle_posteriors() -> tuple:
    checked = 0
    worst_gap = -math.inf
    ok = True
    for e0 in ORACLE_EPS0:
        mech = randomized_response(e0)
        for (n, m), p0 in itertools.product(ORACLE_SHAPES, ORACLE_P0):
            for data in itertools.product(mech.inputs, repeat=n):
                for target in range(n):
                    post = exact_posterior("fixed", data, mech, {"m": m, "p0": p0}, target=target)
                    for prefix, q in post:
                        i = len(prefix) + 1
                        gap = float(q[i - 1]) - acc.posterior_bound_fixed(e0, m, i)
                        worst_gap = max(worst_gap, gap)
                        ok = ok and gap <= POSTERIOR_SLACK
                        checked += 1
        for n in (2, 3):
            for data in itertools.product(mech.inputs, repeat=n):
                for prefix, q in exact_posterior("swap", data, mech):
                    i = len(prefix) + 1
                    gap = float(q[i - 1]) - acc.posterior_bound_swap(e0, n, i)
                    worst_gap = max(worst_gap, gap)
                    ok = ok and gap <= POSTERIOR_SLACK
                    checked += 1
    return ok, {"prefixes_checked": checked, "max_excess_over_bound": worst_gap}


def composition_ordering(points: int = 200, seed: int = 0) -> tuple:
    rng = np.random.default_rng(seed)
    delta = 1e-6
    ok = True
    min_gap = math.inf
    for _ in range(points):
        a = float(2.0 * (1.0 - rng.random()))   # (0, 2]
        b = float(0.9 * (1.0 - rng.random()))   # (0, 0.9]
        k = int(rng.integers(10, 1001))
        het = acc.het_composition(a, b, k, delta).epsilon
        kov = acc.kov_composition(acc.het_schedule(a, b, k), delta).epsilon
        ok = ok and het >= kov
        min_gap = min(min_gap, het - kov)
    return ok, {"points": points, "min_het_minus_kov": min_gap}


def bin_loads(trials: int = 2000, seed: int = 0, workers=None) -> tuple:
    n, m, delta = 10_000, 100, 0.05
    bound = acc.bin_load_l2_bound(n, m, delta)
    traces = run_trials(SimConfig(n, m, "avg"), trials, seed, workers=workers)
    norms = np.array([t.load_l2 for t in traces])
    frac = float(np.mean(norms <= bound))
    return frac >= 0.94, {"bound": bound, "fraction_within": frac, "max_norm": float(norms.max())}


def epoch_scaling() -> tuple:
    ns = (10 ** 5, 10 ** 6, 10 ** 7)
    spec = acc.LocalSpec(0.5)
    eps = [acc.epoch_composition(spec, n, 1000, 1e-7, 1e-7).epsilon for n in ns]
    slope = float(np.polyfit(np.log(ns), np.log(eps), 1)[0])
    return -0.6 <= slope <= -0.4, {"slope": slope, "eps_1e5": eps[0], "eps_1e6": eps[1],
                                  "eps_1e7": eps[2]}


UTILITY_N = 10_000
UTILITY_SEEDS = 20


def utility_run(task: ERMTask, sigma: float, m: int, seeds: int = UTILITY_SEEDS,
                seed: int = 0, workers=None) -> float:
    """Mean excess risk of the averaged iterate of the averaged protocol."""
    config = SimConfig(
        UTILITY_N, m, "avg",
        randomizer=GradientRandomizer(task.lipschitz, sigma, "gaussian", task.dimension),
        learning_rate=lambda i: lr_avg(i, task, sigma, UTILITY_N, m),
        radius=task.radius)
    traces = run_trials(config, seeds, seed,
                        dataset_factory=lambda rng: task.sample_dataset(UTILITY_N, rng),
                        workers=workers)
    return float(np.mean([excess_risk(t, task, "average_iterate") for t in traces]))


def utility_trend(seed: int = 0, workers=None) -> tuple:
    task = ERMTask.logistic(dimension=10, radius=1.0).with_optimum()
    low = utility_run(task, 0.01, 100, seed=seed, workers=workers)
    high = utility_run(task, 1.0, 100, seed=seed, workers=workers)
    short = utility_run(task, 0.1, 100, seed=seed, workers=workers)
    long = utility_run(task, 0.1, 1000, seed=seed, workers=workers)
    return low < high and long < short, {
        "risk_sigma0.01_m100": low, "risk_sigma1_m100": high,
        "risk_sigma0.1_m100": short, "risk_sigma0.1_m1000": long}


def reduction_identities(points: int = 100, seed: int = 0) -> tuple:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(points):
        spec = acc.LocalSpec(float(rng.uniform(0.01, 3.0)))
        m = int(rng.integers(1, 10_001))
        n = m + int(rng.integers(0, 10_001))
        p0 = float(rng.random())
        delta = float(10 ** rng.uniform(-10, -1))
        fixed = acc.fixed_window_bound(spec, acc.FixedWindowParams(n, m, p0, delta))
        mismatches += fixed != acc.replacement_bound(spec, m, p0, delta)
        mismatches += acc.sliding_window_bound(spec, n, m, delta) != acc.replacement_bound(spec, m, 1.0, delta)
        mismatches += acc.shuffle_bound_new(spec, n, delta) != acc.swap_bound(spec, n, delta)
    return mismatches == 0, {"points": points, "mismatches": int(mismatches)}


CRITERIA: dict = {
    1: ("simplified-envelope", simplified_envelope, 1.0),
    2: ("shuffle-figure", figure_similarity, 1.0),
    3: ("dummy-fixed", dummy_fixed, 30.0),
    4: ("dummy-sliding", dummy_sliding, 30.0),
    5: ("oracle-bounds", oracle_bounds, 120.0),
    6: ("oracle-posteriors", oracle_posteriors, 120.0),
    7: ("composition-ordering", composition_ordering, 1.0),
    8: ("bin-loads", bin_loads, 60.0),
    9: ("epoch-scaling", epoch_scaling, 1.0),
    10: ("utility-trend", utility_trend, 300.0),
    11: ("reduction-identities", reduction_identities, 1.0),
}


def run_criterion(number: int) -> CriterionResult:
    if number not in CRITERIA:
        raise ValueError(f"unknown criterion {number!r}")
    name, fn, budget = CRITERIA[number]
    start = time.perf_counter()
    ok, detail = fn()
    return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - start, budget)


def run_suite(suite: str, on_result: Callable = None) -> list:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)}")
    results = []
    for number in SUITES[suite]:
        result = run_criterion(number)
        if on_result is not None:
            on_result(result)
        results.append(result)
    return results

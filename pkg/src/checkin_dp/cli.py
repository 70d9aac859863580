"""Command-line interface: ``bound``, ``compare``, ``simulate`` and ``verify``.

Exit codes are 0 on success, 1 when a verification fails and 2 for usage
errors, including parameters that a bound rejects.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from checkin_dp import accountant as acc
from checkin_dp.learning import ERMTask, excess_risk, lr_avg, lr_fixed
from checkin_dp.protocols import SimConfig, run_trials
from checkin_dp.randomizers import GradientRandomizer
from checkin_dp.serialization import dumps, write_csv
from checkin_dp.verification import SUITES, figure_curves, run_suite

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

MECHANISMS = ("fixed", "fixed-simplified", "avg", "sliding", "shuffle-new", "shuffle-old",
              "swap", "replacement", "bins", "epoch", "het", "kov")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class SweepSpec:
    """A one-parameter grid: ``count`` points from ``start`` to ``stop``."""

    name: str
    start: float
    stop: float
    count: int
    scale: str = "log"

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"sweep count must be >= 2, got {self.count!r}")
        if not self.start < self.stop:
            raise ValueError(f"sweep start {self.start!r} must be below stop {self.stop!r}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"sweep scale must be 'linear' or 'log', got {self.scale!r}")
        if self.scale == "log" and self.start <= 0:
            raise ValueError("a log-scale sweep needs positive endpoints")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.mechanism} needs {', '.join(missing)}")


def _spec(args) -> acc.LocalSpec:
    _require(args, "eps0")
    return acc.LocalSpec(args.eps0, args.delta0)


def compute_bound(args) -> tuple:
    """Returns ``(inputs, PrivacyPair)`` for the mechanism named in ``args``."""
    mech = args.mechanism
    if mech in ("fixed", "fixed-simplified"):
        _require(args, "n", "m", "p0", "delta")
        params = acc.FixedWindowParams(args.n, args.m, args.p0, args.delta, args.delta1)
        fn = acc.fixed_window_bound if mech == "fixed" else acc.fixed_window_simplified
        pair = fn(_spec(args), params)
        inputs = {"n": args.n, "m": args.m, "p0": args.p0, "delta": args.delta}
    elif mech == "avg":
        _require(args, "n", "m", "delta", "delta2")
        pair = acc.avg_bound(_spec(args), acc.AvgParams(args.n, args.m, args.delta, args.delta2, args.delta1))
        inputs = {"n": args.n, "m": args.m, "delta": args.delta, "delta2": args.delta2}
    elif mech == "sliding":
        _require(args, "n", "m", "delta")
        pair = acc.sliding_window_bound(_spec(args), args.n, args.m, args.delta, args.delta1)
        inputs = {"n": args.n, "m": args.m, "delta": args.delta}
    elif mech in ("shuffle-new", "swap"):
        _require(args, "n", "delta")
        fn = acc.shuffle_bound_new if mech == "shuffle-new" else acc.swap_bound
        pair = fn(_spec(args), args.n, args.delta, args.delta1)
        inputs = {"n": args.n, "delta": args.delta}
    elif mech == "shuffle-old":
        _require(args, "n", "delta")
        pair = acc.shuffle_bound_old(_spec(args), args.n, args.delta)
        inputs = {"n": args.n, "delta": args.delta}
    elif mech == "replacement":
        _require(args, "m", "w_max", "delta")
        pair = acc.replacement_bound(_spec(args), args.m, args.w_max, args.delta, args.delta1)
        inputs = {"m": args.m, "w_max": args.w_max, "delta": args.delta}
    elif mech == "bins":
        _require(args, "bins", "delta")
        bins = acc.BinSizes(tuple(args.bins), sum(args.bins))
        pair = acc.bin_sgd_bound(_spec(args), bins, args.delta, args.delta1)
        inputs = {"bins": list(bins.ell), "delta": args.delta}
    elif mech == "epoch":
        _require(args, "n", "m", "beta", "delta_slack")
        pair = acc.epoch_composition(_spec(args), args.n, args.m, args.beta, args.delta_slack)
        inputs = {"n": args.n, "m": args.m, "beta": args.beta, "delta_slack": args.delta_slack}
    elif mech == "het":
        _require(args, "a", "b", "k", "delta")
        pair = acc.het_composition(args.a, args.b, args.k, args.delta)
        inputs = {"a": args.a, "b": args.b, "k": args.k, "delta": args.delta}
    elif mech == "kov":
        _require(args, "eps_list", "delta")
        pair = acc.kov_composition(args.eps_list, args.delta)
        inputs = {"eps_list": list(args.eps_list), "delta": args.delta}
    else:  # argparse restricts the choices
        raise UsageError(f"unknown mechanism {mech!r}")
    if args.eps0 is not None and mech not in ("het", "kov"):
        inputs = {"eps0": args.eps0, "delta0": args.delta0, **inputs}
        if args.delta1 is not None:
            inputs["delta1"] = args.delta1
    return inputs, pair


def cmd_bound(args) -> tuple:
    inputs, pair = compute_bound(args)
    record = {"mechanism": args.mechanism, "inputs": inputs, "epsilon": pair.epsilon,
              "delta": pair.delta, "vacuous": pair.vacuous}
    if args.format == "csv":
        header = ["mechanism", "epsilon", "delta", "vacuous"]
        return write_csv([[args.mechanism, pair.epsilon, pair.delta, pair.vacuous]], header), EXIT_OK
    return dumps(record) + "\n", EXIT_OK


COMPARE_HEADER = ("eps0", "n", "eps_new", "eps_old", "vacuous_new", "vacuous_old")


def cmd_compare(args) -> tuple:
    sweep = SweepSpec("eps0", args.start, args.stop, args.count, args.scale)
    rows = figure_curves(sweep.values(), tuple(args.n_list), args.delta)
    if args.format == "json":
        return dumps([dict(zip(COMPARE_HEADER, r)) for r in rows]) + "\n", EXIT_OK
    return write_csv(rows, COMPARE_HEADER), EXIT_OK


SIM_HEADER = ("trial", "seed", "checkins", "dummy_count", "skipped_count", "max_load", "load_l2",
              "final_excess_risk", "avg_excess_risk")


def _learning_rate(args, task: ERMTask, p0: float):
    if args.eta is not None:
        return args.eta
    if args.protocol == "fixed":
        lr_fixed(1, task, args.sigma, args.n, p0, args.m)  # validates n*p0/m > ln 2
        return lambda i: lr_fixed(i, task, args.sigma, args.n, p0, args.m)
    if args.protocol == "avg":
        return lambda i: lr_avg(i, task, args.sigma, args.n, args.m)
    raise UsageError("the sliding protocol has no prescribed schedule; pass --eta")


def cmd_simulate(args) -> tuple:
    p0 = 1.0 if args.p0 is None else args.p0
    task = None
    dataset_factory = None
    randomizer = None
    lr = 0.1
    if args.sigma is not None:
        task = ERMTask.logistic(args.dim, args.radius, eval_size=args.eval_size, seed=args.seed)
        task = task.with_optimum()
        randomizer = GradientRandomizer(args.clip, args.sigma, "gaussian", args.dim)
        lr = _learning_rate(args, task, p0)
        dataset_factory = lambda rng: task.sample_dataset(args.n, rng)
    config = SimConfig(args.n, args.m, args.protocol, p0=p0, batch_size=args.b,
                       randomizer=randomizer, learning_rate=lr,
                       radius=args.radius if task is not None else math.inf,
                       debias=args.debias, seed=args.seed)
    traces = run_trials(config, args.trials, args.seed, dataset_factory, args.workers)
    rows = []
    for t in traces:
        final = avg = None
        if task is not None:
            final = excess_risk(t, task, "last_iterate")
            avg = excess_risk(t, task, "average_iterate")
        rows.append([t.seed, args.seed, int(t.bin_loads.sum()), t.dummy_count, t.skipped_count,
                     t.max_load, t.load_l2, final, avg])
    cols = list(zip(*rows))

    def mean(col):
        vals = [v for v in col if v is not None]
        return float(np.mean(vals)) if vals else None

    aggregate = ["mean", args.seed] + [mean(c) for c in cols[2:]]
    if args.format == "json":
        return dumps({"protocol": args.protocol, "seed": args.seed,
                      "trials": [dict(zip(SIM_HEADER, r)) for r in rows],
                      "mean": dict(zip(SIM_HEADER[2:], aggregate[2:]))}) + "\n", EXIT_OK
    return write_csv(rows + [aggregate], SIM_HEADER), EXIT_OK


def cmd_verify(args) -> tuple:
    def progress(result):
        print(result.line(), file=sys.stderr, flush=True)

    results = run_suite(args.suite, progress)
    ok = all(r.passed for r in results)
    report = {"suite": args.suite, "passed": ok, "criteria": [r.to_dict() for r in results]}
    return dumps(report) + "\n", EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="checkin-dp",
        description="Privacy accounting and simulation for DP-SGD with random check-ins.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats=("json", "csv"), default="json"):
        p.add_argument("--format", choices=formats, default=default)
        p.add_argument("--out", help="write output to this path instead of stdout")
        p.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bound", help="evaluate one closed-form bound")
    b.add_argument("mechanism", choices=MECHANISMS)
    b.add_argument("--eps0", type=float)
    b.add_argument("--delta0", type=float, default=0.0)
    b.add_argument("--n", type=int)
    b.add_argument("--m", type=int)
    b.add_argument("--p0", type=float)
    b.add_argument("--delta", type=float)
    b.add_argument("--delta1", type=float)
    b.add_argument("--delta2", type=float)
    b.add_argument("--w-max", dest="w_max", type=float)
    b.add_argument("--bins", type=int, nargs="+")
    b.add_argument("--beta", type=float, help="per-run failure probability for epoch")
    b.add_argument("--delta-slack", dest="delta_slack", type=float)
    b.add_argument("--a", type=float)
    b.add_argument("--b", type=float)
    b.add_argument("--k", type=int)
    b.add_argument("--eps-list", dest="eps_list", type=float, nargs="+")
    common(b)
    b.set_defaults(handler=cmd_bound)

    c = sub.add_parser("compare", help="new vs earlier shuffling bound over an eps0 sweep")
    c.add_argument("--start", type=float, default=0.05)
    c.add_argument("--stop", type=float, default=3.0)
    c.add_argument("--count", type=int, default=60)
    c.add_argument("--scale", choices=("log", "linear"), default="log")
    c.add_argument("--n", dest="n_list", type=int, nargs="+", default=[1000, 10000, 100000])
    c.add_argument("--delta", type=float, default=1e-6)
    common(c, default="csv")
    c.set_defaults(handler=cmd_compare)

    s = sub.add_parser("simulate", help="run a protocol for several seeded trials")
    s.add_argument("protocol", choices=("fixed", "sliding", "avg"))
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--p0", type=float)
    s.add_argument("--b", type=int, default=1)
    s.add_argument("--sigma", type=float,
                   help="Gaussian noise scale; enables model training on a logistic task")
    s.add_argument("--clip", type=float, default=1.0)
    s.add_argument("--eta", type=float, help="constant learning rate (default: prescribed schedule)")
    s.add_argument("--dim", type=int, default=10)
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--eval-size", dest="eval_size", type=int, default=10_000)
    s.add_argument("--debias", action="store_true")
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--workers", type=int)
    common(s, default="csv")
    s.set_defaults(handler=cmd_simulate)

    v = sub.add_parser("verify", help="run acceptance suites")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--out")
    v.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text, code = args.handler(args)
    except (UsageError, ValueError) as exc:
        print(f"checkin-dp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Exhaustive output laws of the protocols on tiny discrete instances.

Every protocol run on a :class:`DiscreteMechanism` is a mixture over "plans": one
plan fixes all of the protocol's own randomness (check-ins, selections, the
swap or replacement index, the permutation) and leaves independent per-slot
output distributions. The law of the output tuple is the plan-weighted sum of
product distributions, and this module builds it by full enumeration.

Probabilities stay ``Fraction`` while the instance has at most
``EXACT_ATOM_LIMIT`` atoms and switch to ``float`` above that; float checks then
get ``FLOAT_SLACK`` of slack.

A slot of the averaged and binned protocols outputs the sorted tuple of its
clients' outputs (``None`` when skipped). The averaged update is a function of
that tuple, so a bound that holds for the tuple holds for the model stream.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from checkin_dp.accountant import BinSizes, PrivacyPair
from checkin_dp.randomizers import DiscreteMechanism

PROTOCOLS = ("fixed", "avg", "sliding", "replacement", "swap", "shuffle", "bins")
# Protocols whose guarantee is stated for a change of the first record only.
FIRST_RECORD_ONLY = ("replacement", "swap", "bins")
POSTERIOR_PROTOCOLS = ("fixed", "replacement", "swap")
DEFAULT_CAP = 10 ** 7
EXACT_ATOM_LIMIT = 10 ** 4
FLOAT_SLACK = 1e-9

OutputLaw = dict


@dataclass(frozen=True)
class _Plan:
    prob: object
    tag: Optional[int]
    slots: tuple  # one tuple of (output, prob) pairs per output position


def _row(mech: DiscreteMechanism, x) -> dict:
    return {o: p for o, p in zip(mech.outputs, mech.row(x)) if p}


def _uniform_choice(mech: DiscreteMechanism, members: Sequence) -> dict:
    """Output law when one of ``members`` is picked uniformly and randomized."""
    out: dict = {}
    k = len(members)
    for x in members:
        for o, p in _row(mech, x).items():
            out[o] = out.get(o, 0) + Fraction(1, k) * p
    return out


def _multiset(mech: DiscreteMechanism, members: Sequence) -> dict:
    """Law of the sorted tuple of outputs when every member is randomized."""
    if not members:
        return {None: Fraction(1)}
    out = {(): Fraction(1)}
    for x in members:
        nxt: dict = {}
        for key, p in out.items():
            for o, q in _row(mech, x).items():
                k2 = tuple(sorted(key + (o,)))
                nxt[k2] = nxt.get(k2, 0) + p * q
        out = nxt
    return out


def _freeze(dist: dict) -> tuple:
    return tuple(sorted(dist.items(), key=lambda kv: repr(kv[0])))


def _checkin_plans(dataset, mech, m, p0, dummy, target, slot_law, window):
    """Plans for protocols where client ``j`` picks a slot from ``window(j)``.

    ``target``'s slot is always drawn (even when it abstains) so that it can serve
    as the posterior tag.
    """
    n = len(dataset)
    p0 = Fraction(p0)
    per_client = []
    for j in range(n):
        w = window(j)
        opts = []
        for s in w:
            if j == target:
                opts.append(((s, True), p0 / len(w)))
                if p0 != 1:
                    opts.append(((s, False), (1 - p0) / len(w)))
            elif p0:
                opts.append(((s, True), p0 / len(w)))
        if j != target and p0 != 1:
            opts.append(((None, False), 1 - p0))
        per_client.append(opts)
    served = slot_law["served"]
    merged: dict = {}
    for combo in itertools.product(*per_client):
        prob = Fraction(1)
        members = {s: [] for s in served}
        tag = None
        for j, ((s, joined), p) in enumerate(combo):
            prob *= p
            if j == target:
                tag = s
            if joined and s in members:
                members[s].append(dataset[j])
        slots = tuple(_freeze(slot_law["dist"](members[s])) for s in served)
        key = (tag, slots)
        merged[key] = merged.get(key, 0) + prob
    return [_Plan(p, tag, slots) for (tag, slots), p in merged.items()]


def _plans(protocol: str, dataset: Sequence, mech: DiscreteMechanism, params: dict,
           dummy, target: int) -> list:
    n = len(dataset)
    if protocol == "fixed":
        m = int(params["m"])
        single = lambda members: _uniform_choice(mech, members) if members else _row(mech, dummy)
        law = {"served": list(range(1, m + 1)), "dist": single}
        return _checkin_plans(dataset, mech, m, params.get("p0", 1), dummy, target, law,
                              lambda j: range(1, m + 1))
    if protocol == "sliding":
        m = int(params["m"])
        if m > n:
            raise ValueError(f"window m={m} exceeds n={n}")
        single = lambda members: _uniform_choice(mech, members) if members else _row(mech, dummy)
        law = {"served": list(range(m, n + 1)), "dist": single}
        return _checkin_plans(dataset, mech, m, params.get("p0", 1), dummy, target, law,
                              lambda j: range(j + 1, j + m + 1))
    if protocol == "avg":
        m = int(params["m"])
        law = {"served": list(range(1, m + 1)), "dist": lambda members: _multiset(mech, members)}
        return _checkin_plans(dataset, mech, m, 1, dummy, target, law, lambda j: range(1, m + 1))
    if protocol == "replacement":
        weights = [Fraction(w) for w in params["weights"]]
        w_max = Fraction(params.get("w_max", max(weights)))
        if len(weights) != n:
            raise ValueError(f"need {n} weights, got {len(weights)}")
        if any(not 0 <= w <= w_max for w in weights) or not 0 <= w_max <= 1:
            raise ValueError("weights must lie in [0, w_max] with w_max in [0, 1]")
        base = [params.get("replacement", dummy)] + list(dataset[1:])
        plans = []
        for i in range(n):
            for placed, p in ((True, weights[i]), (False, 1 - weights[i])):
                if not p:
                    continue
                g = list(base)
                if placed:
                    g[i] = dataset[0]
                slots = tuple(_freeze(_row(mech, x)) for x in g)
                plans.append(_Plan(Fraction(1, n) * p, i + 1, slots))
        return plans
    if protocol in ("swap", "bins"):
        plans = []
        for i in range(n):
            d = list(dataset)
            d[0], d[i] = d[i], d[0]
            if protocol == "swap":
                slots = tuple(_freeze(_row(mech, x)) for x in d)
            else:
                bins = params["bins"]
                if not isinstance(bins, BinSizes):
                    bins = BinSizes(tuple(bins), n)
                if bins.n != n:
                    raise ValueError(f"bin sizes cover {bins.n} records, dataset has {n}")
                slots, j = [], 0
                for size in bins.ell:
                    slots.append(_freeze(_multiset(mech, d[j:j + size])))
                    j += size
                slots = tuple(slots)
            plans.append(_Plan(Fraction(1, n), i + 1, slots))
        return plans
    if protocol == "shuffle":
        perms = list(itertools.permutations(range(n)))
        return [_Plan(Fraction(1, len(perms)), None,
                      tuple(_freeze(_row(mech, dataset[k])) for k in perm)) for perm in perms]
    raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")


def _atoms(plans: list) -> int:
    return sum(math.prod(len(s) for s in plan.slots) for plan in plans)


def _enumerate(protocol, dataset, mech, params, cap, dummy, target, tagged):
    params = dict(params or {})
    dummy = mech.inputs[0] if dummy is None else dummy
    if any(x not in mech.inputs for x in dataset):
        raise ValueError("dataset contains a value outside the mechanism's inputs")
    plans = _plans(protocol, list(dataset), mech, params, dummy, target)
    size = _atoms(plans)
    if size > cap:
        raise ValueError(f"enumeration needs {size} atoms, above the cap of {cap}")
    exact = size <= EXACT_ATOM_LIMIT
    law: dict = {}
    for plan in plans:
        weight = plan.prob if exact else float(plan.prob)
        for combo in itertools.product(*plan.slots):
            p = weight
            for _, q in combo:
                p = p * (q if exact else float(q))
            outputs = tuple(o for o, _ in combo)
            key = (plan.tag, outputs) if tagged else outputs
            law[key] = law.get(key, 0) + p
    return law, exact


def enumerate_law(protocol: str, dataset: Sequence, mech: DiscreteMechanism,
                  params: Optional[dict] = None, cap: int = DEFAULT_CAP, dummy=None) -> OutputLaw:
    """Exact law of the protocol's output tuple on ``dataset``.

    ``params`` by protocol: ``fixed`` needs ``m`` and ``p0``; ``sliding`` needs
    ``m`` (``p0`` defaults to 1); ``avg`` needs ``m``; ``replacement`` needs
    ``weights`` and optionally ``w_max`` and ``replacement``; ``bins`` needs
    ``bins`` (the swap of the first record happens before binning); ``swap`` and
    ``shuffle`` need nothing. ``dummy`` is the input whose randomization stands in
    for the zero gradient; it defaults to ``mech.inputs[0]``.
    """
    law, _ = _enumerate(protocol, dataset, mech, params, cap, dummy, 0, False)
    return law


def total_mass(law: OutputLaw):
    return sum(law.values())


def hockey_stick(p: OutputLaw, q: OutputLaw, epsilon: float):
    """``sum_o max(P(o) - e^eps Q(o), 0)``; atoms missing from a law have probability 0.

    With rational laws ``e^eps`` is taken as the exact rational value of the double
    ``exp(eps)``, so the result is exact for that multiplier.
    """
    values = list(p.values()) + list(q.values())
    exact = all(isinstance(v, (int, Fraction)) for v in values)
    scale = Fraction(math.exp(epsilon)) if exact else math.exp(epsilon)
    total = Fraction(0) if exact else 0.0
    for o, po in p.items():
        gap = po - scale * q.get(o, 0)
        if gap > 0:
            total += gap
    return total


@dataclass
class BoundReport:
    protocol: str
    params: dict
    epsilon: float
    delta_bound: float
    delta_emp: float
    worst_pair: Optional[tuple]
    exact: bool
    pairs_checked: int
    passed: bool = field(init=False)

    def __post_init__(self):
        slack = 0.0 if self.exact else FLOAT_SLACK
        self.passed = self.delta_emp <= self.delta_bound + slack

    @property
    def margin(self) -> float:
        return self.delta_bound - self.delta_emp

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "params": {k: (list(v.ell) if isinstance(v, BinSizes) else v) for k, v in self.params.items()},
            "epsilon": self.epsilon,
            "delta_bound": self.delta_bound,
            "delta_emp": self.delta_emp,
            "margin": self.margin,
            "worst_pair": None if self.worst_pair is None else [list(d) for d in self.worst_pair],
            "pairs_checked": self.pairs_checked,
            "exact": self.exact,
            "passed": self.passed,
        }


def neighbor_pairs(n: int, domain: Sequence, first_only: bool = False):
    """Ordered pairs of datasets in ``domain^n`` that differ in exactly one record."""
    for d in itertools.product(domain, repeat=n):
        for i in ([0] if first_only else range(n)):
            for v in domain:
                if v != d[i]:
                    yield d, d[:i] + (v,) + d[i + 1:]


def verify_bound(protocol: str, n: int, mech: DiscreteMechanism, bound: PrivacyPair,
                 params: Optional[dict] = None, cap: int = DEFAULT_CAP, dummy=None) -> BoundReport:
    """Largest hockey-stick divergence at ``bound.epsilon`` over all neighboring datasets.

    Both directions are covered because the pair iterator is ordered. Protocols
    whose guarantee is about the first record only are checked on those pairs.
    """
    cache: dict = {}
    exact = True

    def law(d):
        nonlocal exact
        if d not in cache:
            cache[d], is_exact = _enumerate(protocol, d, mech, params, cap, dummy, 0, False)
            exact = exact and is_exact
        return cache[d]

    worst, worst_pair, count = 0, None, 0
    for d, d2 in neighbor_pairs(n, mech.inputs, protocol in FIRST_RECORD_ONLY):
        count += 1
        h = hockey_stick(law(d), law(d2), bound.epsilon)
        if worst_pair is None or h > worst:
            worst, worst_pair = h, (d, d2)
    return BoundReport(protocol, dict(params or {}), bound.epsilon, bound.delta, float(worst),
                       worst_pair, exact, count)


def exact_posterior(protocol: str, dataset: Sequence, mech: DiscreteMechanism,
                    params: Optional[dict] = None, cap: int = DEFAULT_CAP, dummy=None,
                    target: int = 0) -> list:
    """Posterior of the planted index given every realizable output prefix.

    The planted index is the slot of client ``target`` for ``fixed``, the
    replacement slot for ``replacement`` and the swap index for ``swap``. Returns
    ``(prefix, posterior)`` pairs for all prefixes of length ``0 .. T-1``, where
    ``posterior[k]`` is ``Pr[index = k + 1 | prefix]``.
    """
    if protocol not in POSTERIOR_PROTOCOLS:
        raise ValueError(f"posterior is defined for {POSTERIOR_PROTOCOLS}, got {protocol!r}")
    if protocol != "fixed" and target != 0:
        raise ValueError("the planted record is the first one for replacement and swap")
    joint, _ = _enumerate(protocol, dataset, mech, params, cap, dummy, target, True)
    horizon = len(next(iter(joint))[1])
    k = int(params["m"]) if protocol == "fixed" else len(dataset)
    by_prefix: dict = {}
    for (tag, outputs), p in joint.items():
        for length in range(horizon):
            row = by_prefix.setdefault(outputs[:length], [0] * k)
            row[tag - 1] += p
    result = []
    for prefix in sorted(by_prefix, key=lambda t: (len(t), repr(t))):
        row = by_prefix[prefix]
        mass = sum(row)
        if mass:
            result.append((prefix, [v / mass for v in row]))
    return result


@dataclass
class RatioReport:
    max_ratio: float
    bound: float
    worst_event: tuple
    passed: bool

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "bound": self.bound,
                "worst_event": list(self.worst_event), "passed": self.passed}


def verify_ratio_lemma(mech: DiscreteMechanism, dataset: Sequence, k: int, q: float,
                       alternative: Optional[Sequence] = None) -> RatioReport:
    """Checks ``Pr[A(d_k) in S] / Pr[A(BiasedSampling_q(D, k)) in S] <= e^eps0 / (1 + q(e^eps0 - 1))``.

    ``k`` is 1-based. ``alternative`` gives the weights of the other records used
    with probability ``1 - q`` (uniform by default). Events are all singletons and
    their complements, with ``eps0`` measured from the mechanism's table.
    """
    n = len(dataset)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k!r}")
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q!r}")
    others = [j for j in range(n) if j != k - 1]
    if alternative is None:
        alternative = [Fraction(1, len(others))] * len(others) if others else []
    alternative = [Fraction(a) for a in alternative]
    if len(alternative) != len(others) or (others and sum(alternative) != 1):
        raise ValueError("alternative must be a distribution over the other records")
    qf = Fraction(q)
    mix = {o: qf * p for o, p in zip(mech.outputs, mech.row(dataset[k - 1]))}
    for j, a in zip(others, alternative):
        for o, p in zip(mech.outputs, mech.row(dataset[j])):
            mix[o] += (1 - qf) * a * p
    base = dict(zip(mech.outputs, mech.row(dataset[k - 1])))
    worst, event = 0.0, ()
    for o in mech.outputs:
        for label, num, den in ((("=", o)), base[o], mix[o]), ((("!=", o)), 1 - base[o], 1 - mix[o]):
            if den == 0:
                continue
            r = float(Fraction(num) / Fraction(den))
            if r > worst:
                worst, event = r, label
    e = math.exp(mech.epsilon0)
    bound = e / (1 + float(q) * (e - 1))
    return RatioReport(worst, bound, event, worst <= bound + FLOAT_SLACK)


def reservoir_reduction_law(dataset: Sequence, mech: DiscreteMechanism, m: int, p0: float,
                            target: int = 0, dummy=None) -> OutputLaw:
    """The fixed-window law for client ``target``, built through one random replacement.

    Every other client checks in and keeps the slot's stand-in record by
    size-1 reservoir sampling. The target's record then enters through the
    replacement protocol with weights ``p0 / (|S_i| + 1)``, the stand-in of slot 1
    as the replacement record, and the other stand-ins as the remaining data.
    Must equal ``enumerate_law("fixed", ...)``.
    """
    dummy = mech.inputs[0] if dummy is None else dummy
    n = len(dataset)
    p0 = Fraction(p0)
    others = [j for j in range(n) if j != target]
    # state: (stand-ins, counts) -> probability
    states = {((dummy,) * m, (0,) * m): Fraction(1)}
    for j in others:
        nxt: dict = {}
        for (stand, counts), p in states.items():
            if p0 != 1:
                nxt[(stand, counts)] = nxt.get((stand, counts), 0) + p * (1 - p0)
            for s in range(m):
                c = counts[:s] + (counts[s] + 1,) + counts[s + 1:]
                keep = Fraction(1, counts[s] + 1)
                took = stand[:s] + (dataset[j],) + stand[s + 1:]
                for st, w in ((took, keep), (stand, 1 - keep)):
                    if w:
                        key = (st, c)
                        nxt[key] = nxt.get(key, 0) + p * p0 / m * w
        states = nxt
    law: dict = {}
    for (stand, counts), p in states.items():
        weights = [p0 / (c + 1) for c in counts]
        sub = enumerate_law("replacement", (dataset[target],) + stand[1:], mech,
                            {"weights": weights, "w_max": p0, "replacement": stand[0]})
        for o, q in sub.items():
            law[o] = law.get(o, 0) + p * q
    return law

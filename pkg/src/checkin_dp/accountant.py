"""Closed-form privacy accounting for random check-ins, swapping and shuffling.

Every function here is a pure function of its arguments. Bounds are evaluated in
double precision with ``expm1`` for the ``e^eps0 - 1`` factors, so small local
budgets do not lose digits to cancellation. ``checkin_dp.precise`` evaluates the
same quantities at high precision and is what the tests compare against.

Bounds that accept an approximate local randomizer (``delta0 > 0``) first check
that ``delta0`` is below :func:`cheu_delta_threshold`; the randomizer is then
treated as ``8 * eps0``-DP and the returned delta picks up the extra
``count * (e^eps' + 1) * delta1`` term.

Usage caveat: the averaged-updates bound assumes participating clients do not
collude. Nothing here can enforce that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


class InadmissibleDeltaError(ValueError):
    """Raised when a local ``delta0`` is too large for the pure-DP conversion."""

    def __init__(self, delta0: float, threshold: float):
        self.delta0 = delta0
        self.threshold = threshold
        super().__init__(
            f"delta0={delta0!r} exceeds the admissible threshold "
            f"{threshold!r} for converting to an 8*eps0-DP randomizer"
        )


@dataclass(frozen=True)
class PrivacyPair:
    """A central ``(epsilon, delta)`` guarantee.

    ``vacuous`` is set by the bound that produced the pair: it is true when the
    amplified epsilon is no smaller than the local epsilon it started from
    (``8 * eps0`` on the approximate branch), i.e. amplification bought nothing.
    """

    epsilon: float
    delta: float
    vacuous: bool = False

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must be in [0, 1], got {self.delta!r}")

    def is_vacuous(self, reference_eps0: float) -> bool:
        return self.epsilon > 0 and self.epsilon >= reference_eps0


@dataclass(frozen=True)
class LocalSpec:
    """Parameters ``(eps0, delta0)`` of a local randomizer.

    ``epsilon0 = 0`` is accepted so that the no-information limit can be
    evaluated directly.
    """

    epsilon0: float
    delta0: float = 0.0

    def __post_init__(self):
        if not (self.epsilon0 >= 0 and math.isfinite(self.epsilon0)):
            raise ValueError(f"epsilon0 must be finite and >= 0, got {self.epsilon0!r}")
        if not 0 <= self.delta0 < 1:
            raise ValueError(f"delta0 must be in [0, 1), got {self.delta0!r}")


def _check_open_unit(name: str, value: float) -> None:
    if not 0 < value < 1:
        raise ValueError(f"{name} must be in (0, 1), got {value!r}")


def _check_positive_int(name: str, value: int) -> None:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class FixedWindowParams:
    """Inputs to the fixed-window check-in bound."""

    n: int
    m: int
    p0: float
    delta: float
    delta1: Optional[float] = None

    def __post_init__(self):
        _check_positive_int("n", self.n)
        _check_positive_int("m", self.m)
        if not 0 <= self.p0 <= 1:
            raise ValueError(f"p0 must be in [0, 1], got {self.p0!r}")
        _check_open_unit("delta", self.delta)
        if self.delta1 is not None:
            _check_open_unit("delta1", self.delta1)


@dataclass(frozen=True)
class AvgParams:
    """Inputs to the averaged-updates bound."""

    n: int
    m: int
    delta: float
    delta2: float
    delta1: Optional[float] = None

    def __post_init__(self):
        _check_positive_int("n", self.n)
        _check_positive_int("m", self.m)
        _check_open_unit("delta", self.delta)
        _check_open_unit("delta2", self.delta2)
        if self.delta1 is not None:
            _check_open_unit("delta1", self.delta1)


@dataclass(frozen=True)
class CompositionSchedule:
    """Per-mechanism epsilons for heterogeneous composition, in order."""

    eps_list: tuple

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps:
            raise ValueError("composition schedule must be nonempty")
        if any(not e >= 0 for e in eps):
            raise ValueError("every per-step epsilon must be >= 0")
        object.__setattr__(self, "eps_list", eps)

    def __len__(self):
        return len(self.eps_list)


@dataclass(frozen=True)
class BinSizes:
    """Bin sizes ``ell`` of the binned protocol; they must add up to ``n``."""

    ell: tuple
    n: int

    def __post_init__(self):
        ell = tuple(int(v) for v in self.ell)
        object.__setattr__(self, "ell", ell)
        _check_positive_int("n", self.n)
        if not ell:
            raise ValueError("at least one bin is required")
        if any(v < 0 for v in ell):
            raise ValueError("bin sizes must be nonnegative")
        if sum(ell) != self.n:
            raise ValueError(f"bin sizes sum to {sum(ell)}, expected n={self.n}")

    @property
    def l2(self) -> float:
        return math.sqrt(sum(v * v for v in self.ell))


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _expm1(x: float) -> float:
    try:
        return math.expm1(x)
    except OverflowError:
        return math.inf


def _log_inv(delta: float) -> float:
    return -math.log(delta)


def _resolve_local(spec: LocalSpec, delta1: Optional[float]) -> tuple:
    """Returns the epsilon to plug into a pure-DP formula and whether it was mapped."""
    if spec.delta0 == 0:
        if delta1 is not None:
            raise ValueError("delta1 is only used when delta0 > 0")
        return spec.epsilon0, False
    if delta1 is None:
        raise ValueError("delta0 > 0 requires delta1")
    threshold = cheu_delta_threshold(spec.epsilon0, delta1)
    if spec.delta0 > threshold:
        raise InadmissibleDeltaError(spec.delta0, threshold)
    return 8.0 * spec.epsilon0, True


def _finish(eps: float, delta: float, spec: LocalSpec, approx: bool,
            count: int, delta1: Optional[float]) -> PrivacyPair:
    if math.isnan(eps):
        eps = math.inf
    reference = 8.0 * spec.epsilon0 if approx else spec.epsilon0
    vacuous = eps > 0 and eps >= reference
    if approx:
        delta = delta + count * (_exp(eps) + 1.0) * delta1
        if not delta <= 1.0:
            # (eps, 1) holds for every mechanism.
            delta = 1.0
            vacuous = True
    return PrivacyPair(eps, delta, vacuous)


def _replacement_eps(x: float, w_max: float, m: int, delta: float) -> float:
    if w_max == 0 or x == 0:
        return 0.0
    ex = _exp(x)
    em1 = _expm1(x)
    return (w_max * w_max * ex * em1 * em1 / (2 * m)
            + w_max * em1 * math.sqrt(2 * ex * _log_inv(delta) / m))


def _swap_eps(x: float, n: int, delta: float) -> float:
    if x == 0:
        return 0.0
    em1 = _expm1(x)
    return (_exp(3 * x) * em1 * em1 / (2 * n)
            + _exp(1.5 * x) * em1 * math.sqrt(2 * _log_inv(delta) / n))


def replacement_bound(spec: LocalSpec, m: int, w_max: float, delta: float,
                      delta1: Optional[float] = None) -> PrivacyPair:
    """Amplification by one random replacement with weights at most ``w_max``.

    The guarantee is with respect to the first record of a length-``m`` dataset.
    """
    _check_positive_int("m", m)
    if not 0 <= w_max <= 1:
        raise ValueError(f"w_max must be in [0, 1], got {w_max!r}")
    _check_open_unit("delta", delta)
    if delta1 is not None:
        _check_open_unit("delta1", delta1)
    x, approx = _resolve_local(spec, delta1)
    return _finish(_replacement_eps(x, w_max, m, delta), delta, spec, approx, m, delta1)


def fixed_window_bound(spec: LocalSpec, params: FixedWindowParams) -> PrivacyPair:
    """Central guarantee of DP-SGD with ``([m], p0)`` check-ins.

    Identical to :func:`replacement_bound` with ``w_max = p0``.
    """
    return replacement_bound(spec, params.m, params.p0, params.delta, params.delta1)


def fixed_window_simplified(spec: LocalSpec, params: FixedWindowParams) -> PrivacyPair:
    """The ``7 p0 eps0 sqrt(log(1/delta)/m)`` envelope, valid for eps0 <= 1, delta <= 0.01."""
    if spec.delta0 != 0:
        raise ValueError("the simplified bound requires a pure local randomizer (delta0 = 0)")
    if spec.epsilon0 > 1:
        raise ValueError(f"the simplified bound requires epsilon0 <= 1, got {spec.epsilon0!r}")
    if params.delta > 0.01:
        raise ValueError(f"the simplified bound requires delta <= 0.01, got {params.delta!r}")
    eps = 7 * params.p0 * spec.epsilon0 * math.sqrt(_log_inv(params.delta) / params.m)
    return PrivacyPair(eps, params.delta, eps > 0 and eps >= spec.epsilon0)


def sliding_window_bound(spec: LocalSpec, n: int, m: int, delta: float,
                         delta1: Optional[float] = None) -> PrivacyPair:
    """Check-ins into the sliding windows ``{j, ..., j+m-1}``; same as ``w_max = 1``."""
    _check_positive_int("n", n)
    _check_positive_int("m", m)
    if m > n:
        raise ValueError(f"window m={m} exceeds the number of clients n={n}")
    return replacement_bound(spec, m, 1.0, delta, delta1)


def avg_epsilon1(n: int, m: int, delta2: float) -> float:
    """High-probability bound on ``||L||_2 / n`` for the averaged protocol."""
    return math.sqrt(1 / n + 1 / m) + math.sqrt(_log_inv(delta2) / n)


def avg_bound(spec: LocalSpec, params: AvgParams) -> PrivacyPair:
    """Check-ins with averaged updates (every client checks in, p = 1)."""
    x, approx = _resolve_local(spec, params.delta1)
    eps1 = avg_epsilon1(params.n, params.m, params.delta2)
    if x == 0:
        eps = 0.0
    else:
        em1 = _expm1(x)
        eps = (_exp(4 * x) * em1 * em1 * eps1 * eps1 / 2
               + _exp(2 * x) * em1 * eps1 * math.sqrt(2 * _log_inv(params.delta)))
    return _finish(eps, params.delta + params.delta2, spec, approx, params.m, params.delta1)


def bin_sgd_bound(spec: LocalSpec, bins: BinSizes, delta: float,
                  delta1: Optional[float] = None) -> PrivacyPair:
    """Binned DP-SGD after one random swap of the first record, for fixed bin sizes."""
    _check_open_unit("delta", delta)
    if delta1 is not None:
        _check_open_unit("delta1", delta1)
    x, approx = _resolve_local(spec, delta1)
    norm = bins.l2
    n = bins.n
    if x == 0:
        eps = 0.0
    else:
        em1 = _expm1(x)
        eps = (norm * norm * _exp(4 * x) * em1 * em1 / (2 * n * n)
               + norm * _exp(2 * x) * em1 * math.sqrt(2 * _log_inv(delta)) / n)
    return _finish(eps, delta, spec, approx, len(bins.ell), delta1)


def swap_bound(spec: LocalSpec, n: int, delta: float,
               delta1: Optional[float] = None) -> PrivacyPair:
    """Local responses after swapping the first record with a uniform one."""
    _check_positive_int("n", n)
    _check_open_unit("delta", delta)
    if delta1 is not None:
        _check_open_unit("delta1", delta1)
    x, approx = _resolve_local(spec, delta1)
    return _finish(_swap_eps(x, n, delta), delta, spec, approx, n, delta1)


def shuffle_bound_new(spec: LocalSpec, n: int, delta: float,
                      delta1: Optional[float] = None) -> PrivacyPair:
    """Amplification by shuffling; reduces exactly to :func:`swap_bound`."""
    return swap_bound(spec, n, delta, delta1)


def shuffle_bound_old(spec: LocalSpec, n: int, delta: float) -> PrivacyPair:
    """The earlier shuffling bound, kept for comparison. Pure local randomizers only."""
    _check_positive_int("n", n)
    _check_open_unit("delta", delta)
    if spec.delta0 != 0:
        raise ValueError("the earlier shuffling bound only covers delta0 = 0")
    x = spec.epsilon0
    if x == 0:
        return PrivacyPair(0.0, delta, False)
    a = 2 * _exp(2 * x) * _expm1(x)
    eps = a * _expm1(a / n) + a * math.sqrt(2 * _log_inv(delta) / n)
    return _finish(eps, delta, spec, False, n, None)


def het_composition(a: float, b: float, k: int, delta: float) -> PrivacyPair:
    """Composition of k mechanisms with eps_i <= log(1 + a / (k - b(i-1)))."""
    if not a >= 0:
        raise ValueError(f"a must be >= 0, got {a!r}")
    _check_open_unit("b", b)
    _check_positive_int("k", k)
    _check_open_unit("delta", delta)
    scale = k * (1 - b)
    eps = a * a / (2 * scale) + math.sqrt(2 * a * a * _log_inv(delta) / scale)
    return PrivacyPair(eps, delta)


def het_schedule(a: float, b: float, k: int) -> CompositionSchedule:
    """The per-step epsilons ``log(1 + a / (k - b(i-1)))`` for i = 1..k."""
    return CompositionSchedule(tuple(math.log1p(a / (k - b * (i - 1))) for i in range(1, k + 1)))


def kov_composition(schedule, delta: float) -> PrivacyPair:
    """Heterogeneous advanced composition of pure-DP mechanisms.

    ``schedule`` is a :class:`CompositionSchedule` or any sequence of epsilons.
    Uses ``(e^x - 1) / (e^x + 1) = tanh(x / 2)`` for the first sum.
    """
    if not isinstance(schedule, CompositionSchedule):
        schedule = CompositionSchedule(tuple(schedule))
    eps_list = schedule.eps_list
    _check_open_unit("delta", delta)
    first = math.fsum(e * math.tanh(e / 2) for e in eps_list)
    squares = math.fsum(e * e for e in eps_list)
    return PrivacyPair(first + math.sqrt(2 * _log_inv(delta) * squares), delta)


def advanced_composition(per_step: PrivacyPair, k: int, delta_slack: float) -> PrivacyPair:
    """k-fold advanced composition of identical (eps1, delta1) mechanisms."""
    _check_positive_int("k", k)
    _check_open_unit("delta_slack", delta_slack)
    e1 = per_step.epsilon
    eps = e1 * math.sqrt(2 * k * _log_inv(delta_slack)) + k * e1 * _expm1(e1) if e1 else 0.0
    return PrivacyPair(eps, min(1.0, k * per_step.delta + delta_slack))


def epoch_composition(spec: LocalSpec, n: int, m: int, beta_fail: float,
                      delta_slack: float) -> PrivacyPair:
    """One epoch made of ``n // m`` fixed-window runs with ``p0 = m / n``.

    When ``m`` does not divide ``n`` the ``n mod m`` leftover clients are treated
    as not participating and only ``n // m`` runs are composed.
    """
    _check_positive_int("n", n)
    _check_positive_int("m", m)
    _check_open_unit("beta_fail", beta_fail)
    if spec.delta0 != 0:
        raise ValueError("epoch composition requires a pure local randomizer (delta0 = 0)")
    if m > n:
        raise ValueError(f"m={m} exceeds n={n}")
    eps0 = spec.epsilon0
    eps0_cap = (2.0 / 3.0) * math.log(n / (8 * math.sqrt(m)))
    if eps0 > eps0_cap:
        raise ValueError(
            f"epsilon0={eps0!r} violates epsilon0 <= (2/3) log(n / (8 sqrt(m))) = {eps0_cap!r}")
    n_min = _expm1(eps0) ** 2 * _exp(eps0) * math.sqrt(m) * _log_inv(beta_fail)
    if n < n_min:
        raise ValueError(
            f"n={n} violates n >= (e^eps0 - 1)^2 e^eps0 sqrt(m) log(1/beta) = {n_min!r}")
    reps = n // m
    per_run = fixed_window_bound(spec, FixedWindowParams(n, m, m / n, beta_fail))
    total = advanced_composition(PrivacyPair(per_run.epsilon, beta_fail), reps, delta_slack)
    return PrivacyPair(total.epsilon, total.delta, total.is_vacuous(eps0))


def cheu_delta_threshold(epsilon0: float, delta1: float) -> float:
    """Largest local ``delta0`` that still admits an ``8 eps0``-DP replacement within TV ``delta1``."""
    _check_open_unit("delta1", delta1)
    if not epsilon0 >= 0:
        raise ValueError(f"epsilon0 must be >= 0, got {epsilon0!r}")
    if epsilon0 == 0:
        return 0.0
    denom_log = -math.log1p(-math.exp(-5 * epsilon0))
    ratio = math.log(2 / delta1) / denom_log
    return -math.expm1(-epsilon0) * delta1 / (4 * math.exp(epsilon0) * (2 + ratio))


def biased_sampling_ratio(epsilon0: float, q: float) -> float:
    """Worst-case likelihood ratio between a record and a q-biased sample around it."""
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q!r}")
    return _exp(epsilon0) / (1 + q * _expm1(epsilon0))


def posterior_bound_fixed(epsilon0: float, m: int, i: int) -> float:
    """Upper bound on Pr[planted slot = i | first i-1 outputs] for check-ins/replacement."""
    _check_positive_int("m", m)
    if not 1 <= i <= m:
        raise ValueError(f"i must be in [1, {m}], got {i!r}")
    e = _exp(epsilon0)
    return e / (i - 1 + e * (m - i + 1))


def posterior_bound_swap(epsilon0: float, n: int, i: int) -> float:
    """Upper bound on Pr[swap index = i | first i-1 outputs] for one random swap."""
    _check_positive_int("n", n)
    if not 1 <= i <= n:
        raise ValueError(f"i must be in [1, {n}], got {i!r}")
    e = _exp(epsilon0)
    e2 = _exp(2 * epsilon0)
    return e2 / (e2 + (i - 1) + (n - i) * e)


def expected_dummy_fixed(n: int, m: int, p0: float) -> float:
    """Expected number of empty slots, ``m (1 - p0/m)^n``."""
    _check_positive_int("n", n)
    _check_positive_int("m", m)
    if not 0 <= p0 <= 1:
        raise ValueError(f"p0 must be in [0, 1], got {p0!r}")
    return m * (1 - p0 / m) ** n


def expected_dummy_sliding(n: int, m: int) -> float:
    """Expected number of dummy updates over the ``n - m + 1`` served slots."""
    _check_positive_int("n", n)
    _check_positive_int("m", m)
    if m > n:
        raise ValueError(f"window m={m} exceeds the number of clients n={n}")
    return (n - m + 1) * (1 - 1 / m) ** m


def bin_load_l2_bound(n: int, m: int, delta: float) -> float:
    """Bound on ``||L||_2`` for n balls in m bins holding with probability >= 1 - delta."""
    _check_positive_int("n", n)
    _check_positive_int("m", m)
    if not 0 < delta <= 1:
        raise ValueError(f"delta must be in (0, 1], got {delta!r}")
    return math.sqrt(n + n * n / m) + math.sqrt(n * _log_inv(delta))

"""Simulators for distributed DP-SGD with random check-ins, and the reference protocols.

The three main protocols share one layout. A vectorized pre-pass draws every
client's check-in slot and the server's selection for every slot, then a
sequential loop runs the model updates, drawing noise as it goes. When no
dataset is given only the pre-pass runs, which is all the dummy-count and
bin-load experiments need.

Datasets are duck-typed: ``len(dataset)``, ``dataset.dimension`` and
``dataset.gradients(indices, theta)`` returning one gradient row per index.

The small samplers at the bottom (replacement, swap, shuffle, bins) follow the
reference protocols used in the privacy analysis and work on discrete data with
a :class:`~checkin_dp.randomizers.DiscreteMechanism`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from checkin_dp.accountant import BinSizes
from checkin_dp.randomizers import DiscreteMechanism, GradientRandomizer, privatize_gradient
from checkin_dp.serialization import dumps, write_csv

POLICIES = ("fixed", "sliding", "avg")

LearningRate = Union[float, Callable[[int], float]]


@dataclass(frozen=True)
class CheckInPolicy:
    """A client's check-in window ``R_j`` (1-based slot indices) and probability ``p_j``."""

    window: tuple
    probability: float = 1.0
    horizon: Optional[int] = None

    def __post_init__(self):
        window = tuple(sorted(int(s) for s in self.window))
        if not window:
            raise ValueError("check-in window must be nonempty")
        if len(set(window)) != len(window):
            raise ValueError("check-in window has repeated slots")
        if window[0] < 1 or (self.horizon is not None and window[-1] > self.horizon):
            raise ValueError(f"check-in window {window} is outside [1, {self.horizon}]")
        if not 0 <= self.probability <= 1:
            raise ValueError(f"probability must be in [0, 1], got {self.probability!r}")
        object.__setattr__(self, "window", window)

    def sample(self, rng: np.random.Generator) -> Optional[int]:
        """Returns the chosen slot, or ``None`` if the client abstains."""
        if rng.random() >= self.probability:
            return None
        return self.window[int(rng.integers(len(self.window)))]


@dataclass(frozen=True)
class SimConfig:
    """Protocol configuration.

    ``n_slots`` is the window length ``m``. For ``policy="sliding"`` the server
    serves slots ``m..n`` and ``p0`` is the check-in probability (1 in the
    analysis). ``learning_rate`` is a constant or a function of the 1-based
    update index. ``radius`` is the projection radius of the model space.
    """

    n_clients: int
    n_slots: int
    policy: str = "fixed"
    p0: float = 1.0
    batch_size: int = 1
    randomizer: Optional[GradientRandomizer] = None
    learning_rate: LearningRate = 0.1
    radius: float = math.inf
    theta0: Optional[tuple] = None
    debias: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if int(self.n_clients) != self.n_clients or self.n_clients < 0:
            raise ValueError(f"n_clients must be a nonnegative integer, got {self.n_clients!r}")
        if int(self.n_slots) != self.n_slots or self.n_slots < 1:
            raise ValueError(f"n_slots must be a positive integer, got {self.n_slots!r}")
        if not 0 <= self.p0 <= 1:
            raise ValueError(f"p0 must be in [0, 1], got {self.p0!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if self.policy == "avg" and self.batch_size != 1:
            raise ValueError("the averaged protocol updates every slot; batch_size must be 1")
        if self.policy == "avg" and self.p0 != 1:
            raise ValueError("the averaged protocol has every client check in (p0 = 1)")
        if self.policy == "sliding" and self.n_slots > self.n_clients:
            raise ValueError(f"window m={self.n_slots} exceeds the number of clients n={self.n_clients}")
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius!r}")
        if self.debias and self.policy != "fixed":
            raise ValueError("debiasing only applies to the fixed-window protocol")

    def rate(self, i: int) -> float:
        lr = self.learning_rate
        return float(lr(i)) if callable(lr) else float(lr)

    def debias_factor(self) -> float:
        """``1 / (1 - 2 e^{-n p0 / m})``, the upper bound on the missing-update correction."""
        pb = 2 * math.exp(-self.n_clients * self.p0 / self.n_slots)
        if pb >= 1:
            raise ValueError(f"debiasing needs n*p0/m > ln 2, got {self.n_clients * self.p0 / self.n_slots!r}")
        return 1 / (1 - pb)


@dataclass
class ProtocolTrace:
    """Everything a run produced.

    Arrays are indexed by served slot; ``slots`` gives their 1-based slot numbers.
    ``client_slot[j]`` is the slot client ``j`` checked into (``-1`` if it
    abstained or its slot is never served). ``selected`` is ``-1`` where no client
    was used. ``iterates[t]`` is the model after served slot ``t``.
    """

    protocol: str
    slots: np.ndarray
    client_slot: np.ndarray
    selected: np.ndarray
    dummy: np.ndarray
    skipped: np.ndarray
    bin_loads: np.ndarray
    iterates: Optional[np.ndarray] = None
    seed: Optional[int] = None

    @property
    def checkins(self) -> list:
        """``S_i`` for every served slot, each sorted by client index."""
        out = []
        for s in self.slots:
            out.append(np.flatnonzero(self.client_slot == s))
        return out

    @property
    def dummy_count(self) -> int:
        return int(self.dummy.sum())

    @property
    def skipped_count(self) -> int:
        return int(self.skipped.sum())

    @property
    def load_l2(self) -> float:
        return float(np.sqrt(np.sum(self.bin_loads.astype(float) ** 2)))

    @property
    def max_load(self) -> int:
        return int(self.bin_loads.max()) if self.bin_loads.size else 0

    @property
    def final_model(self) -> Optional[np.ndarray]:
        if self.iterates is None or len(self.iterates) == 0:
            return None
        return self.iterates[-1]

    def slot_records(self) -> list:
        records = []
        for t, s in enumerate(self.slots):
            rec = {
                "slot": int(s),
                "checkins": [int(j) for j in np.flatnonzero(self.client_slot == s)],
                "selected": None if self.selected[t] < 0 else int(self.selected[t]),
                "dummy": bool(self.dummy[t]),
                "skipped": bool(self.skipped[t]),
            }
            if self.iterates is not None:
                rec["theta"] = [float(v) for v in self.iterates[t]]
            records.append(rec)
        return records

    def summary(self) -> dict:
        return {
            "protocol": self.protocol,
            "seed": self.seed,
            "slots": int(len(self.slots)),
            "dummy_count": self.dummy_count,
            "skipped_count": self.skipped_count,
            "max_load": self.max_load,
            "load_l2": self.load_l2,
        }

    def to_json(self) -> str:
        return dumps({"summary": self.summary(), "slots": self.slot_records()})

    def to_csv(self) -> str:
        rows = zip(self.slots, self.bin_loads, self.selected,
                   self.dummy.astype(int), self.skipped.astype(int))
        return write_csv(rows, ["slot", "load", "selected", "dummy", "skipped"])


def _check_dataset(config: SimConfig, dataset) -> None:
    if dataset is None:
        return
    if len(dataset) != config.n_clients:
        raise ValueError(f"dataset has {len(dataset)} records, config expects n={config.n_clients}")
    if config.randomizer is None:
        raise ValueError("a randomizer is required to run model updates")
    if dataset.dimension != config.randomizer.dimension:
        raise ValueError(
            f"dataset dimension {dataset.dimension} does not match randomizer dimension "
            f"{config.randomizer.dimension}")


def _rng(config: SimConfig, rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(config.seed)


def _group(client_slot: np.ndarray, slots: np.ndarray) -> tuple:
    """Returns the clients sorted by (slot, index), per-slot offsets and loads for ``slots``."""
    lo = int(slots[0])
    width = len(slots)
    inside = (client_slot >= lo) & (client_slot < lo + width)
    members = np.flatnonzero(inside)
    keys = client_slot[members] - lo
    order = members[np.argsort(keys, kind="stable")]
    loads = np.bincount(keys, minlength=width)
    starts = np.concatenate(([0], np.cumsum(loads)[:-1]))
    return order, starts, loads


def _select(client_slot: np.ndarray, slots: np.ndarray, rng: np.random.Generator) -> tuple:
    order, starts, loads = _group(client_slot, slots)
    selected = np.full(len(slots), -1, dtype=np.int64)
    busy = np.flatnonzero(loads > 0)
    if busy.size:
        pick = rng.integers(0, loads[busy])
        selected[busy] = order[starts[busy] + pick]
    return selected, loads


def _project(theta: np.ndarray, radius: float) -> np.ndarray:
    if math.isinf(radius):
        return theta
    norm = float(np.linalg.norm(theta))
    return theta if norm <= radius else theta * (radius / norm)


def _theta0(config: SimConfig, dimension: int) -> np.ndarray:
    if config.theta0 is None:
        return np.zeros(dimension)
    theta = np.asarray(config.theta0, dtype=float)
    if theta.shape != (dimension,):
        raise ValueError(f"theta0 has shape {theta.shape}, expected ({dimension},)")
    return _project(theta, config.radius)


def _single_client_updates(config: SimConfig, dataset, selected: np.ndarray,
                           rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """The server loop shared by the fixed and sliding protocols."""
    r = config.randomizer
    p = r.dimension
    b = config.batch_size
    theta = _theta0(config, p)
    acc = np.zeros(p)
    zero = np.zeros(p)
    iterates = np.empty((len(selected), p))
    for t, j in enumerate(selected):
        i = t + 1
        if j < 0:
            g = privatize_gradient(r, zero, rng)
        else:
            g = scale * privatize_gradient(r, dataset.gradients(np.array([j]), theta)[0], rng)
        acc = acc + g
        if i % b == 0:
            theta = _project(theta - (config.rate(i) / b) * acc, config.radius)
            acc = np.zeros(p)
        iterates[t] = theta
    return iterates


def run_fixed(config: SimConfig, dataset=None, rng: Optional[np.random.Generator] = None) -> ProtocolTrace:
    """Random check-ins into the fixed window ``[m]`` with one client used per slot.

    Each client checks in with probability ``p0`` at a uniform slot. The server
    picks one checked-in client per slot uniformly, or takes a dummy step on the
    zero gradient when nobody checked in. Gradients accumulate and the model
    moves every ``batch_size`` slots.
    """
    if config.policy != "fixed":
        raise ValueError(f"run_fixed needs policy 'fixed', got {config.policy!r}")
    _check_dataset(config, dataset)
    rng = _rng(config, rng)
    n, m = config.n_clients, config.n_slots
    joins = rng.random(n) < config.p0
    client_slot = rng.integers(1, m + 1, size=n)
    client_slot[~joins] = -1
    slots = np.arange(1, m + 1)
    selected, loads = _select(client_slot, slots, rng)
    dummy = selected < 0
    iterates = None
    if dataset is not None:
        scale = config.debias_factor() if config.debias else 1.0
        iterates = _single_client_updates(config, dataset, selected, rng, scale)
    return ProtocolTrace("fixed", slots, client_slot, selected, dummy,
                         np.zeros(m, dtype=bool), loads, iterates, config.seed)


def run_sliding(config: SimConfig, dataset=None, rng: Optional[np.random.Generator] = None) -> ProtocolTrace:
    """Random check-ins into sliding windows ``{j, ..., j+m-1}``.

    The server serves slots ``m..n``, so ``n - m + 1`` iterates come out. Slots
    before ``m`` are a warm-up without server output, and check-ins landing there
    or after ``n`` are never used.
    """
    if config.policy != "sliding":
        raise ValueError(f"run_sliding needs policy 'sliding', got {config.policy!r}")
    _check_dataset(config, dataset)
    rng = _rng(config, rng)
    n, m = config.n_clients, config.n_slots
    joins = rng.random(n) < config.p0
    client_slot = np.arange(1, n + 1) + rng.integers(0, m, size=n)
    slots = np.arange(m, n + 1)
    client_slot[~joins | (client_slot > n) | (client_slot < m)] = -1
    selected, loads = _select(client_slot, slots, rng)
    dummy = selected < 0
    iterates = None
    if dataset is not None:
        iterates = _single_client_updates(config, dataset, selected, rng)
    return ProtocolTrace("sliding", slots, client_slot, selected, dummy,
                         np.zeros(len(slots), dtype=bool), loads, iterates, config.seed)


def run_avg(config: SimConfig, dataset=None, rng: Optional[np.random.Generator] = None) -> ProtocolTrace:
    """Every client checks in at a uniform slot; each slot averages all its clients.

    Empty slots are skipped and leave the model unchanged. No dummy steps.
    """
    if config.policy != "avg":
        raise ValueError(f"run_avg needs policy 'avg', got {config.policy!r}")
    _check_dataset(config, dataset)
    rng = _rng(config, rng)
    n, m = config.n_clients, config.n_slots
    client_slot = rng.integers(1, m + 1, size=n)
    slots = np.arange(1, m + 1)
    order, starts, loads = _group(client_slot, slots)
    skipped = loads == 0
    iterates = None
    if dataset is not None:
        r = config.randomizer
        theta = _theta0(config, r.dimension)
        iterates = np.empty((m, r.dimension))
        for t in range(m):
            if loads[t]:
                members = order[starts[t]:starts[t] + loads[t]]
                noisy = privatize_gradient(r, dataset.gradients(members, theta), rng)
                step = config.rate(t + 1) / loads[t]
                theta = _project(theta - step * noisy.sum(axis=0), config.radius)
            iterates[t] = theta
    return ProtocolTrace("avg", slots, client_slot, np.full(m, -1, dtype=np.int64),
                         np.zeros(m, dtype=bool), skipped, loads, iterates, config.seed)


def run_protocol(config: SimConfig, dataset=None, rng: Optional[np.random.Generator] = None) -> ProtocolTrace:
    runner = {"fixed": run_fixed, "sliding": run_sliding, "avg": run_avg}[config.policy]
    return runner(config, dataset, rng)


# Reference protocols on discrete data. A randomizer here is either a
# DiscreteMechanism (applied independently at each position) or a callable
# ``(position, prefix, datum, rng) -> output`` for adaptive randomizers.

Randomizer = Union[DiscreteMechanism, Callable]


def _apply(randomizer: Randomizer, data: Sequence, rng: np.random.Generator) -> list:
    outputs = []
    for i, d in enumerate(data):
        if isinstance(randomizer, DiscreteMechanism):
            p = np.array([float(v) for v in randomizer.row(d)])
            outputs.append(randomizer.outputs[int(rng.choice(len(p), p=p / p.sum()))])
        else:
            outputs.append(randomizer(i, tuple(outputs), d, rng))
    return outputs


def replacement_dataset(data: Sequence, weights: Sequence[float], w_max: float, replacement,
                        rng: np.random.Generator) -> list:
    """The dataset ``sigma_I(D)`` after one random replacement: ``d_1`` is swapped out
    for ``replacement`` and then lands at a uniform slot ``I`` with probability ``w_I``."""
    m = len(data)
    if m < 1 or len(weights) != m:
        raise ValueError(f"need one weight per record, got {len(weights)} weights for {m} records")
    if not 0 <= w_max <= 1:
        raise ValueError(f"w_max must be in [0, 1], got {w_max!r}")
    for i, w in enumerate(weights):
        if not 0 <= w <= w_max:
            raise ValueError(f"weight w_{i + 1}={w!r} is outside [0, w_max={w_max!r}]")
    slot = int(rng.integers(m))
    g = [replacement] + list(data[1:])
    if rng.random() < weights[slot]:
        g[slot] = data[0]
    return g


def run_replacement(data: Sequence, weights: Sequence[float], w_max: float, replacement,
                    randomizer: Randomizer, rng: np.random.Generator) -> list:
    """DP-SGD with one random replacement; returns the per-slot randomizer outputs."""
    return _apply(randomizer, replacement_dataset(data, weights, w_max, replacement, rng), rng)


def run_swap(data: Sequence, randomizer: Randomizer, rng: np.random.Generator) -> list:
    """Swaps ``d_1`` with ``d_I`` for a uniform ``I`` and randomizes the result in order."""
    if len(data) < 1:
        raise ValueError("dataset must be nonempty")
    d = list(data)
    i = int(rng.integers(len(d)))
    d[0], d[i] = d[i], d[0]
    return _apply(randomizer, d, rng)


def run_shuffle(data: Sequence, randomizer: Randomizer, rng: np.random.Generator) -> list:
    """Randomizes the records in a uniformly random order."""
    if len(data) < 1:
        raise ValueError("dataset must be nonempty")
    perm = rng.permutation(len(data))
    return _apply(randomizer, [data[k] for k in perm], rng)


def run_bins(data: Sequence, bins: BinSizes, randomizer: Randomizer, rng: np.random.Generator) -> list:
    """Consumes the records in consecutive bins of the given sizes.

    Returns one entry per bin: ``None`` for an empty bin (the model is left as
    is), otherwise the sorted tuple of the bin's randomizer outputs. The sorted
    tuple determines the averaged update.
    """
    if len(data) != bins.n:
        raise ValueError(f"bin sizes cover {bins.n} records, dataset has {len(data)}")
    out = []
    j = 0
    for size in bins.ell:
        if size == 0:
            out.append(None)
            continue
        chunk = _apply(randomizer, data[j:j + size], rng)
        out.append(tuple(sorted(chunk)))
        j += size
    return out


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """The generator for one trial: independent of every other ``(seed, trial)``."""
    return np.random.default_rng([int(seed), int(trial)])


def run_trials(config: SimConfig, trials: int, seed: Optional[int] = None,
               dataset_factory: Optional[Callable] = None, workers: Optional[int] = None) -> list:
    """Runs ``trials`` independent copies of the configured protocol.

    Trial ``t`` draws everything from ``trial_rng(seed, t)``: first its dataset
    (if ``dataset_factory`` is given, called with that generator), then the
    protocol. Results come back in trial order whatever the thread scheduling.
    """
    from concurrent.futures import ThreadPoolExecutor

    if int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials!r}")
    seed = config.seed if seed is None else seed

    def one(t: int) -> ProtocolTrace:
        rng = trial_rng(seed, t)
        dataset = dataset_factory(rng) if dataset_factory is not None else None
        trace = run_protocol(config, dataset, rng)
        trace.seed = t
        return trace

    if workers == 1 or trials == 1:
        return [one(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(trials)))

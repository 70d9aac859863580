"""Local randomizers: discrete tables for exhaustive checks, noisy gradients for simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from checkin_dp.accountant import LocalSpec

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMechanism:
    """A finite randomizer given by ``table[x][o] = Pr[output o | input x]``.

    Entries may be ``Fraction`` (exact) or ``float``; the oracle keeps whichever
    it is given.
    """

    inputs: tuple
    outputs: tuple
    table: tuple

    def __post_init__(self):
        inputs = tuple(self.inputs)
        outputs = tuple(self.outputs)
        table = tuple(tuple(row) for row in self.table)
        if len(set(inputs)) != len(inputs) or len(set(outputs)) != len(outputs):
            raise ValueError("inputs and outputs must not repeat")
        if len(table) != len(inputs):
            raise ValueError(f"table has {len(table)} rows for {len(inputs)} inputs")
        for x, row in zip(inputs, table):
            if len(row) != len(outputs):
                raise ValueError(f"row for input {x!r} has {len(row)} entries, expected {len(outputs)}")
            if any(v < 0 for v in row):
                raise ValueError(f"row for input {x!r} has a negative probability")
            if abs(float(sum(row)) - 1.0) > ROW_SUM_TOL:
                raise ValueError(f"row for input {x!r} sums to {float(sum(row))!r}, not 1")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "table", table)

    def row(self, x) -> tuple:
        return self.table[self.inputs.index(x)]

    def prob(self, x, o):
        return self.table[self.inputs.index(x)][self.outputs.index(o)]

    @property
    def epsilon0(self) -> float:
        """Measured pure-DP level: the largest log ratio between two rows at any output.

        Returns ``inf`` when some output is possible under one input and not another.
        """
        worst = 0.0
        for j in range(len(self.outputs)):
            col = [self.table[i][j] for i in range(len(self.inputs))]
            hi, lo = max(col), min(col)
            if hi == 0:
                continue
            if lo == 0:
                return math.inf
            worst = max(worst, math.log(hi / lo))
        return worst


def randomized_response(epsilon0: float) -> DiscreteMechanism:
    """Binary randomized response on ``{0, 1}`` keeping the input w.p. ``e^eps0 / (1 + e^eps0)``.

    The table is rational with ``keep / flip`` equal to the double ``exp(eps0)``
    exactly, so exhaustive checks at ``eps = eps0`` see a tight, exact mechanism.
    """
    if not (epsilon0 >= 0 and math.isfinite(epsilon0)):
        raise ValueError(f"epsilon0 must be finite and >= 0, got {epsilon0!r}")
    ratio = Fraction(math.exp(epsilon0))
    keep = ratio / (1 + ratio)
    flip = 1 - keep
    return DiscreteMechanism((0, 1), (0, 1), ((keep, flip), (flip, keep)))


@dataclass(frozen=True)
class GradientRandomizer:
    """Clip to ``clip_norm`` in L2, then add i.i.d. noise per coordinate.

    For ``kind="gaussian"`` the noise is ``N(0, noise_scale^2)``; for
    ``kind="laplace"`` it is Laplace with scale ``noise_scale``. A zero
    ``noise_scale`` is allowed and gives the noiseless baseline.
    """

    clip_norm: float
    noise_scale: float
    kind: str = "gaussian"
    dimension: int = 1

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be > 0, got {self.clip_norm!r}")
        if not (self.noise_scale >= 0 and math.isfinite(self.noise_scale)):
            raise ValueError(f"noise_scale must be finite and >= 0, got {self.noise_scale!r}")
        if self.kind not in ("gaussian", "laplace"):
            raise ValueError(f"kind must be 'gaussian' or 'laplace', got {self.kind!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")

    @classmethod
    def laplace_for(cls, clip_norm: float, epsilon0: float, dimension: int) -> "GradientRandomizer":
        """Laplace randomizer that is ``epsilon0``-DP for replace-one inputs.

        Two clipped gradients differ by at most ``2 L`` in L2, hence by at most
        ``2 L sqrt(p)`` in L1, so the per-coordinate scale ``2 L sqrt(p) / eps0``
        suffices. This is conservative.
        """
        if not epsilon0 > 0:
            raise ValueError(f"epsilon0 must be > 0, got {epsilon0!r}")
        return cls(clip_norm, 2 * clip_norm * math.sqrt(dimension) / epsilon0, "laplace", dimension)


def _norms(rows: np.ndarray, single: bool) -> np.ndarray:
    # A lone vector goes through the same routine callers use to measure it.
    return np.array([np.linalg.norm(rows[0])]) if single else np.linalg.norm(rows, axis=1)


def clip(gradient: np.ndarray, clip_norm: float) -> np.ndarray:
    """Rescales rows with L2 norm above ``clip_norm`` onto the sphere of that radius."""
    g = np.asarray(gradient, dtype=float)
    single = g.ndim == 1
    rows = np.atleast_2d(g)
    norms = _norms(rows, single)
    over = norms > clip_norm
    if not over.any():
        return g
    out = rows.copy()
    out[over] *= (clip_norm / norms[over])[:, None]
    # Rounding can leave a rescaled norm an ulp above the cap; shrink until it is not,
    # so that clipping a clipped gradient is a no-op.
    while True:
        still = _norms(out, single) > clip_norm
        if not still.any():
            break
        out[still] *= 1 - np.finfo(float).eps
    return out.reshape(g.shape)


def privatize_gradient(r: GradientRandomizer, gradient, rng: np.random.Generator) -> np.ndarray:
    """Clips and noises one gradient, or each row of a 2-D batch of gradients."""
    g = np.asarray(gradient, dtype=float)
    if g.shape[-1:] != (r.dimension,) or g.ndim > 2:
        raise ValueError(f"expected gradient(s) of dimension {r.dimension}, got shape {g.shape}")
    clipped = clip(g, r.clip_norm)
    if r.noise_scale == 0:
        return clipped
    if r.kind == "gaussian":
        return clipped + rng.normal(0.0, r.noise_scale, size=g.shape)
    return clipped + rng.laplace(0.0, r.noise_scale, size=g.shape)


def gaussian_local_spec(r: GradientRandomizer, delta0: float) -> LocalSpec:
    """Classical Gaussian-mechanism calibration with replace-one sensitivity ``2 L``.

    ``eps0 = (2L / sigma) sqrt(2 ln(1.25 / delta0))``. The classical bound is only
    valid for ``eps0 <= 1``, so larger values are rejected rather than returned.
    """
    if r.kind != "gaussian":
        raise ValueError("gaussian_local_spec needs a gaussian randomizer")
    if not 0 < delta0 < 1:
        raise ValueError(f"delta0 must be in (0, 1), got {delta0!r}")
    if r.noise_scale == 0:
        raise ValueError("a noiseless randomizer is not differentially private")
    eps0 = 2 * r.clip_norm / r.noise_scale * math.sqrt(2 * math.log(1.25 / delta0))
    if eps0 > 1:
        raise ValueError(f"calibrated epsilon0={eps0!r} exceeds 1, outside the classical Gaussian bound")
    return LocalSpec(eps0, delta0)


def discrete_sample(mech: DiscreteMechanism, inputs: Sequence, rng: np.random.Generator) -> list:
    """Draws one output per input from a discrete mechanism."""
    out = []
    for x in inputs:
        p = np.array([float(v) for v in mech.row(x)])
        out.append(mech.outputs[int(rng.choice(len(p), p=p / p.sum()))])
    return out

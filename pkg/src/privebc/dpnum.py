"""Numeric substrate: extended-precision log arithmetic and noise draws.

The stratum pmf/CDF math spans thousands of orders of magnitude, so it
runs in log space at extended precision (default 300 significand bits,
configurable). Laplace noise and EBC sums use native float64. All
randomness comes from a caller-supplied numpy Generator; the library
never reads ambient entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._xp import make_backend


class PrecisionContext:
    """Immutable handle on extended-precision arithmetic at `bits`.

    bits must be at least 53 (native double significand); the default
    300 matches the precision the samplers were validated at.
    """

    __slots__ = ("bits", "xp")

    def __init__(self, bits: int = 300, backend: str = "auto"):
        if bits < 53:
            raise ValueError("precision must be at least 53 bits")
        object.__setattr__(self, "bits", int(bits))
        object.__setattr__(self, "xp", make_backend(int(bits), backend))

    def __setattr__(self, name, value):
        raise AttributeError("PrecisionContext is immutable")

    @property
    def backend_name(self) -> str:
        return self.xp.name

    def real(self, v):
        return self.xp.real(v)

    @property
    def neg_inf(self):
        return self.xp.neg_inf

    def to_float(self, x) -> float:
        return self.xp.to_float(x)

    def __repr__(self) -> str:
        return f"PrecisionContext(bits={self.bits}, backend={self.backend_name})"


DEFAULT_CONTEXT = PrecisionContext()


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget and the sensitivity bounds of the three releases.

    epsilon is the per-party budget. delta0 bounds the quality-function
    sensitivity (1 for the set release); delta1 and delta2 bound the
    count-vector and partial-sum sensitivities and are filled in at call
    time from |R| and |N_a intersect V_Y|.
    """

    epsilon: float
    delta0: float = 1.0
    delta1: float | None = None
    delta2: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")


@dataclass
class SamplerState:
    """Log-space quantile threshold and running log-CDF accumulator.

    psi is a realization of -Exp(1), so it is never positive; c only
    grows as strata are accumulated.
    """

    psi: float
    c: object


def log_add(x, y, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """log(e^x + e^y), computed stably by factoring out the max.

    Inputs may be backend reals or floats; -inf is the exact identity
    element.
    """
    xp = ctx.xp
    if isinstance(x, (int, float)):
        x = xp.real(x)
    if isinstance(y, (int, float)):
        y = xp.real(y)
    if xp.is_neg_inf(x):
        return y
    if xp.is_neg_inf(y):
        return x
    if x >= y:
        hi, lo = x, y
    else:
        hi, lo = y, x
    return xp.add(hi, xp.log1p(xp.exp(xp.sub(lo, hi))))


def sample_laplace(scale: float, rng: np.random.Generator) -> float:
    """One draw from a zero-mean Laplace via inverse CDF of one uniform."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    u = rng.random()
    while u == 0.0:  # measure-zero guard keeps log finite
        u = rng.random()
    if u < 0.5:
        return scale * math.log(2.0 * u)
    return -scale * math.log(2.0 * (1.0 - u))


def sample_neg_exp1(rng: np.random.Generator) -> float:
    """One draw of -Exp(1), i.e. log(U) for U uniform on (0, 1)."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return math.log(u)

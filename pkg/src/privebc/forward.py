"""Party X's private release of its side of the ego network.

The exponential mechanism over all subsets R of X^- (= V_X minus the
ego) with quality q(R) = |R n R*| + |X^- \\ (R u R*)| is sampled exactly
in two stages: first the quality stratum index I (whose law reduces to
Binomial(|X^-|, sigma(t)) with t = eps/(2 delta)), then a uniform
member of that stratum via pick-and-flip. Stage one runs in log space
at extended precision; stage two is a partial Fisher-Yates over X^-.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from . import _kernels
from .dpnum import DEFAULT_CONTEXT, PrecisionContext, PrivacyParams, log_add, sample_neg_exp1
from .graphs import EgoContext, PartitionedGraph, PartyView, ego_context


@dataclass(frozen=True)
class StratumDistribution:
    """Log-space pmf of the stratum index I over {0, ..., n}.

    log_pmf[i] = log C(n, i) + i*t - n*log(1 + e^t) where t is the
    quality exponent eps/(2*delta0). Masses sum to one at context
    precision; exp(log_pmf) equals the Binomial(n, e^t/(1+e^t)) pmf.
    """

    n: int
    t: float
    log_pmf: tuple
    ctx: PrecisionContext

    def pmf_floats(self) -> np.ndarray:
        xp = self.ctx.xp
        return np.array([self.ctx.to_float(xp.exp(p)) for p in self.log_pmf])


@dataclass(frozen=True)
class ForwardMsg:
    """The set release: R, a subset of X^- as dense node indices."""

    R: frozenset[int]


@lru_cache(maxsize=8)
def _log_int_table(n: int, bits: int, backend: str) -> tuple:
    """log(1), ..., log(n) at extended precision; pure constants."""
    ctx = PrecisionContext(bits, backend) if backend != "auto" else PrecisionContext(bits)
    xp = ctx.xp
    return tuple(xp.log(xp.real(i)) for i in range(1, n + 1))


def quality(R: Iterable[int], R_star: Iterable[int], X_minus: Iterable[int]) -> int:
    """q(R) = |R n R*| + |X^- \\ (R u R*)|, i.e. |X^-| - |R delta R*|."""
    r = frozenset(R)
    rs = frozenset(R_star)
    xm = frozenset(X_minus)
    if not r <= xm or not rs <= xm:
        raise ValueError("R and R_star must be subsets of X_minus")
    return len(r & rs) + len(xm - (r | rs))


def stratum_distribution(n: int, params: PrivacyParams,
                         ctx: PrecisionContext = DEFAULT_CONTEXT) -> StratumDistribution:
    """Exact stratum pmf for |X^-| = n at the context's precision."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    xp = ctx.xp
    t = xp.div(xp.real(params.epsilon), xp.real(2.0 * params.delta0))
    norm = xp.mul(xp.real(n), xp.log1p(xp.exp(t)))
    logs = _log_int_table(n, ctx.bits, ctx.backend_name)
    pmf = [xp.sub(xp.real(0), norm)]
    log_choose = xp.real(0)
    acc_t = xp.real(0)
    for i in range(1, n + 1):
        # log C(n,i) accumulates as log(n-i+1) - log(i); the i*t term
        # accumulates alongside so each step is the previous plus
        # log(n-i+1) - log(i) + t
        log_choose = xp.sub(xp.add(log_choose, logs[n - i]), logs[i - 1])
        acc_t = xp.add(acc_t, t)
        pmf.append(xp.sub(xp.add(log_choose, acc_t), norm))
    return StratumDistribution(n=n, t=ctx.to_float(t), log_pmf=tuple(pmf), ctx=ctx)


def inverse_transform_sample(dist: StratumDistribution, rng: np.random.Generator) -> int:
    """Sample the stratum index by log-space inverse transform.

    Draws psi = -Exp(1), then scans the streaming log-CDF c: starting
    from c = log_pmf[0], iteration I over 1..n returns I-1 the first
    time c >= psi holds at loop entry, and n if the scan completes.
    """
    ctx = dist.ctx
    xp = ctx.xp
    psi = xp.real(sample_neg_exp1(rng))
    n = dist.n
    c = dist.log_pmf[0]
    for i in range(1, n + 1):
        if c >= psi:
            return i - 1
        c = log_add(c, dist.log_pmf[i], ctx)
    return n


def pick_and_flip(X_minus: Iterable[int] | np.ndarray, R_star: Iterable[int],
                  I: int, rng: np.random.Generator) -> frozenset[int]:
    """Uniform member of the quality-I stratum.

    Samples |X^-| - I distinct nodes uniformly from X^- (partial
    Fisher-Yates) and toggles each one's membership starting from R*.
    Every toggle grows the symmetric difference by one, so the result
    has quality exactly I.
    """
    if isinstance(X_minus, np.ndarray):
        arr = X_minus
    else:
        arr = np.array(sorted(X_minus), dtype=np.int64)
    n = arr.size
    if not 0 <= I <= n:
        raise ValueError(f"stratum index {I} out of range 0..{n}")
    k = n - I
    offsets = rng.integers(0, np.arange(n, n - k, -1, dtype=np.int64))
    scratch = arr.copy()
    _kernels.partial_shuffle(scratch, offsets.astype(np.int64))
    flips = scratch[n - k:]
    return frozenset(R_star) ^ frozenset(int(v) for v in flips)


def forward_message(pg: PartitionedGraph | PartyView, a: object, params: PrivacyParams,
                    ctx: PrecisionContext = DEFAULT_CONTEXT,
                    rng: np.random.Generator | None = None) -> ForwardMsg:
    """X's private set release for ego a: the full two-stage sampler."""
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    ectx = ego_context(pg, a)
    return forward_message_from_context(ectx, params, ctx, rng)


def forward_message_from_context(ectx: EgoContext, params: PrivacyParams,
                                 ctx: PrecisionContext,
                                 rng: np.random.Generator) -> ForwardMsg:
    if params.delta0 != 1.0:
        raise ValueError("the set release runs with quality sensitivity 1")
    dist = stratum_distribution(ectx.x_minus_sorted.size, params, ctx)
    idx = inverse_transform_sample(dist, rng)
    r = pick_and_flip(ectx.x_minus_sorted, ectx.R_star, idx, rng)
    return ForwardMsg(R=r)

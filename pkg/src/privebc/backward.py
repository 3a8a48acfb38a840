"""Party Y's private reply: noisy spanning-path counts and partial sum.

Given the set R received from X, Y releases (1) for every pair of
i in R and j in its side of the ego network, a Laplace-noised count of
2-paths i-k-j with intermediate k on Y's side, and (2) a Laplace-noised
partial EBC sum over non-adjacent pairs inside its side of the ego
network. Each half runs with budget eps/2; sensitivities are 2|R| for
the count vector and |N_a n V_Y| - 1 for the partial sum, so the noise
scales are 2*delta1/eps and 2*delta2/eps. Noisy values are released
raw (possibly negative); any clamping is X-side post-processing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dpnum import PrivacyParams, sample_laplace
from .graphs import PartitionedGraph, PartyView


@dataclass(frozen=True)
class BackwardMsg:
    """Y's reply: T maps (i, j) index pairs to noisy counts; S_Y is the
    noisy partial sum. T's key set is exactly R x (N_a n V_Y)."""

    T: dict[tuple[int, int], float]
    S_Y: float


class DegenerateEgoError(ValueError):
    """Y's side of the ego network is too small for a backward message."""


def _y_ego_sorted(pg: PartitionedGraph | PartyView, a_idx: int) -> np.ndarray:
    """N_a n V_Y as a sorted index array, from edges the caller knows."""
    n_a = pg.graph.neighbors(a_idx)
    return np.array(sorted(v for v in n_a if not pg.is_x(v)), dtype=np.int64)


def _spanning_core_matrix(pg: PartitionedGraph | PartyView, r_sorted: np.ndarray,
                          y_ego: np.ndarray) -> np.ndarray:
    """Noiseless counts: core[r, j] = #{k in y_ego : r~k and k~j}."""
    indptr, indices = pg.graph.csr()
    b = _kernels.bipartite_dense(indptr, indices, r_sorted, y_ego)
    m1 = _kernels.induced_dense(indptr, indices, y_ego)
    return b.astype(np.float64) @ m1.astype(np.float64)


def _partial_sum_core(pg: PartitionedGraph | PartyView, a_idx: int,
                      r_sorted: np.ndarray, y_ego: np.ndarray) -> float:
    """Noiseless partial sum over non-adjacent pairs inside y_ego.

    Intermediates are restricted to R u {a} u y_ego; a itself always
    joins both endpoints, so every denominator is at least 1.
    """
    indptr, indices = pg.graph.csr()
    m1 = _kernels.induced_dense(indptr, indices, y_ego).astype(np.float64)
    b = _kernels.bipartite_dense(indptr, indices, r_sorted, y_ego).astype(np.float64)
    paths = 1.0 + b.T @ b + m1 @ m1
    iu = np.triu_indices(y_ego.size, k=1)
    disconnected = m1[iu] == 0
    return float(np.sum(1.0 / paths[iu][disconnected]))


def spanning_counts(pg: PartitionedGraph | PartyView, a: object, R: frozenset[int],
                    params: PrivacyParams, rng: np.random.Generator) -> dict[tuple[int, int], float]:
    """Noisy 2-path counts for every (i, j) in R x (N_a n V_Y).

    All pairs are released, adjacent ones included; filtering happens
    on X's side. Fresh Laplace noise of scale 2*(2|R|)/eps per entry,
    drawn in sorted (i, j) order. Empty R yields an empty map with no
    noise drawn.
    """
    a_idx = pg.graph.index_of(a)
    y_ego = _y_ego_sorted(pg, a_idx)
    return _spanning_counts_idx(pg, y_ego, R, params, rng)


def _spanning_counts_idx(pg: PartitionedGraph | PartyView, y_ego: np.ndarray,
                         R: frozenset[int], params: PrivacyParams,
                         rng: np.random.Generator,
                         noiseless: bool = False) -> dict[tuple[int, int], float]:
    if not R:
        return {}
    r_sorted = np.array(sorted(R), dtype=np.int64)
    core = _spanning_core_matrix(pg, r_sorted, y_ego)
    delta1 = 2.0 * len(R)
    scale = 2.0 * delta1 / params.epsilon
    out: dict[tuple[int, int], float] = {}
    for ri in range(r_sorted.size):
        i = int(r_sorted[ri])
        for ci in range(y_ego.size):
            j = int(y_ego[ci])
            v = core[ri, ci]
            if not noiseless:
                v += sample_laplace(scale, rng)
            out[(i, j)] = float(v)
    return out


def partial_ebc_y(pg: PartitionedGraph | PartyView, a: object, R: frozenset[int],
                  params: PrivacyParams, rng: np.random.Generator) -> float:
    """Noisy partial EBC sum over Y's side of the ego network."""
    a_idx = pg.graph.index_of(a)
    y_ego = _y_ego_sorted(pg, a_idx)
    if y_ego.size < 2:
        raise DegenerateEgoError("need at least two Y-side ego neighbours")
    return _partial_ebc_y_idx(pg, a_idx, y_ego, R, params, rng)


def _partial_ebc_y_idx(pg: PartitionedGraph | PartyView, a_idx: int, y_ego: np.ndarray,
                       R: frozenset[int], params: PrivacyParams,
                       rng: np.random.Generator, noiseless: bool = False) -> float:
    r_sorted = np.array(sorted(R), dtype=np.int64)
    s_y = _partial_sum_core(pg, a_idx, r_sorted, y_ego)
    if not noiseless:
        delta2 = float(y_ego.size - 1)
        s_y += sample_laplace(2.0 * delta2 / params.epsilon, rng)
    return s_y


def backward_message(pg: PartitionedGraph | PartyView, a: object, R: frozenset[int],
                     params: PrivacyParams, rng: np.random.Generator) -> BackwardMsg:
    """Y's full reply; requires |N_a n V_Y| >= 2 (the caller gates the
    degenerate cases, where no reply is sent at all)."""
    a_idx = pg.graph.index_of(a)
    y_ego = _y_ego_sorted(pg, a_idx)
    if y_ego.size < 2:
        raise DegenerateEgoError("need at least two Y-side ego neighbours")
    t = _spanning_counts_idx(pg, y_ego, R, params, rng)
    s_y = _partial_ebc_y_idx(pg, a_idx, y_ego, R, params, rng)
    return BackwardMsg(T=t, S_Y=s_y)

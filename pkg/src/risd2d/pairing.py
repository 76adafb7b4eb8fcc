"""D2D-CU pairing as a maximum-weight bipartite matching."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .link_opt import PairSolution


@dataclass
class WeightMatrix:
    """Marginal gains of reusing CU k's subchannel for D2D pair j.

    ``weights[j, k] = R_jk - R_k`` for feasible edges, NaN otherwise;
    ``base`` is the rate of all CUs transmitting alone.
    """

    weights: np.ndarray
    base: float

    @property
    def feasible(self) -> np.ndarray:
        return ~np.isnan(self.weights)

    def objective(self, assignment: Sequence[Optional[int]]) -> float:
        """Sum-rate objective of a matching, i.e. base plus selected gains."""
        return math.fsum([self.base] + [self.weights[j, k] for j, k in enumerate(assignment)
                                        if k is not None])


def build_weight_matrix(pair_solutions: Sequence[Sequence[PairSolution]],
                        cu_only_rates: Sequence[float]) -> WeightMatrix:
    J = len(pair_solutions)
    K = len(cu_only_rates)
    weights = np.full((J, K), np.nan)
    for j in range(J):
        if len(pair_solutions[j]) != K:
            raise ValueError("pair_solutions must cover every (j, k)")
        for k in range(K):
            sol = pair_solutions[j][k]
            if sol.feasible:
                weights[j, k] = sol.rate_sum - cu_only_rates[k]
    return WeightMatrix(weights=weights, base=math.fsum(cu_only_rates))


def hungarian_match(weights: WeightMatrix) -> list[Optional[int]]:
    """Assignment maximizing the number of feasible matches, then total weight.

    Infeasible edges get a penalty larger than any achievable weight total,
    so they are only chosen when a D2D pair has no feasible partner left;
    such picks are dropped afterwards and the pair stays unmatched.
    """
    w = weights.weights
    J, K = w.shape
    if J > K:
        raise ValueError(f"need J <= K, got J={J}, K={K}")
    feas = ~np.isnan(w)
    if not feas.any():
        return [None] * J
    span = np.abs(w[feas]).sum() + 1.0
    cost = np.where(feas, w, -2.0 * span * (J + 1))
    rows, cols = linear_sum_assignment(cost, maximize=True)
    assignment: list[Optional[int]] = [None] * J
    for j, k in zip(rows, cols):
        if feas[j, k]:
            assignment[j] = int(k)
    return assignment

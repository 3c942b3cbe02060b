"""Gated minimum-cost assignment.

Pairs whose cost exceeds the gate are inadmissible. The solver maximises the
number of admissible pairs, then minimises their total cost, then prefers
the lexicographically smallest list of (row, col) pairs so that equal-cost
instances always resolve the same way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from edgeidle.errors import ValidationError


@dataclass
class Assignment:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def total_cost(self, cost) -> float:
        cost = np.asarray(cost, dtype=float)
        return float(sum(cost[r, c] for r, c in self.matches))


class _GatedProblem:
    """Cost matrix augmented with one dummy slot per row and per column.

    Leaving a row or a column unmatched costs ``unmatched``; inadmissible
    pairs are infeasible.
    """

    def __init__(self, cost: np.ndarray, gate: float):
        self.cost = cost
        self.admissible = cost <= gate
        self.unmatched = float(np.abs(cost).max() * min(cost.shape) + abs(gate) + 1.0)

    def augmented(self, rows: list[int], cols: list[int]) -> np.ndarray:
        n_r, n_c = len(rows), len(cols)
        sub_cost = self.cost[np.ix_(rows, cols)]
        sub_adm = self.admissible[np.ix_(rows, cols)]
        m = np.full((n_r + n_c, n_c + n_r), np.inf)
        m[:n_r, :n_c] = np.where(sub_adm, sub_cost, np.inf)
        m[np.arange(n_r), n_c + np.arange(n_r)] = self.unmatched
        m[n_r + np.arange(n_c), np.arange(n_c)] = self.unmatched
        m[n_r:, n_c:] = 0.0
        return m

    def solve(self, rows: list[int], cols: list[int]) -> tuple[float, dict[int, int]]:
        total, pairs, _ = self.solve_full(rows, cols)
        return total, pairs

    def solve_full(self, rows: list[int], cols: list[int]) -> tuple[float, dict[int, int], bool]:
        """Optimal total and pairs, plus whether another assignment might reach the same total."""
        n_r, n_c = len(rows), len(cols)
        if n_r == 0 or n_c == 0:
            return self.unmatched * (n_r + n_c), {}, False
        m = self.augmented(rows, cols)
        r_idx, c_idx = linear_sum_assignment(m)
        total = float(m[r_idx, c_idx].sum())
        pairs = {rows[r]: cols[c] for r, c in zip(r_idx, c_idx) if r < n_r and c < n_c}
        sigma = np.empty(len(m), dtype=int)
        sigma[r_idx] = c_idx
        return total, pairs, _may_tie(m, sigma, n_r, n_c, 1e-9 * max(1.0, abs(total)))


def _may_tie(m: np.ndarray, sigma: np.ndarray, n_r: int, n_c: int, tol: float) -> bool:
    """True unless dual potentials prove no other real pairing is optimal.

    Column potentials come from Bellman-Ford over the residual graph of the
    assignment ``sigma``; an unused admissible pair with zero reduced cost
    could enter an equally cheap assignment.
    """
    size = len(m)
    assigned = m[np.arange(size), sigma]
    step = m - assigned[:, None]
    v = np.zeros(size)
    for _ in range(size):
        relaxed = np.minimum(v, np.min(v[sigma][:, None] + step, axis=0))
        if np.array_equal(relaxed, v):
            break
        v = relaxed
    else:
        return True
    u = assigned - v[sigma]
    real = m[:n_r, :n_c]
    reduced = real - u[:n_r, None] - v[None, :n_c]
    unused = np.isfinite(real) & (np.arange(n_c)[None, :] != sigma[:n_r, None])
    return bool(np.any(reduced[unused] <= tol))


def _lexicographic(problem: _GatedProblem, optimum: float, current: dict[int, int]) -> dict[int, int]:
    """Walk rows in order, fixing each to the smallest column that still admits an optimal completion."""
    cost = problem.cost
    n_rows, n_cols = cost.shape
    tol = 1e-9 * max(1.0, abs(optimum))
    free_rows = list(range(n_rows))
    free_cols = list(range(n_cols))
    fixed: dict[int, int] = {}
    fixed_cost = 0.0
    for r in range(n_rows):
        free_rows.remove(r)
        c0 = current.get(r)
        chosen = None
        for c in free_cols:
            if c0 is not None and c >= c0:
                break
            if not problem.admissible[r, c]:
                continue
            rest_cols = [k for k in free_cols if k != c]
            rest_total, rest = problem.solve(free_rows, rest_cols)
            if abs(fixed_cost + cost[r, c] + rest_total - optimum) <= tol:
                chosen, current = c, rest
                break
        if chosen is None:
            chosen = c0
        if chosen is None:
            fixed_cost += problem.unmatched
            continue
        fixed[r] = chosen
        fixed_cost += cost[r, chosen]
        free_cols.remove(chosen)
    return fixed


def hungarian_assign(cost, gate: float) -> Assignment:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValidationError(f"Cost matrix must be 2-D, got shape {cost.shape}")
    n_rows, n_cols = cost.shape
    if cost.size == 0:
        return Assignment([], list(range(n_rows)), list(range(n_cols)))
    if not np.all(np.isfinite(cost)):
        raise ValidationError("Cost matrix must be finite")

    problem = _GatedProblem(cost, gate)
    optimum, current, tied = problem.solve_full(list(range(n_rows)), list(range(n_cols)))
    # a unique optimum is already the canonical one
    fixed = _lexicographic(problem, optimum, current) if tied else current

    matches = sorted(fixed.items())
    matched_cols = set(fixed.values())
    return Assignment(
        matches=[(int(r), int(c)) for r, c in matches],
        unmatched_rows=[r for r in range(n_rows) if r not in fixed],
        unmatched_cols=[c for c in range(n_cols) if c not in matched_cols],
    )

"""Restricted master problem: covering LP over the column pool and the IP finisher.

    min  sum_j c_j x_j   s.t.  sum_j a_ij x_j >= 1  (every trip i),  x >= 0

The LP is solved by a revised primal simplex over the pool; the final pool
is turned into an integer cover by depth-first branch-and-bound.
"""
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Set, Tuple
import logging
import time

import numpy as np

BIG = 100.0  # cost of an artificial single-trip column
RC_TOLERANCE = 1e-6
PIVOT_TOLERANCE = 1e-9
OPTIMALITY_TOLERANCE = 1e-9
BLAND_AFTER = 25  # consecutive degenerate pivots before switching to Bland's rule
MAX_PIVOTS = 50_000
REFACTOR_EVERY = 64
FEASIBILITY_TOLERANCE = 1e-9
COST_UNITS = (1.0, 0.5, 0.25, 0.1)

logger = logging.getLogger(__name__)


class MasterError(Exception):
    """Base class for master problem failures."""


class NumericalFailure(MasterError):
    """Raised when the simplex cannot make progress."""


class NotImproving(MasterError):
    """Raised when a submitted column does not have negative reduced cost."""


class PoolInfeasible(MasterError):
    """Raised when the pool cannot cover every trip."""


@dataclass(frozen=True)
class Column:
    """A duty (or an artificial single-trip cover) in the pool."""
    edge_path: Tuple[int, ...]
    rows: Tuple[int, ...]
    cost: float
    artificial: bool = False

    @property
    def key(self) -> Tuple:
        if self.artificial:
            return ("artificial",) + self.rows
        return self.edge_path

    @classmethod
    def make_artificial(cls, row: int) -> "Column":
        return cls(edge_path=(), rows=(row,), cost=BIG, artificial=True)


@dataclass
class LpResult:
    objective: float
    x: np.ndarray
    duals: np.ndarray
    basis: List[int]
    pivots: int


@dataclass
class RmpState:
    """Column pool plus the latest LP solution; single owner, mutated in place."""
    m: int
    columns: List[Column] = field(default_factory=list)
    lp_solution: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = 0.0
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis: Optional[List[int]] = None
    _keys: Set[Tuple] = field(default_factory=set, repr=False)
    _matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)
    _costs: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def __post_init__(self):
        if self.duals.size != self.m:
            self.duals = np.zeros(self.m)
        self._keys = {c.key for c in self.columns}

    @classmethod
    def with_artificials(cls, m: int) -> "RmpState":
        state = cls(m=m, columns=[Column.make_artificial(i) for i in range(m)])
        state.lp_solution = np.ones(m)
        state.objective = BIG * m
        state.duals = np.full(m, BIG)
        return state

    @property
    def matrix(self) -> np.ndarray:
        """Dense 0/1 coverage matrix (rows x pooled columns), grown lazily."""
        if self._matrix.shape[0] != self.m:
            self._matrix = np.zeros((self.m, 0))
        have = self._matrix.shape[1]
        if have < len(self.columns):
            block = coverage_matrix(self.columns[have:], self.m)
            self._matrix = np.hstack([self._matrix, block])
        return self._matrix

    @property
    def costs(self) -> np.ndarray:
        have = self._costs.size
        if have < len(self.columns):
            fresh = np.array([c.cost for c in self.columns[have:]], dtype=float)
            self._costs = np.concatenate([self._costs, fresh])
        return self._costs

    def uses_artificials(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return any(c.artificial and x[j] > tol for j, c in enumerate(self.columns))


def coverage_matrix(columns: Sequence[Column], m: int) -> np.ndarray:
    matrix = np.zeros((m, len(columns)))
    for j, col in enumerate(columns):
        matrix[list(col.rows), j] = 1.0
    return matrix


def _factor(full: np.ndarray, current: np.ndarray) -> np.ndarray:
    return np.linalg.inv(full[:, current])


def _update_inverse(b_inv: np.ndarray, direction: np.ndarray, leaving: int) -> None:
    """Rank-one update of the basis inverse after column `leaving` is replaced."""
    pivot_row = b_inv[leaving] / direction[leaving]
    b_inv -= np.outer(direction, pivot_row)
    b_inv[leaving] = pivot_row


def solve_covering_lp(matrix: np.ndarray, costs: np.ndarray,
                      basis: Optional[Sequence[int]] = None,
                      max_pivots: int = MAX_PIVOTS) -> LpResult:
    """Revised primal simplex for min c'x s.t. Ax >= 1, x >= 0.

    Variables are numbered surplus (0..m-1), internal feasibility variables
    (m..2m-1, Big-M cost) and then the columns of `matrix`, so a basis stays
    valid when columns are appended. Pricing is Dantzig's rule until
    BLAND_AFTER consecutive degenerate pivots, then Bland's rule until the
    next nondegenerate pivot. The basis inverse is updated in place and
    refactored every REFACTOR_EVERY pivots.

    Raises:
        PoolInfeasible: some row is not covered by any column
        NumericalFailure: singular basis, unbounded direction or pivot cap hit
    """
    m, n = matrix.shape
    if m == 0:
        return LpResult(0.0, np.zeros(n), np.zeros(0), [], 0)
    big_m = 1e3 * max(1.0, float(costs.max()) if n else 1.0)
    full = np.hstack([-np.eye(m), np.eye(m), matrix])
    c = np.concatenate([np.zeros(m), np.full(m, big_m), costs])
    rhs = np.ones(m)
    n_total = full.shape[1]

    cold = list(range(m, 2 * m))
    warm = basis is not None and len(basis) == m and max(basis) < n_total
    current = np.array(basis if warm else cold, dtype=int)
    try:
        b_inv = _factor(full, current)
    except np.linalg.LinAlgError:
        logger.debug("warm basis singular, restarting cold")
        current = np.array(cold, dtype=int)
        b_inv = np.eye(m)
    bland = False
    degenerate_run = 0

    for pivot in range(max_pivots + 1):
        if pivot and pivot % REFACTOR_EVERY == 0:
            try:
                b_inv = _factor(full, current)
            except np.linalg.LinAlgError:
                raise NumericalFailure("basis matrix became singular") from None
        x_b = b_inv @ rhs
        duals = c[current] @ b_inv
        reduced = c - duals @ full
        reduced[current] = 0.0
        candidates = np.flatnonzero(reduced < -OPTIMALITY_TOLERANCE)
        if candidates.size == 0:
            break
        if pivot == max_pivots:
            raise NumericalFailure(f"simplex did not converge within {max_pivots} pivots")
        entering = candidates[0] if bland else candidates[np.argmin(reduced[candidates])]
        direction = b_inv @ full[:, entering]
        eligible = direction > PIVOT_TOLERANCE
        if not eligible.any():
            raise NumericalFailure(f"unbounded direction for variable {entering}")
        ratios = np.full(m, np.inf)
        ratios[eligible] = np.maximum(x_b[eligible], 0.0) / direction[eligible]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12)
        leaving = ties[np.argmin(current[ties])]
        current[leaving] = entering
        _update_inverse(b_inv, direction, leaving)
        degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0
        bland = degenerate_run >= BLAND_AFTER

    x_all = np.zeros(n_total)
    x_all[current] = np.maximum(x_b, 0.0)
    if (x_all[m:2 * m] > 1e-7).any():
        missing = np.flatnonzero(x_all[m:2 * m] > 1e-7)
        raise PoolInfeasible(f"rows {missing[:10].tolist()} are not covered by any column")
    x = x_all[2 * m:]
    return LpResult(float(costs @ x), x, duals, current.tolist(), pivot)


@dataclass
class NodeLp:
    objective: float
    x: np.ndarray
    reduced: np.ndarray
    basis: np.ndarray


class DualSimplex:
    """Dual simplex over a fixed column pool for the nodes of the IP tree.

    A node relaxes some rows (rhs 0 once a chosen column covers them) and
    closes some columns (fixed at zero). Costs are nonnegative, so the
    all-surplus basis is dual feasible, and an optimal parent basis stays
    dual feasible in both children: only primal feasibility has to be
    restored, usually in a handful of pivots.
    """

    def __init__(self, matrix: np.ndarray, costs: np.ndarray, max_pivots: int = MAX_PIVOTS):
        self.m, self.n = matrix.shape
        self.full = np.hstack([-np.eye(self.m), matrix])
        self.c = np.concatenate([np.zeros(self.m), costs])
        self.max_pivots = max_pivots

    def solve(self, rhs: np.ndarray, open_columns: np.ndarray,
              basis: Optional[np.ndarray] = None) -> Optional[NodeLp]:
        """Optimal LP of the node, or None when no cover exists.

        Raises:
            NumericalFailure: pivot cap hit or the basis turned singular
        """
        m, full, c = self.m, self.full, self.c
        is_open = np.concatenate([np.ones(m, dtype=bool), open_columns])
        current = np.arange(m) if basis is None else np.array(basis, dtype=int)
        try:
            b_inv = _factor(full, current)
        except np.linalg.LinAlgError:
            current = np.arange(m)
            b_inv = -np.eye(m)
        degenerate_run = 0

        for pivot in range(self.max_pivots + 1):
            if pivot and pivot % REFACTOR_EVERY == 0:
                try:
                    b_inv = _factor(full, current)
                except np.linalg.LinAlgError:
                    raise NumericalFailure("node basis became singular") from None
            x_b = b_inv @ rhs
            # open variables must be >= 0, closed ones exactly 0
            violation = np.where(is_open[current], -x_b, np.abs(x_b))
            infeasible = np.flatnonzero(violation > FEASIBILITY_TOLERANCE)
            reduced = c - (c[current] @ b_inv) @ full
            reduced[current] = 0.0
            if infeasible.size == 0:
                break
            if pivot == self.max_pivots:
                raise NumericalFailure(f"dual simplex did not converge within {self.max_pivots} pivots")
            if degenerate_run >= BLAND_AFTER:
                leaving = infeasible[np.argmin(current[infeasible])]
            else:
                leaving = infeasible[np.argmax(violation[infeasible])]
            alpha = b_inv[leaving] @ full
            sign = 1.0 if x_b[leaving] > 0 else -1.0
            nonbasic = is_open.copy()
            nonbasic[current] = False
            eligible = nonbasic & (sign * alpha > PIVOT_TOLERANCE)
            if not eligible.any():
                return None
            ratios = np.full(alpha.size, np.inf)
            ratios[eligible] = np.maximum(reduced[eligible], 0.0) / (sign * alpha[eligible])
            theta = ratios.min()
            entering = int(np.flatnonzero(ratios <= theta + 1e-12)[0])
            direction = b_inv @ full[:, entering]
            current[leaving] = entering
            _update_inverse(b_inv, direction, leaving)
            degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0

        x_all = np.zeros(m + self.n)
        x_all[current] = np.maximum(x_b, 0.0)
        x = np.where(open_columns, x_all[m:], 0.0)
        return NodeLp(float(c[m:] @ x), x, reduced[m:], current)


def init_pool(g) -> RmpState:
    """Start the RMP with one artificial column per trip."""
    return RmpState.with_artificials(g.n_trips)


def lp_solve(state: RmpState) -> Tuple[float, np.ndarray, np.ndarray]:
    """Solve the LP over the current pool, warm-starting from the last basis."""
    result = solve_covering_lp(state.matrix, state.costs, state.basis)
    state.lp_solution = result.x
    state.objective = result.objective
    state.duals = result.duals
    state.basis = result.basis
    logger.debug(f"LP over {len(state.columns)} columns: {result.objective:.6f} ({result.pivots} pivots)")
    return result.objective, result.x, result.duals


def reduced_cost(col: Column, duals: np.ndarray) -> float:
    return col.cost - float(sum(duals[i] for i in col.rows))


def add_columns(state: RmpState, cols: Iterable[Column], tol: float = RC_TOLERANCE) -> RmpState:
    """Append improving columns; a path already in the pool is skipped.

    Raises:
        NotImproving: a column's reduced cost is not below -tol
    """
    cols = list(cols)
    for col in cols:
        rc = reduced_cost(col, state.duals)
        if rc >= -tol:
            raise NotImproving(f"column {col.edge_path} has reduced cost {rc:.3e}")
    for col in cols:
        if col.key in state._keys:
            continue
        state._keys.add(col.key)
        state.columns.append(col)
    return state


@dataclass
class IpSolution:
    x: np.ndarray
    objective: float
    lp_bound: float
    gap: float
    optimal: bool
    nodes: int
    uses_artificials: bool
    columns: List[Column]


def _greedy_cover(matrix: np.ndarray, costs: np.ndarray, candidates: List[int]) -> Tuple[Set[int], float]:
    """Cheapest cost per newly covered row first."""
    uncovered = np.ones(matrix.shape[0], dtype=bool)
    chosen: Set[int] = set()
    sub = matrix[:, candidates]
    while uncovered.any():
        gains = sub[uncovered].sum(axis=0)
        with np.errstate(divide="ignore"):
            ratio = np.where(gains > 0, costs[candidates] / np.maximum(gains, 1), np.inf)
        k = int(np.argmin(ratio))
        if not np.isfinite(ratio[k]):
            break
        chosen.add(candidates[k])
        uncovered &= sub[:, k] == 0
    return chosen, float(sum(costs[j] for j in chosen))


def _cost_unit(costs: np.ndarray) -> float:
    """Largest grid step every cost sits on, or 0.0 when there is none."""
    for unit in COST_UNITS:
        steps = costs / unit
        if np.allclose(steps, np.round(steps), rtol=0.0, atol=1e-9):
            return unit
    return 0.0


def ip_finish(state: RmpState, time_limit: float = 10.0,
              allow_artificials: bool = False) -> IpSolution:
    """Best binary cover over the pool by depth-first branch-and-bound.

    Branches on the most fractional column (x_j = 1 first, which removes
    the rows it covers). Each node LP is warm-started from its parent's
    basis by the dual simplex. Bounds are rounded up to the cost grid, and
    columns whose reduced cost alone lifts the bound past the incumbent are
    closed for the whole subtree. Stops at `time_limit` seconds with the
    incumbent and its gap to the root bound.

    Raises:
        PoolInfeasible: without artificials some trip has no covering column
    """
    cols = state.columns
    n = len(cols)
    m = state.m
    if m == 0:
        return IpSolution(np.zeros(n), 0.0, 0.0, 0.0, True, 0, False, [])

    costs = state.costs
    matrix = state.matrix
    candidates = [j for j, c in enumerate(cols) if allow_artificials or not c.artificial]

    x_lp = state.lp_solution
    if x_lp.size == n and np.all(np.abs(x_lp - np.round(x_lp)) <= 1e-9):
        x_int = np.round(x_lp)
        if (allow_artificials or not state.uses_artificials(x_int)) \
                and (matrix @ x_int >= 1 - 1e-9).all():
            return IpSolution(x_int, state.objective, state.objective, 0.0, True, 0,
                              state.uses_artificials(x_int), [cols[j] for j in np.flatnonzero(x_int)])

    uncovered = np.flatnonzero(matrix[:, candidates].sum(axis=1) == 0) if candidates \
        else np.arange(m)
    if uncovered.size:
        raise PoolInfeasible(f"trips at rows {uncovered[:10].tolist()} have no real column in the pool")

    is_candidate = np.zeros(n, dtype=bool)
    is_candidate[candidates] = True
    unit = _cost_unit(costs[candidates])

    def rounded(bound):
        if not unit:
            return bound
        return np.ceil(np.asarray(bound) / unit - 1e-6) * unit

    node_lp = DualSimplex(matrix, costs)
    best_set, best_obj = _greedy_cover(matrix, costs, candidates)
    deadline = time.monotonic() + time_limit
    root_bound: Optional[float] = None
    stack: List[Tuple[frozenset, frozenset, Optional[np.ndarray]]] = [(frozenset(), frozenset(), None)]
    nodes = 0
    timed_out = False

    while stack:
        if time.monotonic() > deadline:
            timed_out = True
            break
        ones, zeros, parent_basis = stack.pop()
        nodes += 1
        fixed_cost = float(sum(costs[j] for j in ones))
        covered = matrix[:, sorted(ones)].any(axis=1) if ones else np.zeros(m, dtype=bool)
        if covered.all():
            if fixed_cost < best_obj - 1e-9:
                best_set, best_obj = set(ones), fixed_cost
            continue
        open_columns = is_candidate.copy()
        open_columns[list(ones | zeros)] = False
        lp = node_lp.solve((~covered).astype(float), open_columns, parent_basis)
        if lp is None:
            continue
        bound = fixed_cost + lp.objective
        if root_bound is None:
            root_bound = bound
        if rounded(bound) >= best_obj - 1e-9:
            continue
        frac = np.where(open_columns, np.abs(lp.x - np.round(lp.x)), 0.0)
        if frac.max() <= 1e-9:
            chosen = set(ones) | {int(j) for j in np.flatnonzero(open_columns & (lp.x > 0.5))}
            best_set, best_obj = chosen, float(sum(costs[j] for j in chosen))
            continue
        hopeless = open_columns & (rounded(bound + lp.reduced) >= best_obj - 1e-9)
        zeros = zeros | {int(j) for j in np.flatnonzero(hopeless)}
        j = int(np.argmax(frac))
        stack.append((ones, zeros | {j}, lp.basis))
        stack.append((ones | {j}, zeros, lp.basis))

    if root_bound is None:
        root_bound = best_obj
    x = np.zeros(n)
    x[sorted(best_set)] = 1.0
    gap = (best_obj - root_bound) / best_obj if timed_out and best_obj > 0 else 0.0
    if timed_out:
        logger.warning(f"IP time limit hit after {nodes} nodes; incumbent {best_obj:.2f}, gap {gap:.2%}")
    else:
        logger.debug(f"IP solved to optimality in {nodes} nodes: {best_obj:.2f}")
    chosen_cols = [cols[j] for j in sorted(best_set)]
    return IpSolution(x, best_obj, root_bound, gap, not timed_out, nodes,
                      any(c.artificial for c in chosen_cols), chosen_cols)

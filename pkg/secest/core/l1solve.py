"""
Dense l1-minimization engine.

Both secure decoders reduce to linear programs:

    basis pursuit   min ||E||_1  s.t.  F E = y        (E = E+ - E-, E+/- >= 0)
    l1 regression   min ||y - Phi x||_1                (Phi x + r+ - r- = y)

which are solved by a two-phase primal simplex on a dense tableau. Problem
sizes here are a few hundred columns at most, so a dense tableau is adequate.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from secest.core.errors import DimensionMismatch, Infeasible, RankDeficient
from secest.core.model import numerical_rank

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-8
OPT_TOL = 1e-8
PIVOT_TOL = 1e-9
MAX_ITERS = 10000
DEGENERATE_SWITCH = 50


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpProblem:
    """
    min cost @ x  s.t.  eq_matrix @ x = eq_rhs,  x >= lower

    ``lower`` holds per-variable lower bounds; ``-inf`` marks a free variable.
    Defaults to all zeros.
    """

    cost: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    lower: Optional[np.ndarray] = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float).reshape(-1)
        self.eq_matrix = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
        rows, cols = self.eq_matrix.shape
        if self.eq_rhs.shape[0] != rows:
            raise DimensionMismatch(f"eq_rhs has length {self.eq_rhs.shape[0]}, expected {rows}")
        if self.cost.shape[0] != cols:
            raise DimensionMismatch(f"cost has length {self.cost.shape[0]}, expected {cols}")
        if self.lower is None:
            self.lower = np.zeros(cols)
        else:
            self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
            if self.lower.shape[0] != cols:
                raise DimensionMismatch(f"lower has length {self.lower.shape[0]}, expected {cols}")
        finite = [self.cost, self.eq_matrix, self.eq_rhs, self.lower[np.isfinite(self.lower)]]
        if not all(np.all(np.isfinite(a)) for a in finite) or np.any(self.lower == np.inf):
            raise ValueError("LP data must be finite (lower bounds may be -inf)")

    @property
    def num_vars(self) -> int:
        return self.eq_matrix.shape[1]

    @property
    def num_rows(self) -> int:
        return self.eq_matrix.shape[0]


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: LpStatus
    iterations: int = 0
    unique: bool = True

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _Tableau:
    """Working tableau: rows hold B^-1 [A | b] for the current basis."""

    body: np.ndarray
    rhs: np.ndarray
    basis: List[int]
    iterations: int = 0
    degenerate_run: int = 0

    def pivot(self, row: int, col: int) -> None:
        piv = self.body[row, col]
        self.body[row] /= piv
        self.rhs[row] /= piv
        factors = self.body[:, col].copy()
        factors[row] = 0.0
        self.body -= np.outer(factors, self.body[row])
        self.rhs -= factors * self.rhs[row]
        # clean the pivot column exactly
        self.body[:, col] = 0.0
        self.body[row, col] = 1.0
        np.maximum(self.rhs, 0.0, out=self.rhs, where=np.abs(self.rhs) < FEAS_TOL)
        self.basis[row] = col
        self.iterations += 1


class SimplexSolver:
    """
    Two-phase primal simplex on a dense tableau.

    Entering columns follow Dantzig's most-negative reduced cost; after
    ``degenerate_switch`` consecutive degenerate pivots the solver falls back to
    Bland's smallest-index rule, which cannot cycle. ``pivot_rule="bland"``
    uses Bland's rule throughout.

    One instance holds one working tableau; use separate instances per thread.
    """

    def __init__(self, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL,
                 max_iters: int = MAX_ITERS, pivot_rule: str = "dantzig",
                 degenerate_switch: int = DEGENERATE_SWITCH):
        if feas_tol <= 0 or opt_tol <= 0:
            raise ValueError("Tolerances must be positive")
        if pivot_rule not in ("dantzig", "bland"):
            raise ValueError(f"Unknown pivot rule {pivot_rule!r}")
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.max_iters = max_iters
        self.pivot_rule = pivot_rule
        self.degenerate_switch = degenerate_switch

    def solve(self, problem: LpProblem) -> LpSolution:
        """Solve ``problem``; infeasible/unbounded/iteration limit come back as a status."""
        a, b, c, shift, mirror_of, back = self._standard_form(problem)
        rows, cols = a.shape

        # rows with negative rhs are negated so the initial basis is feasible
        flip = b < 0
        a[flip] *= -1.0
        b[flip] *= -1.0

        basis, need_artificial = self._crash_basis(a)
        n_art = len(need_artificial)
        body = np.hstack([a, np.zeros((rows, n_art))])
        for k, row in enumerate(need_artificial):
            body[row, cols + k] = 1.0
            basis[row] = cols + k
        tab = _Tableau(body, b.copy(), basis)

        if n_art:
            phase1_cost = np.concatenate([np.zeros(cols), np.ones(n_art)])
            status = self._iterate(tab, phase1_cost, allowed=cols)
            infeasibility = float(np.sum(tab.rhs[[i for i, j in enumerate(tab.basis) if j >= cols]]))
            if status is LpStatus.ITERATION_LIMIT:
                return self._failed(problem, LpStatus.ITERATION_LIMIT, tab.iterations)
            if infeasibility > self.feas_tol * max(1.0, float(np.max(np.abs(b), initial=0.0))):
                logger.debug(f"Phase 1 ended with infeasibility {infeasibility:.3e}")
                return self._failed(problem, LpStatus.INFEASIBLE, tab.iterations)
            self._drive_out_artificials(tab, cols)
            tab.body = tab.body[:, :cols]

        status = self._iterate(tab, c, allowed=cols)
        if status is not LpStatus.OPTIMAL:
            return self._failed(problem, status, tab.iterations)

        x_std = self._refine(a, b, tab.basis, cols)
        unique = self._is_unique(tab, c, mirror_of)
        x = back(x_std) + shift
        objective = float(problem.cost @ x)
        logger.debug(f"LP optimal after {tab.iterations} pivots, objective {objective:.6g}")
        return LpSolution(x=x, objective=objective, status=LpStatus.OPTIMAL,
                          iterations=tab.iterations, unique=unique)

    def _standard_form(self, problem: LpProblem):
        """Shift finite bounds to zero and split free variables into x+ - x-."""
        lower = problem.lower
        free = ~np.isfinite(lower)
        shift = np.where(free, 0.0, lower)
        b = problem.eq_rhs - problem.eq_matrix @ shift
        free_idx = np.flatnonzero(free)
        a = np.hstack([problem.eq_matrix, -problem.eq_matrix[:, free_idx]])
        c = np.concatenate([problem.cost, -problem.cost[free_idx]])
        n = problem.num_vars
        mirror_of = {}
        for k, j in enumerate(free_idx):
            mirror_of[n + k] = int(j)
            mirror_of[int(j)] = n + k

        def back(x_std: np.ndarray) -> np.ndarray:
            x = x_std[:n].copy()
            x[free_idx] -= x_std[n:]
            return x

        return a, b, c, shift, mirror_of, back

    @staticmethod
    def _crash_basis(a: np.ndarray) -> Tuple[List[int], List[int]]:
        """Use unit columns as the starting basis where they exist."""
        rows = a.shape[0]
        basis = [-1] * rows
        nonzero_counts = np.count_nonzero(a, axis=0)
        for j in np.flatnonzero(nonzero_counts == 1):
            i = int(np.flatnonzero(a[:, j])[0])
            if basis[i] < 0 and a[i, j] == 1.0:
                basis[i] = int(j)
        need_artificial = [i for i in range(rows) if basis[i] < 0]
        return basis, need_artificial

    def _reduced_costs(self, tab: _Tableau, cost: np.ndarray) -> np.ndarray:
        cb = cost[tab.basis]
        return cost - cb @ tab.body

    def _choose_entering(self, d: np.ndarray, allowed: int, use_bland: bool) -> int:
        candidates = np.flatnonzero(d[:allowed] < -self.opt_tol)
        if candidates.size == 0:
            return -1
        if use_bland:
            return int(candidates[0])
        return int(candidates[np.argmin(d[candidates])])

    def _choose_leaving(self, tab: _Tableau, col: int) -> int:
        column = tab.body[:, col]
        positive = np.flatnonzero(column > PIVOT_TOL)
        if positive.size == 0:
            return -1
        ratios = tab.rhs[positive] / column[positive]
        best = ratios.min()
        ties = positive[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        # smallest basic index among ties (Bland)
        return int(min(ties, key=lambda i: tab.basis[i]))

    def _iterate(self, tab: _Tableau, cost: np.ndarray, allowed: int) -> LpStatus:
        while True:
            if tab.iterations >= self.max_iters:
                logger.warning(f"Simplex hit the iteration limit ({self.max_iters})")
                return LpStatus.ITERATION_LIMIT
            d = self._reduced_costs(tab, cost)
            use_bland = self.pivot_rule == "bland" or tab.degenerate_run >= self.degenerate_switch
            col = self._choose_entering(d, allowed, use_bland)
            if col < 0:
                return LpStatus.OPTIMAL
            row = self._choose_leaving(tab, col)
            if row < 0:
                return LpStatus.UNBOUNDED
            step = tab.rhs[row] / tab.body[row, col]
            tab.degenerate_run = tab.degenerate_run + 1 if step <= self.feas_tol else 0
            tab.pivot(row, col)

    def _drive_out_artificials(self, tab: _Tableau, cols: int) -> None:
        """Pivot zero-level artificials out of the basis; drop redundant rows."""
        keep = []
        for i in range(len(tab.basis)):
            if tab.basis[i] < cols:
                keep.append(i)
                continue
            candidates = np.flatnonzero(np.abs(tab.body[i, :cols]) > PIVOT_TOL)
            if candidates.size:
                j = int(candidates[np.argmax(np.abs(tab.body[i, candidates]))])
                tab.pivot(i, j)
                keep.append(i)
            else:
                logger.debug(f"Dropping redundant constraint row {i}")
        tab.body = tab.body[keep]
        tab.rhs = tab.rhs[keep]
        tab.basis = [tab.basis[i] for i in keep]

    @staticmethod
    def _refine(a: np.ndarray, b: np.ndarray, basis: Sequence[int], cols: int) -> np.ndarray:
        """Recompute basic values from the original data to shed pivoting error."""
        x = np.zeros(cols)
        basis = list(basis)
        if basis:
            xb, *_ = np.linalg.lstsq(a[:, basis], b, rcond=None)
            x[basis] = np.maximum(xb, 0.0)
        return x

    def _is_unique(self, tab: _Tableau, cost: np.ndarray, mirror_of: dict) -> bool:
        """
        False when a nonbasic column has zero reduced cost and a strictly
        positive step, i.e. an adjacent optimal vertex exists. Mirror halves
        of split free variables whose partner is basic are ignored.
        """
        d = self._reduced_costs(tab, cost)
        basic = set(tab.basis)
        scale = max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        for j in np.flatnonzero(np.abs(d) <= self.opt_tol * scale):
            j = int(j)
            if j in basic or mirror_of.get(j) in basic:
                continue
            column = tab.body[:, j]
            positive = np.flatnonzero(column > PIVOT_TOL)
            if positive.size == 0:
                return False
            if np.min(tab.rhs[positive] / column[positive]) > self.feas_tol:
                return False
        return True

    @staticmethod
    def _failed(problem: LpProblem, status: LpStatus, iterations: int) -> LpSolution:
        return LpSolution(x=np.full(problem.num_vars, np.nan), objective=float("nan"),
                          status=status, iterations=iterations, unique=False)


def solve_lp(problem: LpProblem, feas_tol: float = FEAS_TOL, max_iters: int = MAX_ITERS,
             opt_tol: float = OPT_TOL, pivot_rule: str = "dantzig") -> LpSolution:
    """Solve a standard-form LP with a fresh solver instance."""
    return SimplexSolver(feas_tol=feas_tol, opt_tol=opt_tol, max_iters=max_iters,
                         pivot_rule=pivot_rule).solve(problem)


@dataclass
class L1Result:
    vector: np.ndarray
    objective: float
    unique: bool
    iterations: int
    lp: Optional[LpProblem] = field(default=None, repr=False)


def basis_pursuit_problem(f: np.ndarray, y: np.ndarray) -> LpProblem:
    f = np.atleast_2d(np.asarray(f, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if f.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"f has {f.shape[0]} rows but y has length {y.shape[0]}")
    d = f.shape[1]
    return LpProblem(cost=np.ones(2 * d), eq_matrix=np.hstack([f, -f]), eq_rhs=y)


def solve_basis_pursuit(f: np.ndarray, y: np.ndarray,
                        solver: Optional[SimplexSolver] = None) -> L1Result:
    """
    min ||E||_1 subject to f E = y.

    Raises:
        Infeasible: y is not in the range of f
    """
    problem = basis_pursuit_problem(f, y)
    d = problem.num_vars // 2
    solution = (solver or SimplexSolver()).solve(problem)
    if solution.status is LpStatus.INFEASIBLE:
        raise Infeasible("Basis pursuit constraints are inconsistent (y not in range of f)")
    if not solution.optimal:
        raise Infeasible(f"Basis pursuit did not reach an optimum: {solution.status.value}")
    e = solution.x[:d] - solution.x[d:]
    return L1Result(vector=e, objective=float(np.sum(np.abs(e))), unique=solution.unique,
                    iterations=solution.iterations, lp=problem)


def basis_pursuit(f: np.ndarray, y: np.ndarray, solver: Optional[SimplexSolver] = None) -> np.ndarray:
    return solve_basis_pursuit(f, y, solver).vector


def l1_regression_problem(phi: np.ndarray, y: np.ndarray) -> LpProblem:
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    rows, n = phi.shape
    if rows != y.shape[0]:
        raise DimensionMismatch(f"phi has {rows} rows but y has length {y.shape[0]}")
    eye = np.eye(rows)
    return LpProblem(
        cost=np.concatenate([np.zeros(n), np.ones(2 * rows)]),
        eq_matrix=np.hstack([phi, eye, -eye]),
        eq_rhs=y,
        lower=np.concatenate([np.full(n, -np.inf), np.zeros(2 * rows)]),
    )


def solve_l1_regression(phi: np.ndarray, y: np.ndarray,
                        solver: Optional[SimplexSolver] = None) -> L1Result:
    """
    min_x ||y - phi x||_1. Ties between optimal vertices are broken by the
    simplex path (implementation-defined).

    Raises:
        RankDeficient: phi is not full column rank
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    n = phi.shape[1]
    if numerical_rank(phi) < n:
        raise RankDeficient(f"phi ({phi.shape[0]}x{n}) is not full column rank")
    problem = l1_regression_problem(phi, y)
    solution = (solver or SimplexSolver()).solve(problem)
    if not solution.optimal:
        raise Infeasible(f"l1 regression did not reach an optimum: {solution.status.value}")
    x = solution.x[:n]
    residual = np.asarray(y, dtype=float).reshape(-1) - phi @ x
    return L1Result(vector=x, objective=float(np.sum(np.abs(residual))), unique=solution.unique,
                    iterations=solution.iterations, lp=problem)


def l1_regression(phi: np.ndarray, y: np.ndarray, solver: Optional[SimplexSolver] = None) -> np.ndarray:
    return solve_l1_regression(phi, y, solver).vector


def dump_lp(problem: LpProblem, path: str) -> str:
    """
    Write an LP as plain text: a ``cost`` line, one ``row`` line per equality
    constraint (coefficients followed by ``= rhs``), then a ``lower`` line.
    """
    fmt = lambda v: repr(float(v))
    with open(path, "w") as f:
        f.write(f"# min c'x s.t. Ax = b, x >= lower ({problem.num_rows} rows, {problem.num_vars} vars)\n")
        f.write("cost " + " ".join(fmt(v) for v in problem.cost) + "\n")
        for row, rhs in zip(problem.eq_matrix, problem.eq_rhs):
            f.write("row " + " ".join(fmt(v) for v in row) + " = " + fmt(rhs) + "\n")
        f.write("lower " + " ".join(fmt(v) for v in problem.lower) + "\n")
    return str(path)

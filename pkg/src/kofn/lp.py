"""Dense exact-rational linear programming.

A small two-phase primal simplex over exact rationals with Bland's pivoting
rule, which cannot cycle, so termination needs no tolerances. Instances here
are tiny (restricted master problems and brute-force oracles), so no sparsity
or factorization tricks: one dense tableau, pivoted in place.

Solutions carry exact primal and dual vectors; certify() re-checks primal
feasibility, dual feasibility, and equality of the two objectives, all as
exact comparisons, making every "optimal" answer self-certifying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ContractError, DomainError
from .rational import ONE, ZERO, Rat, rat

RELATIONS = ("<=", ">=", "==")


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[Rat, ...]
    relation: str
    rhs: Rat

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(rat(v) for v in self.coeffs))
        object.__setattr__(self, "rhs", rat(self.rhs))
        if self.relation not in RELATIONS:
            raise DomainError(f"relation must be one of {RELATIONS}, got {self.relation!r}")


@dataclass(frozen=True)
class LinearProgram:
    """max or min of objective . x subject to rows and x >= lower_bounds."""

    sense: str
    objective: tuple[Rat, ...]
    constraints: tuple[Constraint, ...]
    lower_bounds: Optional[tuple[Rat, ...]] = None

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise DomainError(f"sense must be 'max' or 'min', got {self.sense!r}")
        object.__setattr__(self, "objective", tuple(rat(v) for v in self.objective))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        n = len(self.objective)
        if n == 0:
            raise DomainError("LP needs at least one variable")
        for row in self.constraints:
            if len(row.coeffs) != n:
                raise DomainError(f"row has {len(row.coeffs)} coefficients, expected {n}")
        if self.lower_bounds is not None:
            lbs = tuple(rat(v) for v in self.lower_bounds)
            if len(lbs) != n:
                raise DomainError("lower_bounds length must match the objective")
            object.__setattr__(self, "lower_bounds", lbs)

    @property
    def n(self) -> int:
        return len(self.objective)

    def bounds(self) -> tuple[Rat, ...]:
        return self.lower_bounds if self.lower_bounds is not None else (ZERO,) * self.n


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    primal: Optional[tuple[Rat, ...]]
    dual: Optional[tuple[Rat, ...]]
    objective: Optional[Rat]
    pivots: int


class _Tableau:
    """Dense simplex tableau with an attached reduced-cost row."""

    def __init__(self, rows: list[list[Rat]], basis: list[int], ncols: int):
        self.rows = rows  # each row: ncols coefficients then the rhs
        self.basis = basis
        self.ncols = ncols
        self.red: list[Rat] = []
        self.objective = ZERO
        self.pivots = 0

    def set_costs(self, costs: Sequence[Rat]) -> None:
        """Rebuild the reduced-cost row (z_j - c_j) for the given cost vector."""
        red = [-costs[j] for j in range(self.ncols)]
        obj = ZERO
        for i, row in enumerate(self.rows):
            cb = costs[self.basis[i]]
            if cb:
                for j in range(self.ncols):
                    if row[j]:
                        red[j] += cb * row[j]
                obj += cb * row[self.ncols]
        self.red = red
        self.objective = obj

    def pivot(self, i: int, j: int) -> None:
        self.pivots += 1
        row = self.rows[i]
        piv = row[j]
        inv = 1 / piv
        for t in range(self.ncols + 1):
            row[t] *= inv
        for other in self.rows:
            if other is row or not other[j]:
                continue
            f = other[j]
            for t in range(self.ncols + 1):
                other[t] -= f * row[t]
        f = self.red[j]
        if f:
            for t in range(self.ncols):
                self.red[t] -= f * row[t]
            self.objective -= f * row[self.ncols]
        self.basis[i] = j

    def bland_step(self, allowed) -> str:
        """One Bland pivot maximizing the current costs. Entering variable is
        the lowest-index allowed column with negative reduced cost; leaving
        row is the ratio-test minimum, ties by lowest basic column index."""
        enter = -1
        for j in range(self.ncols):
            if allowed[j] and self.red[j] < 0:
                enter = j
                break
        if enter < 0:
            return "optimal"
        leave = -1
        best: Optional[Rat] = None
        for i, row in enumerate(self.rows):
            if row[enter] > 0:
                ratio = row[self.ncols] / row[enter]
                if best is None or ratio < best or (
                    ratio == best and self.basis[i] < self.basis[leave]
                ):
                    best = ratio
                    leave = i
        if leave < 0:
            return "unbounded"
        self.pivot(leave, enter)
        return "pivoted"

    def run(self, allowed) -> str:
        while True:
            outcome = self.bland_step(allowed)
            if outcome != "pivoted":
                return outcome


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Exact two-phase simplex; always terminates with a certified status."""
    n = lp.n
    m = len(lp.constraints)
    lbs = lp.bounds()
    internal_costs = list(lp.objective) if lp.sense == "max" else [-c for c in lp.objective]

    # Shift x = x' + lb so every variable is nonnegative, then normalize each
    # row to nonnegative rhs, flipping its relation (and later its dual sign).
    rel = []
    sign = []
    matrix: list[list[Rat]] = []
    rhs: list[Rat] = []
    for row in lp.constraints:
        shift = sum((a * lb for a, lb in zip(row.coeffs, lbs)), ZERO)
        b = row.rhs - shift
        coeffs = list(row.coeffs)
        relation = row.relation
        if b < 0:
            coeffs = [-a for a in coeffs]
            b = -b
            relation = {"<=": ">=", ">=": "<=", "==": "=="}[relation]
            sign.append(-1)
        else:
            sign.append(1)
        rel.append(relation)
        matrix.append(coeffs)
        rhs.append(b)

    # Columns: structural, then one slack/surplus per inequality, then one
    # artificial per >= or == row. ref_col[i] is the unit column for row i,
    # used to read the dual value off the final reduced-cost row.
    ncols = n
    slack_col = [-1] * m
    art_col = [-1] * m
    for i in range(m):
        if rel[i] in ("<=", ">="):
            slack_col[i] = ncols
            ncols += 1
    for i in range(m):
        if rel[i] in (">=", "=="):
            art_col[i] = ncols
            ncols += 1

    rows = []
    basis = []
    for i in range(m):
        row = matrix[i] + [ZERO] * (ncols - n) + [rhs[i]]
        if slack_col[i] >= 0:
            row[slack_col[i]] = ONE if rel[i] == "<=" else -ONE
        if art_col[i] >= 0:
            row[art_col[i]] = ONE
        rows.append(row)
        basis.append(art_col[i] if art_col[i] >= 0 else slack_col[i])
    tab = _Tableau(rows, basis, ncols)

    artificial = [False] * ncols
    for i in range(m):
        if art_col[i] >= 0:
            artificial[art_col[i]] = True
    allowed = [not artificial[j] for j in range(ncols)]

    dropped = [False] * m
    row_of = list(range(m))  # original row index per surviving tableau row

    if any(artificial):
        phase1 = [ZERO] * ncols
        for j in range(ncols):
            if artificial[j]:
                phase1[j] = -ONE
        tab.set_costs(phase1)
        outcome = tab.run(allowed)
        assert outcome == "optimal", "phase 1 is bounded above by zero"
        if tab.objective != 0:
            return LpSolution("infeasible", None, None, None, tab.pivots)
        # Remove artificials from the basis; rows they cannot leave are
        # redundant and get dropped (their dual value is zero).
        for i in range(len(tab.rows) - 1, -1, -1):
            if not artificial[tab.basis[i]]:
                continue
            enter = next(
                (j for j in range(ncols) if not artificial[j] and tab.rows[i][j] != 0),
                -1,
            )
            if enter >= 0:
                tab.pivot(i, enter)
            else:
                if tab.rows[i][ncols] != 0:
                    raise ContractError("redundant row with nonzero rhs after phase 1")
                dropped[row_of[i]] = True
                del tab.rows[i]
                del tab.basis[i]
                del row_of[i]

    costs = internal_costs + [ZERO] * (ncols - n)
    tab.set_costs(costs)
    outcome = tab.run(allowed)
    if outcome == "unbounded":
        return LpSolution("unbounded", None, None, None, tab.pivots)

    shifted = [ZERO] * ncols
    for i, b in enumerate(tab.basis):
        shifted[b] = tab.rows[i][ncols]
    primal = tuple(shifted[j] + lbs[j] for j in range(n))
    objective = sum((c * x for c, x in zip(lp.objective, primal)), ZERO)

    # Dual of the internal (maximization, normalized) problem, then mapped
    # back through the row negations and the sense flip.
    y = [ZERO] * m
    for i, orig in enumerate(row_of):
        ref = art_col[orig] if art_col[orig] >= 0 else slack_col[orig]
        value = tab.red[ref]
        if ref == slack_col[orig] and rel[orig] == ">=":
            value = -value
        y[orig] = value
    dual = []
    for i in range(m):
        v = y[i] * sign[i]
        dual.append(v if lp.sense == "max" else -v)
    return LpSolution("optimal", primal, tuple(dual), objective, tab.pivots)


def certify(lp: LinearProgram, solution: LpSolution) -> bool:
    """Exact optimality check: primal and dual feasibility plus strong duality.

    Returns False for anything that is not a complete, exactly-optimal
    solution of this LP.
    """
    if solution.status != "optimal":
        return False
    if solution.primal is None or solution.dual is None or solution.objective is None:
        return False
    n, m = lp.n, len(lp.constraints)
    if len(solution.primal) != n or len(solution.dual) != m:
        return False
    x = solution.primal
    y = solution.dual
    lbs = lp.bounds()

    if any(xj < lb for xj, lb in zip(x, lbs)):
        return False
    for row in lp.constraints:
        value = sum((a * xj for a, xj in zip(row.coeffs, x)), ZERO)
        if row.relation == "<=" and not value <= row.rhs:
            return False
        if row.relation == ">=" and not value >= row.rhs:
            return False
        if row.relation == "==" and value != row.rhs:
            return False
    if sum((c * xj for c, xj in zip(lp.objective, x)), ZERO) != solution.objective:
        return False

    for yi, row in zip(y, lp.constraints):
        if lp.sense == "max":
            if row.relation == "<=" and yi < 0:
                return False
            if row.relation == ">=" and yi > 0:
                return False
        else:
            if row.relation == "<=" and yi > 0:
                return False
            if row.relation == ">=" and yi < 0:
                return False

    reduced = []
    for j in range(n):
        along = sum((yi * row.coeffs[j] for yi, row in zip(y, lp.constraints)), ZERO)
        slack_j = lp.objective[j] - along
        if lp.sense == "max" and slack_j > 0:
            return False
        if lp.sense == "min" and slack_j < 0:
            return False
        reduced.append(slack_j)

    dual_objective = sum((yi * row.rhs for yi, row in zip(y, lp.constraints)), ZERO)
    dual_objective += sum((s * lb for s, lb in zip(reduced, lbs)), ZERO)
    return dual_objective == solution.objective

"""
lp_engine.py

Self-contained linear programming for the bounding problems: a two-phase
tableau simplex over equality constraints with nonnegative variables, the
constraint-system builders for the strong, non-strong and relative-risk
models, and the Charnes-Cooper reduction of linear-fractional programs.

Set SURRBOUND_EXACT=true to solve in exact rational arithmetic by default.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import (BadRange, DegenerateDenominator, InfeasibleInputs, NumericalBreakdown,
                    ZeroControlRisk)
from law import (POS_INF, STRONG_A, STRONG_ACE, STRONG_Y_CONTROL, STRONG_Y_S0,
                 STRONG_Y_S1, STRONG_Y_TREATED, NONSTRONG_ACE, NONSTRONG_ROWS,
                 BoundsReport, Limit, ObservedLaw, QTableStrong, Scale, Verdict,
                 validate_observed)

logger = logging.getLogger(__name__)

EXACT_DEFAULT = os.getenv("SURRBOUND_EXACT", "false").lower() in ("1", "true", "yes")

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-11
REDUCED_COST_TOL = 1e-10
PHASE1_TOL = 1e-7


class Direction(Enum):
    MIN = "min"
    MAX = "max"


class Status(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True, eq=False)
class LpProblem:
    """optimize objective @ x + constant  s.t.  eq_matrix @ x = eq_rhs, x >= 0."""
    objective: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    direction: Direction = Direction.MIN
    constant: float = 0.0
    row_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        c = np.asarray(self.objective)
        A = np.atleast_2d(np.asarray(self.eq_matrix))
        b = np.asarray(self.eq_rhs).reshape(-1)
        if A.shape != (b.shape[0], c.shape[0]):
            raise ValueError(f"inconsistent LP dimensions: A {A.shape}, b {b.shape}, c {c.shape}")
        if A.dtype != object and not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))
                                      and np.all(np.isfinite(c))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "eq_matrix", A)
        object.__setattr__(self, "eq_rhs", b)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.eq_matrix.shape

    def with_direction(self, direction: Direction) -> "LpProblem":
        return replace(self, direction=direction)

    def with_objective(self, objective, constant: float = 0.0) -> "LpProblem":
        return replace(self, objective=np.asarray(objective), constant=constant)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Status
    value: Optional[float] = None
    point: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Tableau:
    """Dense tableau [A | I | b] with the reduced-cost row last."""

    def __init__(self, A, b, exact: bool):
        m, n = A.shape
        self.m, self.n, self.exact = m, n, exact
        zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
        dtype = object if exact else float
        T = np.full((m + 1, n + m + 1), zero, dtype=dtype)
        T[:m, :n] = A
        for r in range(m):
            T[r, n + r] = one
        T[:m, -1] = b
        self.T = T
        self.basis = [n + r for r in range(m)]
        self.tol_pivot = 0 if exact else PIVOT_TOL
        self.tol_cost = 0 if exact else REDUCED_COST_TOL
        self.iterations = 0

    def pivot(self, row: int, col: int):
        T = self.T
        T[row, :] = T[row, :] / T[row, col]
        for r in range(T.shape[0]):
            if r != row and T[r, col] != 0:
                T[r, :] = T[r, :] - T[r, col] * T[row, :]
        if not self.exact:
            rhs = T[:-1, -1]
            rhs[(rhs < 0) & (rhs > -FEAS_TOL)] = 0.0
        self.basis[row] = col
        self.iterations += 1

    def entering(self, n_allowed: int, bland: bool) -> int:
        d = self.T[-1, :n_allowed]
        candidates = [j for j in range(n_allowed) if d[j] < -self.tol_cost and j not in self.basis]
        if not candidates:
            return -1
        if bland:
            return candidates[0]
        return min(candidates, key=lambda j: (d[j], j))

    def leaving(self, col: int) -> int:
        T = self.T
        best, best_key = -1, None
        for r in range(self.m):
            a = T[r, col]
            if a > self.tol_pivot:
                key = (T[r, -1] / a, self.basis[r])
                if best_key is None or key < best_key:
                    best, best_key = r, key
        return best

    def run(self, n_allowed: int) -> Status:
        """Dantzig pricing for 2(m+n) pivots, then Bland's rule until optimal."""
        dantzig_budget = 2 * (self.m + self.n)
        limit = dantzig_budget + 50 * (self.m + self.n) + 1000
        for k in range(limit):
            col = self.entering(n_allowed, bland=k >= dantzig_budget)
            if col < 0:
                return Status.OPTIMAL
            row = self.leaving(col)
            if row < 0:
                return Status.UNBOUNDED
            self.pivot(row, col)
        raise NumericalBreakdown(f"simplex did not terminate within {limit} pivots")

    def set_costs(self, costs):
        """Installs reduced costs for cost vector `costs` over all columns."""
        T = self.T
        row = np.array(list(costs) + [costs[0] * 0], dtype=T.dtype)
        for r, j in enumerate(self.basis):
            if costs[j] != 0:
                row = row - costs[j] * T[r, :]
        T[-1, :] = row


def _as_exact(arr) -> np.ndarray:
    flat = [x if isinstance(x, Fraction) else Fraction(x) for x in np.asarray(arr).reshape(-1).tolist()]
    return np.array(flat, dtype=object).reshape(np.shape(arr))


def simplex_solve(problem: LpProblem, exact: Optional[bool] = None) -> LpSolution:
    """
    Solves the LP with the two-phase primal simplex.
    Args:
        problem (LpProblem): Equality-constrained LP over x >= 0.
        exact (bool): Use rational arithmetic; defaults to SURRBOUND_EXACT.
    Returns:
        LpSolution: Status, optimal value (constant included), an attaining basic
        feasible solution and a dual certificate y with b @ y equal to the value.
    Raises:
        NumericalBreakdown: The pivot budget is exhausted.
    """
    exact = EXACT_DEFAULT if exact is None else exact
    A, b, c = problem.eq_matrix, problem.eq_rhs, problem.objective
    if exact:
        A, b, c = _as_exact(A), _as_exact(b), _as_exact(c)
        zero = Fraction(0)
    else:
        A, b, c = A.astype(float), b.astype(float), c.astype(float)
        zero = 0.0
    m, n = A.shape
    sign = np.array([-1 if b[r] < 0 else 1 for r in range(m)])
    A = A * sign[:, None]
    b = b * sign

    tab = _Tableau(A, b, exact)
    # phase 1: minimise the sum of artificials
    tab.set_costs([zero] * n + [zero + 1] * m)
    if tab.run(n + m) is not Status.OPTIMAL:
        raise NumericalBreakdown("phase 1 reported an unbounded auxiliary problem")
    infeasibility = -tab.T[-1, -1]
    if infeasibility > (0 if exact else PHASE1_TOL):
        logger.debug("Phase 1 infeasibility %s > tolerance", infeasibility)
        return LpSolution(Status.INFEASIBLE, iterations=tab.iterations)

    # drive zero-level artificials out of the basis where a structural column allows
    for r in range(m):
        if tab.basis[r] >= n:
            candidates = [j for j in range(n) if j not in tab.basis and abs(tab.T[r, j]) > tab.tol_pivot]
            if candidates:
                tab.pivot(r, max(candidates, key=lambda j: (abs(tab.T[r, j]), -j)))
            else:
                logger.debug("Row %d is redundant; its artificial stays basic at zero", r)

    costs = c if problem.direction is Direction.MIN else -c
    tab.set_costs(list(costs) + [zero] * m)
    status = tab.run(n)
    if status is Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, iterations=tab.iterations)

    x = np.full(n, zero, dtype=object if exact else float)
    for r, j in enumerate(tab.basis):
        if j < n:
            x[j] = tab.T[r, -1]
    # reduced cost of artificial k is -y_k
    y = -tab.T[-1, n:n + m] * sign
    value = -tab.T[-1, -1]
    if problem.direction is Direction.MAX:
        y, value = -y, -value
    if not exact:
        x = np.where((x < 0) & (x > -FEAS_TOL), 0.0, x)
    if problem.constant:
        value = value + (Fraction(problem.constant) if exact else problem.constant)
    logger.debug("Simplex %s optimum %s after %d pivots", problem.direction.value, value, tab.iterations)
    return LpSolution(Status.OPTIMAL, value, x, y, tab.iterations)


def duality_gap(problem: LpProblem, solution: LpSolution) -> float:
    """
    Verifies the dual certificate of an optimal solution: returns the larger of
    the strong-duality gap and the worst dual-feasibility violation.
    """
    A = problem.eq_matrix.astype(float)
    y = np.asarray(solution.dual, dtype=float)
    c = problem.objective.astype(float)
    slack = c - A.T @ y
    violation = -slack.min() if problem.direction is Direction.MIN else slack.max()
    gap = abs(float(problem.eq_rhs.astype(float) @ y) + float(problem.constant) - float(solution.value))
    return max(gap, float(max(violation, 0.0)))


def primal_residual(problem: LpProblem, point) -> float:
    x = np.asarray(point, dtype=float)
    return float(np.abs(problem.eq_matrix.astype(float) @ x - problem.eq_rhs.astype(float)).max())


def is_feasible(problem: LpProblem) -> bool:
    zero = problem.with_objective(np.zeros(problem.shape[1]))
    return simplex_solve(zero).optimal


def lp_bounds(problem: LpProblem, exact: Optional[bool] = None) -> Tuple[LpSolution, LpSolution]:
    """Minimises and maximises the problem's objective over the same polytope."""
    lo = simplex_solve(problem.with_direction(Direction.MIN), exact=exact)
    hi = simplex_solve(problem.with_direction(Direction.MAX), exact=exact)
    return lo, hi


# ---------------------------------------------------------------------------
# constraint systems

def build_strong_system(law: ObservedLaw, gamma: float) -> LpProblem:
    """The strong system as the 6x16 A q = b with the ACE objective."""
    labels = ("P(Y=0,S=0|T=0)", "P(Y=1,S=0|T=0)", "P(Y=0,S=1|T=0)", "P(S=0|T=1)", "gamma", "1")
    return LpProblem(STRONG_ACE, STRONG_A, law.rhs(gamma), row_labels=labels)


def build_nonstrong_system(py1_control: float, s1_treated: float, gamma1: float,
                           gamma0: Optional[float] = None,
                           control_law: Optional[ObservedLaw] = None) -> LpProblem:
    """
    Observed-law constraints over the 64 non-strong types with the ACE objective.
    With `control_law`, all four control-cell rows are included; otherwise a
    single P(Y=1|T=0) row. The gamma0 row is included only when given.
    """
    rows, rhs, labels = [], [], []
    if control_law is not None:
        for k, (name, value) in enumerate(zip(("p00", "p10", "p01", "p11"), control_law.cells)):
            rows.append(NONSTRONG_ROWS[k])
            rhs.append(value)
            labels.append(name)
    else:
        rows.append(NONSTRONG_ROWS[1] + NONSTRONG_ROWS[3])
        rhs.append(py1_control)
        labels.append("P(Y=1|T=0)")
    rows.append(NONSTRONG_ROWS[4])
    rhs.append(1.0 - s1_treated)
    labels.append("P(S=0|T=1)")
    if gamma0 is not None:
        rows.append(NONSTRONG_ROWS[5])
        rhs.append(gamma0)
        labels.append("gamma0")
    rows.append(NONSTRONG_ROWS[6])
    rhs.append(gamma1)
    labels.append("gamma1")
    rows.append(NONSTRONG_ROWS[7])
    rhs.append(1.0)
    labels.append("1")
    return LpProblem(NONSTRONG_ACE, np.array(rows), np.array(rhs), row_labels=tuple(labels))


# (Y10, Y11, S1) cells, k = 4*Y10 + 2*Y11 + S1
REDUCED_CELLS = tuple((k >> 2 & 1, k >> 1 & 1, k & 1) for k in range(8))


def _reduced_matrices():
    A = np.zeros((3, 8))
    obj = np.zeros(8)
    for k, (y10, y11, s1) in enumerate(REDUCED_CELLS):
        A[0, k] = 1.0 - s1
        A[1, k] = y11 - y10
        A[2, k] = 1.0
        obj[k] = y11 if s1 else y10
    return A, obj


REDUCED_A, REDUCED_OBJECTIVE = _reduced_matrices()


def build_reduced_nonstrong_system(py1_control: float, s1_treated: float, gamma1: float) -> LpProblem:
    """The 8-cell LP over the joint law of (Y10, Y11, S1)."""
    return LpProblem(REDUCED_OBJECTIVE, REDUCED_A, np.array([1.0 - s1_treated, gamma1, 1.0]),
                     constant=-py1_control, row_labels=("P(S=0|T=1)", "gamma1", "1"))


def build_strong_range_system(law: ObservedLaw, lo: float, hi: Limit) -> LpProblem:
    """
    The strong system with the gamma row relaxed to lo <= gamma <= hi. Slack
    columns are appended after the 16 type cells.
    """
    gamma_row = STRONG_A[4]
    base = [STRONG_A[0], STRONG_A[1], STRONG_A[2], STRONG_A[3]]
    rhs = [law.p00, law.p10, law.p01, 1.0 - law.s1_treated]
    n_slack = 1 if hi is POS_INF else 2
    rows = [np.concatenate([r, np.zeros(n_slack)]) for r in base]
    rows.append(np.concatenate([gamma_row, [-1.0] + [0.0] * (n_slack - 1)]))
    rhs.append(lo)
    if hi is not POS_INF:
        rows.append(np.concatenate([gamma_row, [0.0, 1.0]]))
        rhs.append(hi)
    rows.append(np.concatenate([STRONG_A[5], np.zeros(n_slack)]))
    rhs.append(1.0)
    objective = np.concatenate([STRONG_ACE, np.zeros(n_slack)])
    return LpProblem(objective, np.array(rows), np.array(rhs))


def report_from_lp(problem: LpProblem, scale: Scale = Scale.DIFFERENCE,
                   n_witness: Optional[int] = None, exact: Optional[bool] = None) -> BoundsReport:
    """Min/max of the problem as a BoundsReport; raises when the system is infeasible."""
    lo, hi = lp_bounds(problem, exact=exact)
    if not (lo.optimal and hi.optimal):
        raise InfeasibleInputs(f"no latent table satisfies the constraints ({lo.status.value})")
    k = n_witness if n_witness is not None else problem.shape[1]
    return BoundsReport(float(lo.value), float(hi.value), scale,
                        witness_lower=np.asarray(lo.point[:k], dtype=float),
                        witness_upper=np.asarray(hi.point[:k], dtype=float))


def strong_bounds_lp(law: ObservedLaw, gamma: float, exact: Optional[bool] = None) -> BoundsReport:
    return report_from_lp(build_strong_system(law, gamma), exact=exact)


def strong_range_bounds_lp(law: ObservedLaw, lo: float, hi: Limit) -> BoundsReport:
    return report_from_lp(build_strong_range_system(law, lo, hi), n_witness=16)


def nonstrong_bounds_lp(py1_control: float, s1_treated: float, gamma1: float,
                        gamma0: Optional[float] = None,
                        control_law: Optional[ObservedLaw] = None,
                        exact: Optional[bool] = None) -> BoundsReport:
    system = build_nonstrong_system(py1_control, s1_treated, gamma1, gamma0, control_law)
    return report_from_lp(system, exact=exact)


def reduced_bounds_lp(py1_control: float, s1_treated: float, gamma1: float) -> BoundsReport:
    return report_from_lp(build_reduced_nonstrong_system(py1_control, s1_treated, gamma1))


def strong_feasible(law: ObservedLaw, gamma: float) -> bool:
    """Phase-1 check that some strong q-table reproduces (law, gamma)."""
    return is_feasible(build_strong_system(law, gamma))


# ---------------------------------------------------------------------------
# linear-fractional programs

@dataclass(frozen=True, eq=False)
class AffineForm:
    coeffs: np.ndarray
    constant: float = 0.0

    def __call__(self, x) -> float:
        return float(np.asarray(self.coeffs, dtype=float) @ np.asarray(x, dtype=float) + self.constant)


@dataclass(frozen=True, eq=False)
class FractionalProblem:
    """optimize (num @ x + a) / (den @ x + b)  s.t.  eq_matrix @ x = eq_rhs, x >= 0."""
    numerator: AffineForm
    denominator: AffineForm
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    direction: Direction = Direction.MAX

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
        b = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
        n = A.shape[1]
        if (A.shape[0] != b.shape[0] or len(self.numerator.coeffs) != n
                or len(self.denominator.coeffs) != n):
            raise ValueError("inconsistent fractional-program dimensions")
        object.__setattr__(self, "eq_matrix", A)
        object.__setattr__(self, "eq_rhs", b)

    def with_direction(self, direction: Direction) -> "FractionalProblem":
        return replace(self, direction=direction)


def charnes_cooper(fp: FractionalProblem, check_denominator: bool = True) -> LpProblem:
    """
    Transforms the fractional program into an LP in (y, t) with y = x / den(x)
    and t = 1 / den(x): rows A y - b t = 0 and den @ y + b0 t = 1, y, t >= 0.
    Args:
        fp (FractionalProblem): Problem whose denominator is positive on the feasible set.
        check_denominator (bool): Minimise the denominator first and reject if it can reach 0.
    Returns:
        LpProblem: The equivalent LP; the last variable is t.
    Raises:
        InfeasibleInputs: The constraint set is empty.
        DegenerateDenominator: The denominator is not bounded away from zero.
    """
    A, b = fp.eq_matrix, fp.eq_rhs
    m, n = A.shape
    if check_denominator:
        den_lp = LpProblem(np.asarray(fp.denominator.coeffs, dtype=float), A, b,
                           Direction.MIN, constant=fp.denominator.constant)
        sol = simplex_solve(den_lp)
        if not sol.optimal:
            raise InfeasibleInputs("fractional program has an empty feasible set")
        if sol.value <= FEAS_TOL:
            raise DegenerateDenominator(f"denominator reaches {sol.value:.3g} on the feasible set")
    rows = np.zeros((m + 1, n + 1))
    rows[:m, :n] = A
    rows[:m, n] = -b
    rows[m, :n] = fp.denominator.coeffs
    rows[m, n] = fp.denominator.constant
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    objective = np.concatenate([np.asarray(fp.numerator.coeffs, dtype=float), [fp.numerator.constant]])
    return LpProblem(objective, rows, rhs, fp.direction)


def solve_fractional(fp: FractionalProblem) -> Tuple[float, np.ndarray]:
    """Optimal value of the fractional program and an attaining x = y / t."""
    sol = simplex_solve(charnes_cooper(fp))
    if not sol.optimal:
        raise InfeasibleInputs(f"fractional program is {sol.status.value.lower()}")
    y, t = sol.point[:-1], sol.point[-1]
    if t <= FEAS_TOL:
        raise DegenerateDenominator("optimum attained only in the limit t -> 0")
    return float(sol.value), np.asarray(y, dtype=float) / float(t)


def build_crr_fractional(law: ObservedLaw, gamma_crr: float,
                         direction: Direction = Direction.MAX) -> FractionalProblem:
    """
    The relative-risk bounding problem: P(Y_{T=1}=1) / P(Y_{T=0}=1) over the
    strong control-arm constraints, with the CRR(S->Y) row written linearly as
    P(Y_{S=1}=1) - gamma_crr * P(Y_{S=0}=1) = 0.
    """
    gamma_row = STRONG_Y_S1 - gamma_crr * STRONG_Y_S0
    A = np.vstack([STRONG_A[:4], gamma_row, STRONG_A[5]])
    b = np.array([law.p00, law.p10, law.p01, 1.0 - law.s1_treated, 0.0, 1.0])
    return FractionalProblem(AffineForm(STRONG_Y_TREATED), AffineForm(STRONG_Y_CONTROL), A, b, direction)


def crr_criterion(lower: float, tol: float = 1e-12) -> Verdict:
    if lower > 1.0 + tol:
        return Verdict.EXCLUDED
    if abs(lower - 1.0) <= tol:
        return Verdict.BOUNDARY
    return Verdict.NOT_EXCLUDABLE


def crr_bounds(law: ObservedLaw, gamma_crr: float) -> BoundsReport:
    """
    Sharp bounds on CRR(T->Y) under the strong model given CRR(S->Y).
    Args:
        law (ObservedLaw): Observed law.
        gamma_crr (float): CRR(S->Y), positive.
    Returns:
        BoundsReport: Relative-risk bounds with attaining q-tables and the
        exclusion verdict (lower bound > 1).
    Raises:
        NotAProbability, NotNormalized: The law is not a valid observed law.
        BadRange: gamma_crr is not positive.
        ZeroControlRisk: P(Y=1|T=0) = 0.
        InfeasibleInputs: No q-table reproduces (law, gamma_crr).
    """
    validate_observed(law)
    if not gamma_crr > 0.0:
        raise BadRange(f"relative-risk gamma must be positive, got {gamma_crr}")
    if law.py1_control <= 0.0:
        raise ZeroControlRisk("P(Y=1|T=0) = 0, the causal relative risk is undefined")
    logger.info("CRR bounds for law=%s gamma_crr=%s", law.to_dict(), gamma_crr)
    fp = build_crr_fractional(law, gamma_crr)
    try:
        upper, x_hi = solve_fractional(fp.with_direction(Direction.MAX))
        lower, x_lo = solve_fractional(fp.with_direction(Direction.MIN))
    except DegenerateDenominator as e:
        raise ZeroControlRisk(str(e)) from e
    verdict = crr_criterion(lower)
    return BoundsReport(lower, upper, Scale.RELATIVE_RISK, witness_lower=x_lo, witness_upper=x_hi,
                        criterion=verdict, threshold=1.0)


def witness_table(point) -> QTableStrong:
    """Wraps an LP attaining point as a strong q-table (first 16 coordinates)."""
    return QTableStrong.from_vector(np.asarray(point, dtype=float)[:16])

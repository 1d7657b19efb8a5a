"""
symbolic.py

Re-derives closed-form bound expressions from a constraint system A q = b by
enumerating the vertices of the dual polyhedron {p : A'p <= c}. Each vertex p
contributes the affine expression b'p, and the lower bound of c'q is the max of
these expressions over all feasible right-hand sides b.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, islice
from math import comb
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from joblib import Parallel, delayed

from errors import EmptyPolyhedron, TooManyCombinations
from law import STRONG_A, STRONG_ACE, STRONG_ROW_LABELS
from lp_engine import EXACT_DEFAULT, REDUCED_A, REDUCED_OBJECTIVE

logger = logging.getLogger(__name__)

DEFAULT_COMBINATION_BUDGET = 10 ** 7
MAX_DUAL_DIM = 8
VERTEX_TOL = 1e-9
DEDUP_DECIMALS = 9
WORKERS = int(os.getenv("SURRBOUND_WORKERS", "1"))

DISPLAY_NAMES = {"gamma": "γ", "gamma1": "γ1", "gamma0": "γ0"}
MINUS = "−"


@dataclass(frozen=True, eq=False)
class DualPolyhedron:
    a_transpose: np.ndarray
    c: np.ndarray
    labels: Tuple[str, ...]

    def __post_init__(self):
        at = np.atleast_2d(np.asarray(self.a_transpose, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n, m = at.shape
        if not n > m:
            raise ValueError(f"dual polyhedron needs more inequalities than dimensions, got {n}x{m}")
        if c.shape != (n,) or len(self.labels) != m:
            raise ValueError("dual polyhedron dimensions are inconsistent")
        if not (np.all(np.isfinite(at)) and np.all(np.isfinite(c))):
            raise ValueError("dual polyhedron entries must be finite")
        object.__setattr__(self, "a_transpose", at)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.a_transpose.shape[0]

    @property
    def m(self) -> int:
        return self.a_transpose.shape[1]

    def slack(self, p) -> np.ndarray:
        return self.c - self.a_transpose @ np.asarray(p, dtype=float)

    def contains(self, p, tol: float = VERTEX_TOL) -> bool:
        return bool(np.all(self.slack(p) >= -tol))


@dataclass(frozen=True)
class SymbolicBoundExpr:
    """Affine form coeffs @ rhs over the named right-hand-side basis."""
    coeffs: Tuple
    labels: Tuple[str, ...]

    def value(self, rhs) -> float:
        return float(np.asarray([float(x) for x in self.coeffs]) @ np.asarray(rhs, dtype=float))

    def negated(self) -> "SymbolicBoundExpr":
        return SymbolicBoundExpr(tuple(-x for x in self.coeffs), self.labels)

    def render(self) -> str:
        return render_expression(self)


@dataclass(frozen=True)
class DerivedBound:
    """A bound as the max (lower) or min (upper) of affine expressions."""
    direction: str
    exprs: Tuple[SymbolicBoundExpr, ...]

    @property
    def labels(self) -> Tuple[str, ...]:
        return self.exprs[0].labels

    def evaluate(self, rhs) -> float:
        values = [e.value(rhs) for e in self.exprs]
        return max(values) if self.direction == "lower" else min(values)

    def evaluate_many(self, rhs_rows: np.ndarray) -> np.ndarray:
        V = np.asarray(rhs_rows, dtype=float) @ _coeff_matrix(self.exprs).T
        return V.max(axis=1) if self.direction == "lower" else V.min(axis=1)

    def render(self) -> List[str]:
        return [e.render() for e in self.exprs]


def _coeff_matrix(exprs: Sequence[SymbolicBoundExpr]) -> np.ndarray:
    return np.array([[float(x) for x in e.coeffs] for e in exprs])


def _canonical_key(coeffs) -> Tuple:
    return tuple(float(x) for x in coeffs)


def _solve_float(poly: DualPolyhedron, subset) -> Optional[np.ndarray]:
    M = poly.a_transpose[list(subset)]
    if np.linalg.matrix_rank(M) < poly.m:
        return None
    p = np.linalg.solve(M, poly.c[list(subset)])
    return p if poly.contains(p) else None


def _rational_rows(poly: DualPolyhedron):
    at = [[sympy.nsimplify(x, rational=True) for x in row] for row in poly.a_transpose]
    c = [sympy.nsimplify(x, rational=True) for x in poly.c]
    return at, c


def _solve_exact(at, c, subset) -> Optional[Tuple[Fraction, ...]]:
    M = sympy.Matrix([at[k] for k in subset])
    if M.det() == 0:
        return None
    p = M.LUsolve(sympy.Matrix([c[k] for k in subset]))
    for row, ck in zip(at, c):
        if sum(a * x for a, x in zip(row, p)) > ck:
            return None
    return tuple(Fraction(int(x.p), int(x.q)) for x in p)


def _vertices_of_chunk(poly: DualPolyhedron, subsets: List[Tuple[int, ...]], exact: bool) -> list:
    found = []
    rational = _rational_rows(poly) if exact else None
    for subset in subsets:
        if exact:
            p = _solve_exact(*rational, subset)
            if p is not None:
                found.append(p)
        else:
            p = _solve_float(poly, subset)
            if p is not None:
                p = np.round(p, DEDUP_DECIMALS) + 0.0
                found.append(tuple(float(x) for x in p))
    return found


def _chunks(iterable: Iterable, size: int):
    it = iter(iterable)
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def enumerate_dual_vertices(poly: DualPolyhedron, exact: Optional[bool] = None,
                            budget: int = DEFAULT_COMBINATION_BUDGET,
                            workers: Optional[int] = None) -> List[SymbolicBoundExpr]:
    """
    Enumerates the vertices of {p : A'p <= c} by solving every m-subset of the
    inequalities as equalities.
    Args:
        poly (DualPolyhedron): The dual polyhedron.
        exact (bool): Rational arithmetic through sympy; defaults to SURRBOUND_EXACT.
        budget (int): Maximum number of subsets to try.
        workers (int): joblib workers; the result does not depend on it.
    Returns:
        list[SymbolicBoundExpr]: Deduplicated vertices in lexicographic order.
    Raises:
        TooManyCombinations: m exceeds 8 or C(n, m) exceeds the budget.
        EmptyPolyhedron: No subset yields a feasible point.
    """
    exact = EXACT_DEFAULT if exact is None else exact
    workers = WORKERS if workers is None else workers
    n_subsets = comb(poly.n, poly.m)
    if poly.m > MAX_DUAL_DIM or n_subsets > budget:
        raise TooManyCombinations(f"C({poly.n}, {poly.m}) = {n_subsets} subsets exceeds the budget of {budget}")
    subsets = combinations(range(poly.n), poly.m)
    if workers > 1:
        size = max(1, n_subsets // (4 * workers))
        parts = Parallel(n_jobs=workers)(delayed(_vertices_of_chunk)(poly, chunk, exact)
                                         for chunk in _chunks(subsets, size))
        raw = [p for part in parts for p in part]
    else:
        raw = _vertices_of_chunk(poly, list(subsets), exact)
    if not raw:
        raise EmptyPolyhedron(f"no feasible vertex among {n_subsets} subsets")
    unique = sorted(set(raw), key=_canonical_key)
    logger.debug("Dual enumeration: %d subsets, %d feasible, %d distinct vertices",
                 n_subsets, len(raw), len(unique))
    return [SymbolicBoundExpr(p, poly.labels) for p in unique]


def prune_redundant(exprs: Sequence[SymbolicBoundExpr], samples: np.ndarray,
                    maximize: bool = True, tol: float = VERTEX_TOL) -> List[SymbolicBoundExpr]:
    """
    Drops expressions that never change the max (or min) over the sampled
    right-hand sides. Candidates are visited in lexicographic order.
    """
    if not exprs:
        raise ValueError("nothing to prune")
    unique = {}
    for e in exprs:
        unique.setdefault(_canonical_key(e.coeffs), e)
    ordered = [unique[k] for k in sorted(unique)]
    V = np.asarray(samples, dtype=float) @ _coeff_matrix(ordered).T
    if not maximize:
        V = -V
    full = V.max(axis=1)
    keep = np.ones(len(ordered), dtype=bool)
    for k in range(len(ordered)):
        keep[k] = False
        if not keep.any() or np.any(V[:, keep].max(axis=1) < full - tol):
            keep[k] = True
        else:
            logger.debug("Pruned %s", render_expression(ordered[k]))
    kept = [e for e, flag in zip(ordered, keep) if flag]
    logger.debug("Pruning kept %d of %d expressions on %d samples", len(kept), len(ordered), len(V))
    return kept


def _format_coeff(c: float, name: str, first: bool) -> str:
    sign = MINUS if c < 0 else "+"
    mag = abs(c)
    if name == "1":
        body = f"{mag:g}"
    elif mag == 1.0:
        body = name
    else:
        body = f"{mag:g}·{name}"
    if first:
        return f"{MINUS}{body}" if c < 0 else body
    return f" {sign} {body}"


def render_expression(expr: SymbolicBoundExpr) -> str:
    """Affine form with gamma terms first, then the observables, then the constant."""
    order = ([k for k, lab in enumerate(expr.labels) if lab.startswith("gamma")]
             + [k for k, lab in enumerate(expr.labels) if not lab.startswith("gamma") and lab != "1"]
             + [k for k, lab in enumerate(expr.labels) if lab == "1"])
    parts = []
    for k in order:
        c = round(float(expr.coeffs[k]), 9)
        if c == 0.0:
            continue
        name = DISPLAY_NAMES.get(expr.labels[k], expr.labels[k])
        parts.append(_format_coeff(c, name, first=not parts))
    return "".join(parts) if parts else "0"


# ---------------------------------------------------------------------------
# the two supported systems

REDUCED_LABELS = ("P(Y=1|T=0)", "P(S=0|T=1)", "gamma1", "1")


def strong_dual(direction: str = "lower") -> DualPolyhedron:
    """Dual of min (lower) or min of -ACE (upper) over the strong system."""
    c = STRONG_ACE if direction == "lower" else -STRONG_ACE
    return DualPolyhedron(STRONG_A.T, c, STRONG_ROW_LABELS)


def reduced_dual(direction: str = "lower") -> DualPolyhedron:
    c = REDUCED_OBJECTIVE if direction == "lower" else -REDUCED_OBJECTIVE
    return DualPolyhedron(REDUCED_A.T, c, ("P(S=0|T=1)", "gamma1", "1"))


def strong_rhs_samples(rng: np.random.Generator, n: int) -> np.ndarray:
    """Right-hand sides A q of random strong q-tables, over a mix of Dirichlet concentrations."""
    alphas = (1.0, 0.3, 0.1, 0.03)
    sizes = [n // len(alphas)] * len(alphas)
    sizes[0] += n - sum(sizes)
    Q = np.vstack([rng.dirichlet(np.full(16, a), size=k) for a, k in zip(alphas, sizes)])
    return Q @ STRONG_A.T


def reduced_rhs_samples(rng: np.random.Generator, n: int) -> np.ndarray:
    """(P(Y=1|T=0), P(S=0|T=1), gamma1, 1) rows; P(Y=1|T=0) is unconstrained by the rest."""
    alphas = (1.0, 0.3, 0.1)
    sizes = [n // len(alphas)] * len(alphas)
    sizes[0] += n - sum(sizes)
    X = np.vstack([rng.dirichlet(np.full(8, a), size=k) for a, k in zip(alphas, sizes)])
    return np.column_stack([rng.uniform(size=n), X @ REDUCED_A.T])


def _lift_reduced(expr: SymbolicBoundExpr, direction: str) -> SymbolicBoundExpr:
    coeffs = tuple(expr.coeffs) if direction == "lower" else tuple(-x for x in expr.coeffs)
    minus_one = Fraction(-1) if isinstance(coeffs[0], Fraction) else -1.0
    return SymbolicBoundExpr((minus_one,) + coeffs, REDUCED_LABELS)


def derive(system: str = "strong", direction: str = "lower", n_samples: int = 100_000,
           seed: int = 0, exact: Optional[bool] = None, prune: bool = True,
           workers: Optional[int] = None) -> DerivedBound:
    """
    Derives the closed-form lower or upper bound of ACE(T->Y) for `system`
    ("strong" or "nonstrong-reduced").
    """
    if direction not in ("lower", "upper"):
        raise ValueError(f"direction must be lower or upper, got {direction!r}")
    logger.info("Deriving %s bound for the %s system", direction, system)
    rng = np.random.default_rng(seed)
    if system == "strong":
        vertices = enumerate_dual_vertices(strong_dual(direction), exact=exact, workers=workers)
        exprs = vertices if direction == "lower" else [v.negated() for v in vertices]
        samples = strong_rhs_samples(rng, n_samples) if prune else None
    elif system == "nonstrong-reduced":
        vertices = enumerate_dual_vertices(reduced_dual(direction), exact=exact, workers=workers)
        exprs = [_lift_reduced(v, direction) for v in vertices]
        samples = reduced_rhs_samples(rng, n_samples) if prune else None
    else:
        raise ValueError(f"unknown system {system!r}")
    if prune:
        exprs = prune_redundant(exprs, samples, maximize=direction == "lower")
    else:
        exprs = sorted(exprs, key=lambda e: _canonical_key(e.coeffs))
    return DerivedBound(direction, tuple(exprs))

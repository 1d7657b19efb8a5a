"""
closed_bounds.py

Closed-form sharp bounds on ACE(T->Y) and the exclusion criteria for the
surrogate paradox, with attribution of the attaining term.

Every bound term is affine in the surrogate->outcome effect gamma, so the
bounds over a range of gamma are found by scanning the breakpoints of the
term envelopes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import List, NamedTuple, Optional, Sequence, Tuple

from errors import BadRange, InfeasibleInputs, NotAProbability, WrongScale
from law import (POS_INF, BoundsReport, GammaForm, GammaSpec, Limit, ObservedLaw,
                 Scale, Verdict, gamma_feasible_range, validate_observed)
from lp_engine import build_reduced_nonstrong_system, is_feasible, strong_feasible

logger = logging.getLogger(__name__)

# ties between terms closer than this go to the lowest index
TIE_TOL = 1e-12


class AffineTerm(NamedTuple):
    """A bound term const + slope * gamma."""
    label: str
    const: float
    slope: float

    def at(self, gamma: float) -> float:
        return self.const + self.slope * gamma


@dataclass(frozen=True)
class TermList:
    terms: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        labels = [label for label, _ in self.terms]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate term labels in {labels}")

    @classmethod
    def evaluate(cls, affine: Sequence[AffineTerm], gamma: float) -> "TermList":
        return cls(tuple((t.label, t.at(gamma)) for t in affine))

    @property
    def values(self) -> List[float]:
        return [v for _, v in self.terms]

    def extreme(self, maximize: bool) -> Tuple[int, float]:
        """Returns (1-based index, value) of the max (or min); ties go to the lowest index."""
        values = self.values
        best = max(values) if maximize else min(values)
        for k, v in enumerate(values):
            if abs(v - best) <= TIE_TOL:
                return k + 1, best
        raise AssertionError("unreachable")

    def as_dict(self) -> dict:
        return dict(self.terms)


class GammaNeeded(NamedTuple):
    threshold: float
    attainable: bool


def strong_lower_terms(law: ObservedLaw) -> Tuple[AffineTerm, ...]:
    p00, p10, p01, p11 = law.cells
    s1, s0 = law.s1_treated, law.s0_treated
    return (
        AffineTerm("L1", -p10 - s0, 0.0),
        AffineTerm("L2", -(p10 + p11), 0.0),
        AffineTerm("L3", -p11 - s1, 0.0),
        AffineTerm("L4", -s1 - p10, -1.0),
        AffineTerm("L5", -p01 - 2.0 * p10, -1.0),
        AffineTerm("L6", -2.0 * p11 - p00, 1.0),
        AffineTerm("L7", -s0 - p11, 1.0),
    )


def strong_upper_terms(law: ObservedLaw) -> Tuple[AffineTerm, ...]:
    p00, p10, p01, p11 = law.cells
    s1, s0 = law.s1_treated, law.s0_treated
    return (
        AffineTerm("U1", p00 + s0, 0.0),
        AffineTerm("U2", p00 + p01, 0.0),
        AffineTerm("U3", p01 + s1, 0.0),
        AffineTerm("U4", p10 + 2.0 * p01, 1.0),
        AffineTerm("U5", p01 + s0, 1.0),
        AffineTerm("U6", 2.0 * p00 + p11, -1.0),
        AffineTerm("U7", p00 + s1, -1.0),
    )


def nonstrong_lower_terms(py1_control: float, s1_treated: float) -> Tuple[AffineTerm, ...]:
    return (
        AffineTerm("L'1", -py1_control, 0.0),
        AffineTerm("L'2", -py1_control - s1_treated, -1.0),
        AffineTerm("L'3", -py1_control - (1.0 - s1_treated), 1.0),
    )


def nonstrong_upper_terms(py1_control: float, s1_treated: float) -> Tuple[AffineTerm, ...]:
    py0 = 1.0 - py1_control
    return (
        AffineTerm("U'1", py0, 0.0),
        AffineTerm("U'2", py0 + s1_treated, -1.0),
        AffineTerm("U'3", py0 + (1.0 - s1_treated), 1.0),
    )


def sign_only_terms(law: ObservedLaw) -> Tuple[TermList, TermList]:
    """The five-term lower and upper stacks for a known-positive gamma."""
    p00, p10, p01, p11 = law.cells
    s1, s0 = law.s1_treated, law.s0_treated
    lower = TermList((("L1", -p10 - s0), ("L2", -(p10 + p11)), ("L3", -p11 - s1),
                      ("L6", -2.0 * p11 - p00), ("L7", -p11 - s0)))
    upper = TermList((("U1", p00 + s0), ("U2", p00 + p01), ("U3", p01 + s1),
                      ("U6", 2.0 * p00 + p11), ("U7", p00 + s1)))
    return lower, upper


def strong_threshold(law: ObservedLaw) -> float:
    return min(2.0 * law.p11 + law.p00, law.s0_treated + law.p11)


def nonstrong_threshold(py1_control: float, s1_treated: float) -> float:
    return py1_control + (1.0 - s1_treated)


def _verdict(guaranteed: float, threshold: float) -> Verdict:
    if abs(guaranteed - threshold) <= TIE_TOL:
        return Verdict.BOUNDARY
    return Verdict.EXCLUDED if guaranteed > threshold else Verdict.NOT_EXCLUDABLE


def _check_gamma(gamma: float, name: str = "gamma"):
    if not -1.0 <= gamma <= 1.0:
        raise BadRange(f"{name}={gamma} outside [-1, 1]")


def _check_marginals(py1_control: float, s1_treated: float):
    for name, v in (("py1_control", py1_control), ("s1_treated", s1_treated)):
        if not 0.0 <= v <= 1.0:
            raise NotAProbability(f"{name}={v!r} is not a probability")


def strong_bounds(law: ObservedLaw, gamma: float, strict: bool = False) -> BoundsReport:
    """
    Sharp bounds on ACE(T->Y) under the strong-surrogate model.
    Args:
        law (ObservedLaw): Observed law.
        gamma (float): ACE(S->Y).
        strict (bool): Reject (law, gamma) pairs that no q-table reproduces.
    Returns:
        BoundsReport: max(L1..L7), min(U1..U7), active terms and the point-gamma verdict.
    Raises:
        InfeasibleInputs: Only in strict mode.
    """
    validate_observed(law)
    _check_gamma(gamma)
    if strict and not strong_feasible(law, gamma):
        lo, hi = gamma_feasible_range(law)
        raise InfeasibleInputs(f"gamma={gamma} is inconsistent with the law "
                               f"(compatible range [{lo:.6g}, {hi:.6g}])")
    lower_terms = TermList.evaluate(strong_lower_terms(law), gamma)
    upper_terms = TermList.evaluate(strong_upper_terms(law), gamma)
    i_lo, lower = lower_terms.extreme(maximize=True)
    i_hi, upper = upper_terms.extreme(maximize=False)
    threshold = strong_threshold(law)
    report = BoundsReport(lower, upper, Scale.DIFFERENCE, i_lo, i_hi,
                          criterion=_verdict(gamma, threshold), threshold=threshold,
                          lower_terms=lower_terms.terms, upper_terms=upper_terms.terms)
    if report.crossed:
        logger.warning("Crossed bounds [%s, %s]: gamma=%s is inconsistent with the law", lower, upper, gamma)
    logger.debug("Strong bounds gamma=%s -> [%s (L%d), %s (U%d)]", gamma, lower, i_lo, upper, i_hi)
    return report


def strong_criterion(law: ObservedLaw, gamma_spec: GammaSpec) -> Tuple[Verdict, float]:
    """Exclusion verdict: the guaranteed lower end of gamma against min(2 p11 + p00, P(S=0|T=1) + p11)."""
    if gamma_spec.scale is not Scale.DIFFERENCE:
        raise WrongScale("the strong criterion is stated on the difference scale; use crr bounds")
    validate_observed(law)
    threshold = strong_threshold(law)
    if gamma_spec.form is GammaForm.SIGN_POSITIVE:
        return Verdict.NOT_EXCLUDABLE, threshold
    return _verdict(gamma_spec.lo, threshold), threshold


def strong_gamma_needed(law: ObservedLaw) -> GammaNeeded:
    """Smallest gamma above which the paradox is excluded, and whether any compatible gamma gets there."""
    threshold = strong_threshold(law)
    return GammaNeeded(threshold, threshold < gamma_feasible_range(law)[1])


def nonstrong_bounds(py1_control: float, s1_treated: float, gamma1: float,
                     strict: bool = False) -> BoundsReport:
    """Sharp bounds without the strong-surrogate assumption; they do not involve gamma0."""
    _check_marginals(py1_control, s1_treated)
    _check_gamma(gamma1, "gamma1")
    if strict and not is_feasible(build_reduced_nonstrong_system(py1_control, s1_treated, gamma1)):
        raise InfeasibleInputs(f"gamma1={gamma1} is inconsistent with s1={s1_treated}")
    lower_terms = TermList.evaluate(nonstrong_lower_terms(py1_control, s1_treated), gamma1)
    upper_terms = TermList.evaluate(nonstrong_upper_terms(py1_control, s1_treated), gamma1)
    i_lo, lower = lower_terms.extreme(maximize=True)
    i_hi, upper = upper_terms.extreme(maximize=False)
    threshold = nonstrong_threshold(py1_control, s1_treated)
    return BoundsReport(lower, upper, Scale.DIFFERENCE, i_lo, i_hi,
                        criterion=_verdict(gamma1, threshold), threshold=threshold,
                        lower_terms=lower_terms.terms, upper_terms=upper_terms.terms)


def nonstrong_criterion(py1_control: float, s1_treated: float,
                        gamma1_spec: GammaSpec) -> Tuple[Verdict, float]:
    if gamma1_spec.scale is not Scale.DIFFERENCE:
        raise WrongScale("the non-strong criterion is stated on the difference scale")
    _check_marginals(py1_control, s1_treated)
    threshold = nonstrong_threshold(py1_control, s1_treated)
    if gamma1_spec.form is GammaForm.SIGN_POSITIVE:
        return Verdict.NOT_EXCLUDABLE, threshold
    return _verdict(gamma1_spec.lo, threshold), threshold


def nonstrong_gamma_needed(py1_control: float, s1_treated: float) -> GammaNeeded:
    threshold = nonstrong_threshold(py1_control, s1_treated)
    return GammaNeeded(threshold, threshold < 1.0)


def _envelope_candidates(terms: Sequence[AffineTerm], a: float, b: float) -> List[float]:
    points = [a, b]
    for s, t in combinations(terms, 2):
        if s.slope != t.slope:
            g = (t.const - s.const) / (s.slope - t.slope)
            if a < g < b:
                points.append(g)
    return sorted(points)


def _range_extreme(terms: Sequence[AffineTerm], a: float, b: float,
                   lower: bool) -> Tuple[float, float, int]:
    """
    min over [a, b] of the max of the terms (lower=True), or max of the min.
    Returns (value, attaining gamma, 1-based active term).
    """
    best = None
    for g in _envelope_candidates(terms, a, b):
        idx, v = TermList.evaluate(terms, g).extreme(maximize=lower)
        if best is None or (v < best[0] - TIE_TOL if lower else v > best[0] + TIE_TOL):
            best = (v, g, idx)
    return best


def _check_range(lo: float, hi: Limit):
    if not -1.0 <= lo <= 1.0:
        raise BadRange(f"gamma lower end {lo} outside [-1, 1]")
    if hi is not POS_INF:
        if not -1.0 <= hi <= 1.0:
            raise BadRange(f"gamma upper end {hi} outside [-1, 1]")
        if not lo < hi:
            raise BadRange(f"gamma range needs lo < hi, got [{lo}, {hi}]")


def strong_bounds_gamma_range(law: ObservedLaw, lo: float, hi: Limit) -> BoundsReport:
    """
    Union of the strong bounds over gamma in [lo, hi] intersected with the
    gamma values compatible with the law.
    Args:
        law (ObservedLaw): Observed law.
        lo (float): Guaranteed lower end of gamma.
        hi (float | POS_INF): Upper end, or POS_INF when only lo is known.
    Returns:
        BoundsReport: The widened bounds; the verdict compares lo with the threshold.
        With (0, POS_INF) the lower/upper terms are the five-term sign-only stacks.
    Raises:
        BadRange: The range is empty or outside [-1, 1].
        InfeasibleInputs: No gamma in the range is compatible with the law.
    """
    validate_observed(law)
    _check_range(lo, hi)
    g_lo, g_hi = gamma_feasible_range(law)
    a = max(lo, g_lo)
    b = g_hi if hi is POS_INF else min(hi, g_hi)
    if a > b:
        raise InfeasibleInputs(f"gamma range [{lo}, {hi}] misses the compatible range [{g_lo:.6g}, {g_hi:.6g}]")
    lower, g_at_lower, i_lo = _range_extreme(strong_lower_terms(law), a, b, lower=True)
    upper, g_at_upper, i_hi = _range_extreme(strong_upper_terms(law), a, b, lower=False)
    logger.debug("Range bounds over gamma in [%s, %s]: lower at gamma=%s, upper at gamma=%s",
                 a, b, g_at_lower, g_at_upper)
    threshold = strong_threshold(law)
    lower_terms = upper_terms = None
    if lo == 0.0 and hi is POS_INF:
        lower_list, upper_list = sign_only_terms(law)
        lower_terms, upper_terms = lower_list.terms, upper_list.terms
    return BoundsReport(lower, upper, Scale.DIFFERENCE, i_lo, i_hi,
                        criterion=_verdict(lo, threshold), threshold=threshold,
                        lower_terms=lower_terms, upper_terms=upper_terms)


def sign_only_bounds(law: ObservedLaw) -> BoundsReport:
    """Bounds when only gamma > 0 is known, from the five-term stacks."""
    validate_observed(law)
    lower_list, upper_list = sign_only_terms(law)
    i_lo, lower = lower_list.extreme(maximize=True)
    i_hi, upper = upper_list.extreme(maximize=False)
    return BoundsReport(lower, upper, Scale.DIFFERENCE, i_lo, i_hi,
                        criterion=Verdict.NOT_EXCLUDABLE, threshold=strong_threshold(law),
                        lower_terms=lower_list.terms, upper_terms=upper_list.terms)


def nonstrong_bounds_gamma_range(py1_control: float, s1_treated: float,
                                 lo: float, hi: Limit) -> BoundsReport:
    """Union of the non-strong bounds over gamma1 in [lo, hi]; every gamma1 in [-1, 1] is compatible."""
    _check_marginals(py1_control, s1_treated)
    _check_range(lo, hi)
    b = 1.0 if hi is POS_INF else hi
    lower, _, i_lo = _range_extreme(nonstrong_lower_terms(py1_control, s1_treated), lo, b, lower=True)
    upper, _, i_hi = _range_extreme(nonstrong_upper_terms(py1_control, s1_treated), lo, b, lower=False)
    threshold = nonstrong_threshold(py1_control, s1_treated)
    return BoundsReport(lower, upper, Scale.DIFFERENCE, i_lo, i_hi,
                        criterion=_verdict(lo, threshold), threshold=threshold)


def bounds_for_spec(law: ObservedLaw, gamma_spec: GammaSpec, strict: bool = False) -> BoundsReport:
    """Dispatches a difference-scale GammaSpec to the point, range or sign-only bounds."""
    if gamma_spec.scale is not Scale.DIFFERENCE:
        raise WrongScale("closed-form bounds are on the difference scale")
    if gamma_spec.form is GammaForm.POINT:
        return strong_bounds(law, gamma_spec.lo, strict=strict)
    if gamma_spec.form is GammaForm.SIGN_POSITIVE:
        report = strong_bounds_gamma_range(law, 0.0, POS_INF)
        return report.with_criterion(Verdict.NOT_EXCLUDABLE, report.threshold)
    return strong_bounds_gamma_range(law, gamma_spec.lo, gamma_spec.hi)


def nonstrong_bounds_for_spec(py1_control: float, s1_treated: float, gamma_spec: GammaSpec,
                              strict: bool = False) -> BoundsReport:
    if gamma_spec.scale is not Scale.DIFFERENCE:
        raise WrongScale("non-strong bounds are on the difference scale")
    if gamma_spec.form is GammaForm.POINT:
        return nonstrong_bounds(py1_control, s1_treated, gamma_spec.lo, strict=strict)
    if gamma_spec.form is GammaForm.SIGN_POSITIVE:
        report = nonstrong_bounds_gamma_range(py1_control, s1_treated, 0.0, POS_INF)
        return report.with_criterion(Verdict.NOT_EXCLUDABLE, report.threshold)
    return nonstrong_bounds_gamma_range(py1_control, s1_treated, gamma_spec.lo, gamma_spec.hi)

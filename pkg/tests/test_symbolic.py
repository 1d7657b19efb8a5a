# tests/test_symbolic.py
from fractions import Fraction

import numpy as np
import pytest

from closed_bounds import nonstrong_bounds, strong_bounds
from conftest import random_instances
from errors import EmptyPolyhedron, TooManyCombinations
from law import STRONG_ROW_LABELS
from symbolic import (DualPolyhedron, SymbolicBoundExpr, derive, enumerate_dual_vertices,
                      prune_redundant, reduced_dual, render_expression, strong_dual,
                      strong_rhs_samples)


@pytest.fixture(scope="module")
def strong_derived():
    return {d: derive("strong", d, n_samples=100_000, seed=0) for d in ("lower", "upper")}


@pytest.fixture(scope="module")
def reduced_derived():
    return {d: derive("nonstrong-reduced", d, n_samples=50_000, seed=0) for d in ("lower", "upper")}


def _strong_test_rows():
    rows, lowers, uppers = [], [], []
    for alpha, seed in ((1.0, 40), (0.3, 41)):
        for _, law, gamma in random_instances(seed=seed, n=5000, alpha=alpha):
            report = strong_bounds(law, gamma)
            rows.append(law.rhs(gamma))
            lowers.append(report.lower)
            uppers.append(report.upper)
    return np.array(rows), np.array(lowers), np.array(uppers)


def test_unit_box_has_four_vertices():
    box = DualPolyhedron(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
                         np.ones(4), ("a", "b"))
    vertices = enumerate_dual_vertices(box, exact=False)
    assert [tuple(v.coeffs) for v in vertices] == [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]


def test_vertices_are_feasible_and_tight():
    poly = strong_dual("lower")
    for v in enumerate_dual_vertices(poly, exact=False):
        p = np.array(v.coeffs, dtype=float)
        assert poly.contains(p, tol=1e-8)
        assert int(np.sum(np.abs(poly.slack(p)) < 1e-8)) >= poly.m


def test_strong_derivation_matches_closed_form(strong_derived):
    rows, lowers, uppers = _strong_test_rows()
    assert np.allclose(strong_derived["lower"].evaluate_many(rows), lowers, atol=1e-9)
    assert np.allclose(strong_derived["upper"].evaluate_many(rows), uppers, atol=1e-9)


def test_single_evaluation_matches_vectorised(strong_derived, example1_law):
    rhs = example1_law.rhs(0.3010)
    lower = strong_derived["lower"]
    assert lower.evaluate(rhs) == pytest.approx(lower.evaluate_many(rhs[None, :])[0])
    assert lower.evaluate(rhs) == pytest.approx(-0.0710, abs=1e-9)


def test_reduced_derivation_matches_nonstrong_closed_form(reduced_derived):
    rng = np.random.default_rng(42)
    py1, s1, g1 = rng.uniform(size=10_000), rng.uniform(size=10_000), rng.uniform(-1, 1, size=10_000)
    rows = np.column_stack([py1, 1.0 - s1, g1, np.ones_like(g1)])
    expected = [nonstrong_bounds(a, b, c) for a, b, c in zip(py1, s1, g1)]
    assert np.allclose(reduced_derived["lower"].evaluate_many(rows), [r.lower for r in expected], atol=1e-9)
    assert np.allclose(reduced_derived["upper"].evaluate_many(rows), [r.upper for r in expected], atol=1e-9)


def test_reduced_lower_renders_control_risk_term(reduced_derived):
    assert "−P(Y=1|T=0)" in reduced_derived["lower"].render()
    assert reduced_derived["lower"].labels == ("P(Y=1|T=0)", "P(S=0|T=1)", "gamma1", "1")


def test_exact_enumeration_matches_float():
    exact = enumerate_dual_vertices(reduced_dual("lower"), exact=True)
    approx = enumerate_dual_vertices(reduced_dual("lower"), exact=False)
    assert all(isinstance(x, Fraction) for v in exact for x in v.coeffs)
    assert len(exact) == len(approx)
    exact_rows = np.array(sorted(tuple(float(x) for x in v.coeffs) for v in exact))
    assert np.allclose(exact_rows, np.array([v.coeffs for v in approx]), atol=1e-8)


def test_enumeration_does_not_depend_on_workers():
    one = enumerate_dual_vertices(reduced_dual("upper"), exact=False, workers=1)
    two = enumerate_dual_vertices(reduced_dual("upper"), exact=False, workers=2)
    assert [v.coeffs for v in one] == [v.coeffs for v in two]


@pytest.mark.parametrize("coeffs, text", [
    ((0, -1, 0, -1, 0, 0), "−P(Y=1,S=0|T=0) − P(S=0|T=1)"),
    ((1, 0, 0, 0, -1, 0), "−γ + P(Y=0,S=0|T=0)"),
    ((1, 2, 2, 0, 1, -2), "γ + P(Y=0,S=0|T=0) + 2·P(Y=1,S=0|T=0) + 2·P(Y=0,S=1|T=0) − 2"),
    ((0, 0, 0, 0, 0, 0), "0"),
])
def test_render(coeffs, text):
    assert render_expression(SymbolicBoundExpr(coeffs, STRONG_ROW_LABELS)) == text


class TestPrune:
    @pytest.fixture
    def samples(self):
        return strong_rhs_samples(np.random.default_rng(43), 2000)

    def test_duplicates_collapse(self, samples):
        e = SymbolicBoundExpr((0.0, -1.0, 0.0, -1.0, 0.0, 0.0), STRONG_ROW_LABELS)
        assert prune_redundant([e, e], samples) == [e]

    def test_dominated_expression_removed(self, samples):
        l1 = SymbolicBoundExpr((0.0, -1.0, 0.0, -1.0, 0.0, 0.0), STRONG_ROW_LABELS)
        # l1 + (1, 1, 1, 0, 0, -1) is l1 - P(Y=1,S=1|T=0)
        dominated = SymbolicBoundExpr((1.0, 0.0, 1.0, -1.0, 0.0, -1.0), STRONG_ROW_LABELS)
        assert prune_redundant([dominated, l1], samples) == [l1]
        assert prune_redundant([dominated, l1], samples, maximize=False) == [dominated]

    def test_empty_input(self, samples):
        with pytest.raises(ValueError):
            prune_redundant([], samples)


def test_combination_budget():
    with pytest.raises(TooManyCombinations):
        enumerate_dual_vertices(strong_dual("lower"), budget=10)


def test_dimension_cap():
    poly = DualPolyhedron(np.vstack([np.eye(9), -np.eye(9)]), np.ones(18), tuple("abcdefghi"))
    with pytest.raises(TooManyCombinations):
        enumerate_dual_vertices(poly)


def test_empty_polyhedron():
    poly = DualPolyhedron(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]), ("x",))
    with pytest.raises(EmptyPolyhedron):
        enumerate_dual_vertices(poly, exact=False)


def test_polyhedron_shape_checks():
    with pytest.raises(ValueError):
        DualPolyhedron(np.eye(2), np.ones(2), ("a", "b"))
    with pytest.raises(ValueError):
        derive("weak", "lower")
    with pytest.raises(ValueError):
        derive("strong", "sideways")

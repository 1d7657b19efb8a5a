# tests/test_law.py
import numpy as np
import pytest

from conftest import EXAMPLE1, random_instances
from errors import BadRange, NotAProbability, NotNormalized
from law import (POS_INF, STRONG_A, GammaForm, GammaSpec, NonStrongGammas, ObservedLaw,
                 QTableNonStrong, QTableStrong, Scale, ace_from_qtable_strong, ace_ts_from_law,
                 crr_from_qtable_strong, effects_from_qtable_nonstrong, gamma_feasible_range,
                 is_valid_observed, observables_from_qtable_strong, random_qtable_nonstrong,
                 random_qtable_strong, renormalize, validate_observed)


@pytest.mark.parametrize("law", [
    ObservedLaw(0.25, 0.25, 0.25, 0.25, 0.5),
    EXAMPLE1,
    ObservedLaw(1.0, 0.0, 0.0, 0.0, 0.0),
])
def test_validate_observed_accepts(law):
    assert validate_observed(law) is law
    assert is_valid_observed(law)


@pytest.mark.parametrize("law, error", [
    (ObservedLaw(0.5, 0.5, 0.5, 0.5, 0.5), NotNormalized),
    (ObservedLaw(1.2, -0.2, 0.0, 0.0, 0.5), NotAProbability),
    (ObservedLaw(0.25, 0.25, 0.25, 0.25, 1.5), NotAProbability),
])
def test_validate_observed_rejects(law, error):
    with pytest.raises(error):
        validate_observed(law)
    assert not is_valid_observed(law)


def test_renormalize_is_explicit():
    law = ObservedLaw(0.2, 0.2, 0.2, 0.2, 0.5)
    with pytest.raises(NotNormalized):
        validate_observed(law)
    fixed = renormalize(law)
    assert fixed.cells == pytest.approx((0.25, 0.25, 0.25, 0.25))
    assert fixed.s1_treated == 0.5


def test_law_dict_roundtrip_and_missing_field():
    assert ObservedLaw.from_dict(EXAMPLE1.to_dict()) == EXAMPLE1
    with pytest.raises(NotAProbability, match="s1"):
        ObservedLaw.from_dict({"p00": 1, "p10": 0, "p01": 0, "p11": 0})


@pytest.mark.parametrize("value", ["x", None, [0.25]])
def test_law_dict_non_numeric_field(value):
    with pytest.raises(NotAProbability, match="p00"):
        ObservedLaw.from_dict({"p00": value, "p10": 0.25, "p01": 0.25, "p11": 0.25, "s1": 0.5})


def test_point_mass_q11_maps_to_single_type():
    law, gamma = observables_from_qtable_strong(QTableStrong.point_mass(1, 1))
    assert law.cells == pytest.approx((1.0, 0.0, 0.0, 0.0))
    assert law.s1_treated == pytest.approx(1.0)
    assert gamma == pytest.approx(1.0)


def test_uniform_q_maps_to_uniform_law():
    law, gamma = observables_from_qtable_strong(QTableStrong.uniform())
    assert law.cells == pytest.approx((0.25, 0.25, 0.25, 0.25))
    assert law.s1_treated == pytest.approx(0.5)
    assert gamma == pytest.approx(0.0)


@pytest.mark.parametrize("i, j, ace", [(1, 1, 1.0), (2, 2, 1.0), (1, 2, -1.0), (2, 1, -1.0), (0, 3, 0.0)])
def test_ace_of_point_masses(i, j, ace):
    assert ace_from_qtable_strong(QTableStrong.point_mass(i, j)) == ace


def test_ace_of_uniform_is_zero():
    assert ace_from_qtable_strong(QTableStrong.uniform()) == pytest.approx(0.0, abs=1e-15)


def test_round_trip_law_is_valid():
    for _, law, gamma in random_instances(seed=1, n=200, alpha=0.3):
        validate_observed(law)
        assert -1.0 <= gamma <= 1.0


def test_observables_and_ace_are_linear():
    rng = np.random.default_rng(2)
    for _ in range(50):
        qa, qb = random_qtable_strong(rng), random_qtable_strong(rng)
        lam = rng.uniform()
        mix = QTableStrong(lam * qa.q + (1 - lam) * qb.q)
        fa, fb, fm = (STRONG_A @ q.vector for q in (qa, qb, mix))
        assert np.allclose(fm, lam * fa + (1 - lam) * fb, atol=1e-12)
        expected = lam * ace_from_qtable_strong(qa) + (1 - lam) * ace_from_qtable_strong(qb)
        assert ace_from_qtable_strong(mix) == pytest.approx(expected, abs=1e-12)


def test_qtable_validation():
    with pytest.raises(NotNormalized):
        QTableStrong(np.full((4, 4), 0.1))
    bad = np.full((4, 4), 1 / 16)
    bad[0, 0], bad[0, 1] = -0.01, 1 / 16 + 0.01
    with pytest.raises(NotAProbability):
        QTableStrong(bad)
    with pytest.raises(ValueError):
        QTableStrong(np.full((2, 8), 1 / 16))


def test_qtable_is_read_only():
    q = QTableStrong.uniform()
    with pytest.raises(ValueError):
        q.q[0, 0] = 1.0


def test_from_vector_clips_roundoff_only():
    x = np.zeros(16)
    x[1:] = 1 / 15
    x[0], x[1] = -5e-13, x[1] + 5e-13
    assert QTableStrong.from_vector(x).q.min() >= 0.0
    x[0], x[1] = -1e-6, x[1] + 1e-6
    with pytest.raises(NotAProbability):
        QTableStrong.from_vector(x)


def test_nonstrong_uniform_effects():
    eff = effects_from_qtable_nonstrong(QTableNonStrong.uniform())
    assert eff.ace_ty == pytest.approx(0.0, abs=1e-15)
    assert eff.gammas.gamma0 == pytest.approx(0.0, abs=1e-15)
    assert eff.gammas.gamma1 == pytest.approx(0.0, abs=1e-15)


def test_nonstrong_perfect_responder():
    eff = effects_from_qtable_nonstrong(QTableNonStrong.point_mass(5, 1))
    assert eff.gammas.gamma0 == 1.0
    assert eff.gammas.gamma1 == 1.0
    assert eff.ace_ty == 1.0


def _brute_force_nonstrong(q: np.ndarray):
    """Direct evaluation of the stratum definitions, cell by cell."""
    ace = g0 = g1 = 0.0
    cells = np.zeros((2, 2))
    s1_treated = 0.0
    for i in range(16):
        y = {(0, 0): (i >> 3) & 1, (0, 1): (i >> 2) & 1, (1, 0): (i >> 1) & 1, (1, 1): i & 1}
        for j in range(4):
            s = {0: (j >> 1) & 1, 1: j & 1}
            w = q[i, j]
            ace += w * (y[(1, s[1])] - y[(0, s[0])])
            g0 += w * (y[(0, 1)] - y[(0, 0)])
            g1 += w * (y[(1, 1)] - y[(1, 0)])
            cells[y[(0, s[0])], s[0]] += w
            s1_treated += w * s[1]
    return ace, g0, g1, cells, s1_treated


def test_nonstrong_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(100):
        q = random_qtable_nonstrong(rng, alpha=0.5)
        eff = effects_from_qtable_nonstrong(q)
        ace, g0, g1, cells, s1 = _brute_force_nonstrong(q.q)
        assert eff.ace_ty == pytest.approx(ace, abs=1e-12)
        assert eff.gammas.gamma0 == pytest.approx(g0, abs=1e-12)
        assert eff.gammas.gamma1 == pytest.approx(g1, abs=1e-12)
        assert eff.law.cells == pytest.approx((cells[0, 0], cells[1, 0], cells[0, 1], cells[1, 1]), abs=1e-12)
        assert eff.law.s1_treated == pytest.approx(s1, abs=1e-12)


def test_crr_of_uniform_and_undefined_ratio():
    assert crr_from_qtable_strong(QTableStrong.uniform()) == pytest.approx((1.0, 1.0))
    # all mass on Y_{S=0}=0, Y_{S=1}=0: both denominators vanish
    assert crr_from_qtable_strong(QTableStrong.point_mass(0, 0)) == (None, None)


def test_ace_ts_and_control_risk(example1_law):
    assert ace_ts_from_law(example1_law) == pytest.approx(0.93 - 0.3080)
    assert example1_law.py1_control == pytest.approx(0.9743)
    assert example1_law.py0_control == pytest.approx(0.0257)


def test_gamma_feasible_range_covers_random_tables():
    for _, law, gamma in random_instances(seed=4, n=300):
        lo, hi = gamma_feasible_range(law)
        assert lo - 1e-12 <= gamma <= hi + 1e-12


class TestGammaSpec:
    def test_point_and_interval(self):
        spec = GammaSpec.point(0.3)
        assert (spec.form, spec.lo, spec.hi) == (GammaForm.POINT, 0.3, 0.3)
        spec = GammaSpec.interval(0.1, POS_INF)
        assert spec.hi is POS_INF

    def test_sign_positive_defaults(self):
        assert GammaSpec.sign_positive().lo == 0.0
        assert GammaSpec.sign_positive(Scale.RELATIVE_RISK).lo == 1.0
        assert GammaSpec.sign_positive().hi is POS_INF

    @pytest.mark.parametrize("make", [
        lambda: GammaSpec.point(1.5),
        lambda: GammaSpec.interval(0.5, 0.2),
        lambda: GammaSpec.interval(0.1, 1.2),
        lambda: GammaSpec.point(0.0, Scale.RELATIVE_RISK),
        lambda: GammaSpec(Scale.DIFFERENCE, GammaForm.POINT, 0.2, POS_INF),
    ])
    def test_rejects_out_of_range(self, make):
        with pytest.raises(BadRange):
            make()

    def test_relative_risk_accepts_large_values(self):
        assert GammaSpec.point(3.5, Scale.RELATIVE_RISK).lo == 3.5

    @pytest.mark.parametrize("raw, form", [
        ({"form": "point", "value": 0.2}, GammaForm.POINT),
        ({"form": "interval", "lo": 0.1, "hi": "+inf"}, GammaForm.INTERVAL),
        ({"form": "sign", "scale": "crr"}, GammaForm.SIGN_POSITIVE),
    ])
    def test_from_dict(self, raw, form):
        assert GammaSpec.from_dict(raw).form is form


def test_nonstrong_gammas_range():
    NonStrongGammas(None, 0.5)
    with pytest.raises(BadRange):
        NonStrongGammas(1.5, 0.0)

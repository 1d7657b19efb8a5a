"""
law.py

Domain types for surrogate-endpoint trials and the linear algebra that maps a
latent potential-outcome table onto the observed law and onto causal effects.

Strong surrogate table (16 cells): row i = 2*S_{T=0} + S_{T=1},
column j = 2*Y_{S=0} + Y_{S=1}, flattened as 4*i + j.

Non-strong table (64 cells): row i = 8*Y00 + 4*Y01 + 2*Y10 + Y11 (Y_ts with
t first), column j = 2*S_{T=0} + S_{T=1}, flattened as 4*i + j.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from errors import NotAProbability, NotNormalized, BadRange

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9
# cells of an LP vertex may come back a hair below zero
CLIP_TOL = 1e-12


class Scale(Enum):
    DIFFERENCE = "ace"
    RELATIVE_RISK = "crr"


class GammaForm(Enum):
    POINT = "point"
    INTERVAL = "interval"
    SIGN_POSITIVE = "sign"


class Unbounded(Enum):
    POS_INF = "+inf"


POS_INF = Unbounded.POS_INF
Limit = Union[float, Unbounded]


class Verdict(Enum):
    EXCLUDED = "Excluded"
    NOT_EXCLUDABLE = "NotExcludable"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class ObservedLaw:
    """Control-arm joint law of (Y, S) plus the treated-arm S marginal.

    Cell p{y}{s} is P(Y=y, S=s | T=0): first index y, second index s.
    """
    p00: float
    p10: float
    p01: float
    p11: float
    s1_treated: float

    @property
    def cells(self) -> Tuple[float, float, float, float]:
        return (self.p00, self.p10, self.p01, self.p11)

    @property
    def py1_control(self) -> float:
        return self.p10 + self.p11

    @property
    def py0_control(self) -> float:
        return self.p00 + self.p01

    @property
    def s1_control(self) -> float:
        return self.p01 + self.p11

    @property
    def s0_treated(self) -> float:
        return 1.0 - self.s1_treated

    def rhs(self, gamma: float) -> np.ndarray:
        """Right-hand side b of the strong system, in STRONG_A row order."""
        return np.array([self.p00, self.p10, self.p01, 1.0 - self.s1_treated, gamma, 1.0])

    def to_dict(self) -> Dict[str, float]:
        return {"p00": self.p00, "p10": self.p10, "p01": self.p01,
                "p11": self.p11, "s1": self.s1_treated}

    @classmethod
    def from_dict(cls, d: dict) -> "ObservedLaw":
        missing = [k for k in ("p00", "p10", "p01", "p11", "s1") if k not in d]
        if missing:
            raise NotAProbability(f"law is missing field(s): {', '.join(missing)}")
        values = []
        for k in ("p00", "p10", "p01", "p11", "s1"):
            try:
                values.append(float(d[k]))
            except (TypeError, ValueError):
                raise NotAProbability(f"law field {k}={d[k]!r} is not a number") from None
        return cls(*values)


@dataclass(frozen=True)
class GammaSpec:
    """External knowledge of the surrogate->outcome effect.

    `lo` is the guaranteed lower end (the point value for POINT), `hi` the upper
    end, which may be POS_INF.
    """
    scale: Scale
    form: GammaForm
    lo: float
    hi: Limit

    def __post_init__(self):
        if self.scale is Scale.DIFFERENCE and not -1.0 <= self.lo <= 1.0:
            raise BadRange(f"gamma {self.lo} outside [-1, 1]")
        if self.scale is Scale.RELATIVE_RISK and not self.lo > 0.0:
            raise BadRange(f"relative-risk gamma must be positive, got {self.lo}")
        if self.hi is POS_INF:
            if self.form is GammaForm.POINT:
                raise BadRange("a point gamma cannot be unbounded")
            return
        if self.scale is Scale.DIFFERENCE and not -1.0 <= self.hi <= 1.0:
            raise BadRange(f"gamma upper end {self.hi} outside [-1, 1]")
        if self.form is GammaForm.INTERVAL and not self.lo < self.hi:
            raise BadRange(f"gamma interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value: float, scale: Scale = Scale.DIFFERENCE) -> "GammaSpec":
        return cls(scale, GammaForm.POINT, float(value), float(value))

    @classmethod
    def interval(cls, lo: float, hi: Limit, scale: Scale = Scale.DIFFERENCE) -> "GammaSpec":
        hi = hi if hi is POS_INF else float(hi)
        return cls(scale, GammaForm.INTERVAL, float(lo), hi)

    @classmethod
    def sign_positive(cls, scale: Scale = Scale.DIFFERENCE) -> "GammaSpec":
        lo = 0.0 if scale is Scale.DIFFERENCE else 1.0
        return cls(scale, GammaForm.SIGN_POSITIVE, lo, POS_INF)

    @classmethod
    def from_dict(cls, d: dict) -> "GammaSpec":
        scale = Scale(d.get("scale", "ace"))
        form = d.get("form", "point")
        if form == "point":
            return cls.point(d["value"], scale)
        if form == "interval":
            hi = POS_INF if d.get("hi") in (None, "inf", "+inf") else d["hi"]
            return cls.interval(d["lo"], hi, scale)
        if form == "sign":
            return cls.sign_positive(scale)
        raise BadRange(f"unknown gamma form {form!r}")

    def to_dict(self) -> dict:
        hi = "+inf" if self.hi is POS_INF else self.hi
        return {"scale": self.scale.value, "form": self.form.value, "lo": self.lo, "hi": hi}


@dataclass(frozen=True)
class NonStrongGammas:
    gamma0: Optional[float]
    gamma1: float

    def __post_init__(self):
        for name, g in (("gamma0", self.gamma0), ("gamma1", self.gamma1)):
            if g is not None and not -1.0 - PROB_TOL <= g <= 1.0 + PROB_TOL:
                raise BadRange(f"{name}={g} outside [-1, 1]")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_table(cells: np.ndarray, name: str):
    if np.any(cells < 0.0) or np.any(cells > 1.0 + PROB_TOL):
        raise NotAProbability(f"{name} has cells outside [0, 1]")
    total = float(cells.sum())
    if abs(total - 1.0) > PROB_TOL:
        raise NotNormalized(f"{name} sums to {total!r}, not 1")


@dataclass(frozen=True, eq=False)
class QTableStrong:
    """Distribution over the 16 strong-surrogate potential-outcome types."""
    q: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.q, dtype=float)
        if cells.shape != (4, 4):
            raise ValueError(f"strong q-table must be 4x4, got {cells.shape}")
        _check_table(cells, "strong q-table")
        object.__setattr__(self, "q", _readonly(cells))

    @property
    def vector(self) -> np.ndarray:
        return self.q.reshape(16)

    @classmethod
    def from_vector(cls, x, clip: bool = True) -> "QTableStrong":
        x = np.asarray(x, dtype=float).reshape(4, 4)
        if clip:
            x = np.where((x < 0) & (x > -CLIP_TOL), 0.0, x)
        return cls(x)

    @classmethod
    def point_mass(cls, i: int, j: int) -> "QTableStrong":
        q = np.zeros((4, 4))
        q[i, j] = 1.0
        return cls(q)

    @classmethod
    def uniform(cls) -> "QTableStrong":
        return cls(np.full((4, 4), 1.0 / 16.0))


@dataclass(frozen=True, eq=False)
class QTableNonStrong:
    """Distribution over the 64 non-strong potential-outcome types."""
    q: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.q, dtype=float)
        if cells.shape != (16, 4):
            raise ValueError(f"non-strong q-table must be 16x4, got {cells.shape}")
        _check_table(cells, "non-strong q-table")
        object.__setattr__(self, "q", _readonly(cells))

    @property
    def vector(self) -> np.ndarray:
        return self.q.reshape(64)

    @classmethod
    def from_vector(cls, x, clip: bool = True) -> "QTableNonStrong":
        x = np.asarray(x, dtype=float).reshape(16, 4)
        if clip:
            x = np.where((x < 0) & (x > -CLIP_TOL), 0.0, x)
        return cls(x)

    @classmethod
    def point_mass(cls, i: int, j: int) -> "QTableNonStrong":
        q = np.zeros((16, 4))
        q[i, j] = 1.0
        return cls(q)

    @classmethod
    def uniform(cls) -> "QTableNonStrong":
        return cls(np.full((16, 4), 1.0 / 64.0))


@dataclass(frozen=True)
class BoundsReport:
    lower: float
    upper: float
    scale: Scale = Scale.DIFFERENCE
    active_lower_term: Optional[int] = None
    active_upper_term: Optional[int] = None
    witness_lower: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    witness_upper: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    criterion: Optional[Verdict] = None
    threshold: Optional[float] = None
    lower_terms: Optional[tuple] = field(default=None, compare=False, repr=False)
    upper_terms: Optional[tuple] = field(default=None, compare=False, repr=False)

    @property
    def crossed(self) -> bool:
        return self.lower > self.upper

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def with_criterion(self, verdict: Verdict, threshold: Optional[float]) -> "BoundsReport":
        return replace(self, criterion=verdict, threshold=threshold)

    def to_dict(self) -> dict:
        return {
            "scale": self.scale.value,
            "lower": self.lower,
            "upper": self.upper,
            "active_lower_term": self.active_lower_term,
            "active_upper_term": self.active_upper_term,
            "verdict": self.criterion.value if self.criterion else None,
            "threshold": self.threshold,
        }


# Rows of the strong system: P(Y=0,S=0|T=0), P(Y=1,S=0|T=0),
# P(Y=0,S=1|T=0), P(S=0|T=1), gamma, total mass.
STRONG_A = np.array([
    [1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0, 1, 0],
    [1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0],
    [0, 1, -1, 0, 0, 1, -1, 0, 0, 1, -1, 0, 0, 1, -1, 0],
    [1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
], dtype=float)
STRONG_A.setflags(write=False)

# ACE(T->Y) = q11 + q22 - q12 - q21
STRONG_ACE = np.array([0, 0, 0, 0, 0, 1, -1, 0, 0, -1, 1, 0, 0, 0, 0, 0], dtype=float)
STRONG_ACE.setflags(write=False)

STRONG_ROW_LABELS = ("P(Y=0,S=0|T=0)", "P(Y=1,S=0|T=0)", "P(Y=0,S=1|T=0)",
                     "P(S=0|T=1)", "gamma", "1")


def _strong_types():
    for i in range(4):
        s0, s1 = i >> 1, i & 1
        for j in range(4):
            y0, y1 = j >> 1, j & 1
            yield 4 * i + j, s0, s1, y0, y1


def _strong_risk_vectors():
    """Coefficients of P(Y_{T=1}=1), P(Y_{T=0}=1), P(Y_{S=1}=1), P(Y_{S=0}=1)."""
    treated, control, ys1, ys0 = (np.zeros(16) for _ in range(4))
    for k, s0, s1, y0, y1 in _strong_types():
        treated[k] = y1 if s1 else y0
        control[k] = y1 if s0 else y0
        ys1[k] = y1
        ys0[k] = y0
    return treated, control, ys1, ys0


STRONG_Y_TREATED, STRONG_Y_CONTROL, STRONG_Y_S1, STRONG_Y_S0 = _strong_risk_vectors()


def _nonstrong_types():
    for i in range(16):
        y00, y01, y10, y11 = (i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1
        for j in range(4):
            s0, s1 = j >> 1, j & 1
            yield 4 * i + j, y00, y01, y10, y11, s0, s1


def _nonstrong_matrices():
    """Rows: four control cells, P(S=0|T=1), gamma0, gamma1, total; plus the ACE row."""
    rows = np.zeros((8, 64))
    ace = np.zeros(64)
    for k, y00, y01, y10, y11, s0, s1 in _nonstrong_types():
        y_control = y01 if s0 else y00
        y_treated = y11 if s1 else y10
        rows[y_control + 2 * s0, k] = 1.0
        rows[4, k] = 1.0 - s1
        rows[5, k] = y01 - y00
        rows[6, k] = y11 - y10
        rows[7, k] = 1.0
        ace[k] = y_treated - y_control
    return rows, ace


NONSTRONG_ROWS, NONSTRONG_ACE = _nonstrong_matrices()
NONSTRONG_ROWS.setflags(write=False)
NONSTRONG_ACE.setflags(write=False)


def is_valid_observed(law: ObservedLaw) -> bool:
    try:
        validate_observed(law)
    except (NotAProbability, NotNormalized) as e:
        logger.error("Invalid observed law %s: %s", law, e)
        return False
    return True


def validate_observed(law: ObservedLaw) -> ObservedLaw:
    """
    Checks that every field of the law is a probability and that the control
    cells sum to one.
    Args:
        law (ObservedLaw): The law to validate.
    Returns:
        ObservedLaw: The same law, unchanged.
    Raises:
        NotAProbability: A field lies outside [0, 1].
        NotNormalized: The control cells do not sum to 1 within 1e-9.
    """
    for name, value in law.to_dict().items():
        if not (0.0 <= value <= 1.0):
            raise NotAProbability(f"{name}={value!r} is not a probability")
    total = law.p00 + law.p10 + law.p01 + law.p11
    if abs(total - 1.0) > PROB_TOL:
        raise NotNormalized(f"control cells sum to {total!r}, not 1")
    return law


def renormalize(law: ObservedLaw) -> ObservedLaw:
    """Rescales the control cells to sum to one. Only used on explicit request."""
    total = law.p00 + law.p10 + law.p01 + law.p11
    if total <= 0.0:
        raise NotNormalized("control cells sum to zero, cannot renormalize")
    logger.info("Renormalizing control cells (sum was %r)", total)
    return ObservedLaw(law.p00 / total, law.p10 / total, law.p01 / total,
                       law.p11 / total, law.s1_treated)


def observables_from_qtable_strong(q: QTableStrong) -> Tuple[ObservedLaw, float]:
    """Maps a strong q-table through STRONG_A: returns (law, gamma)."""
    v = STRONG_A @ q.vector
    p00, p10, p01, s0_treated, gamma = (float(x) for x in v[:5])
    p11 = 1.0 - p00 - p10 - p01
    if -CLIP_TOL < p11 < 0.0:
        p11 = 0.0
    return ObservedLaw(p00, p10, p01, p11, 1.0 - s0_treated), float(gamma)


def ace_from_qtable_strong(q: QTableStrong) -> float:
    return float(STRONG_ACE @ q.vector)


def crr_from_qtable_strong(q: QTableStrong) -> Tuple[Optional[float], Optional[float]]:
    """Returns (CRR(T->Y), CRR(S->Y)); an entry is None where its denominator is 0."""
    x = q.vector
    num_ty, den_ty = float(STRONG_Y_TREATED @ x), float(STRONG_Y_CONTROL @ x)
    num_sy, den_sy = float(STRONG_Y_S1 @ x), float(STRONG_Y_S0 @ x)
    crr_ty = num_ty / den_ty if den_ty > 0 else None
    crr_sy = num_sy / den_sy if den_sy > 0 else None
    return crr_ty, crr_sy


@dataclass(frozen=True)
class NonStrongEffects:
    ace_ty: float
    gammas: NonStrongGammas
    law: ObservedLaw


def effects_from_qtable_nonstrong(q: QTableNonStrong) -> NonStrongEffects:
    """Computes ACE(T->Y), gamma0, gamma1 and the induced observed law."""
    v = NONSTRONG_ROWS @ q.vector
    p00, p10, p01, p11, s0_treated, g0, g1, _ = (float(x) for x in v)
    law = ObservedLaw(p00, p10, p01, p11, 1.0 - s0_treated)
    return NonStrongEffects(float(NONSTRONG_ACE @ q.vector), NonStrongGammas(g0, g1), law)


def ace_ts_from_law(law: ObservedLaw) -> float:
    return law.s1_treated - law.s1_control


def gamma_feasible_range(law: ObservedLaw) -> Tuple[float, float]:
    """
    Range of gamma compatible with the law under the strong model. Y_{S=1} is
    unobserved on the S_{T=0}=0 stratum and Y_{S=0} on the S_{T=0}=1 stratum,
    and S_{T=1} can always be drawn independently of both.
    """
    return -(law.p10 + law.p01), law.p00 + law.p11


def random_qtable_strong(rng: np.random.Generator, alpha: float = 1.0) -> QTableStrong:
    x = rng.dirichlet(np.full(16, alpha))
    return QTableStrong(x.reshape(4, 4) / x.sum())


def random_qtable_nonstrong(rng: np.random.Generator, alpha: float = 1.0) -> QTableNonStrong:
    x = rng.dirichlet(np.full(64, alpha))
    return QTableNonStrong(x.reshape(16, 4) / x.sum())

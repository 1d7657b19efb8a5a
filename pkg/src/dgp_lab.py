"""
dgp_lab.py

Ground-truth oracle over fully specified data-generating processes with a
binary confounder U: true effects, paradox classification, the built-in worked
examples, paradox-witness search and the (delta0, delta1) partition grid.

Conditional tables are indexed [u][t] for P(S=1|U=u,T=t), [u][s] for
P(Y=1|U=u,S=s) in the strong model, and [u][s][t] for P(Y=1|U=u,S=s,T=t)
in the non-strong model.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from closed_bounds import strong_threshold
from errors import (DegenerateDenominator, InfeasibleInputs, NumericalBreakdown, PremiseViolated,
                    ZeroControlRisk)
from law import (NonStrongGammas, ObservedLaw, QTableStrong, Scale, Verdict,
                 ace_ts_from_law)
from lp_engine import (Direction, build_crr_fractional, build_reduced_nonstrong_system,
                       build_strong_system, simplex_solve, solve_fractional)

logger = logging.getLogger(__name__)

# a minimum this close to zero is the measure-zero boundary case, not a witness
WITNESS_TOL = 1e-12
LABEL_TOL = 1e-9


@dataclass(frozen=True)
class DgpBinaryU:
    p_u: float
    s_given: Tuple[Tuple[float, float], Tuple[float, float]]
    y_given: tuple
    p_t: float = 0.5

    def __post_init__(self):
        s = np.asarray(self.s_given, dtype=float)
        y = np.asarray(self.y_given, dtype=float)
        if s.shape != (2, 2) or y.shape not in ((2, 2), (2, 2, 2)):
            raise ValueError(f"bad DGP table shapes: s {s.shape}, y {y.shape}")
        values = np.concatenate([[self.p_u, self.p_t], s.ravel(), y.ravel()])
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("DGP entries must lie in [0, 1]")

    @property
    def strong(self) -> bool:
        return np.asarray(self.y_given).ndim == 2

    @property
    def weights(self) -> np.ndarray:
        return np.array([1.0 - self.p_u, self.p_u])

    def to_dict(self) -> dict:
        return {"p_u": self.p_u, "p_t": self.p_t,
                "s_given": np.asarray(self.s_given).tolist(),
                "y_given": np.asarray(self.y_given).tolist()}


@dataclass(frozen=True, eq=False)
class DgpTyped:
    """Strong DGP with a categorical confounder: weights[u], s_given[u][t], y_given[u][s]."""
    weights: np.ndarray
    s_given: np.ndarray
    y_given: np.ndarray


@dataclass(frozen=True)
class TrueEffects:
    ace_ts: float
    gamma: float
    ace_ty: float
    crr_ts: Optional[float]
    crr_sy: Optional[float]
    crr_ty: Optional[float]
    observed: ObservedLaw
    gammas: Optional[NonStrongGammas] = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("observed", "gammas")}
        d["observed"] = self.observed.to_dict()
        if self.gammas is not None:
            d["gamma0"], d["gamma1"] = self.gammas.gamma0, self.gammas.gamma1
        return d


class Paradox(Enum):
    A = "ParadoxA"
    B = "ParadoxB"
    C = "ParadoxC"
    D = "ParadoxD"
    NONE = "None"


class Region(Enum):
    OUT_OF_DOMAIN = "OutOfDomain"
    OUTSIDE_TRIANGLE = "OutsideTriangle"
    PARADOX = "ParadoxRegion"
    EXCLUDED = "ExcludedByCriterion"
    NOT_EXCLUDABLE = "NoParadoxNotExcludable"


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den > 0 else None


def _strong_effects(w: np.ndarray, s: np.ndarray, y: np.ndarray) -> TrueEffects:
    risk_t = [float(np.sum(w * (s[:, t] * y[:, 1] + (1 - s[:, t]) * y[:, 0]))) for t in (0, 1)]
    ps1 = [float(np.sum(w * s[:, t])) for t in (0, 1)]
    ys = [float(np.sum(w * y[:, k])) for k in (0, 1)]
    cells = {}
    for yy in (0, 1):
        for ss in (0, 1):
            p_s = s[:, 0] if ss else 1 - s[:, 0]
            p_y = y[:, ss] if yy else 1 - y[:, ss]
            cells[(yy, ss)] = float(np.sum(w * p_s * p_y))
    law = ObservedLaw(cells[(0, 0)], cells[(1, 0)], cells[(0, 1)], cells[(1, 1)], ps1[1])
    return TrueEffects(
        ace_ts=ps1[1] - ps1[0],
        gamma=ys[1] - ys[0],
        ace_ty=float(np.sum(w * (s[:, 1] - s[:, 0]) * (y[:, 1] - y[:, 0]))),
        crr_ts=_ratio(ps1[1], ps1[0]),
        crr_sy=_ratio(ys[1], ys[0]),
        crr_ty=_ratio(risk_t[1], risk_t[0]),
        observed=law,
    )


def _nonstrong_effects(w: np.ndarray, s: np.ndarray, y: np.ndarray) -> TrueEffects:
    # y[u, s, t]
    risk_t = [float(np.sum(w * (s[:, t] * y[:, 1, t] + (1 - s[:, t]) * y[:, 0, t]))) for t in (0, 1)]
    ps1 = [float(np.sum(w * s[:, t])) for t in (0, 1)]
    gam = [float(np.sum(w * (y[:, 1, t] - y[:, 0, t]))) for t in (0, 1)]
    cells = {}
    for yy in (0, 1):
        for ss in (0, 1):
            p_s = s[:, 0] if ss else 1 - s[:, 0]
            p_y = y[:, ss, 0] if yy else 1 - y[:, ss, 0]
            cells[(yy, ss)] = float(np.sum(w * p_s * p_y))
    law = ObservedLaw(cells[(0, 0)], cells[(1, 0)], cells[(0, 1)], cells[(1, 1)], ps1[1])
    ys1 = [float(np.sum(w * y[:, k, 1])) for k in (0, 1)]
    return TrueEffects(
        ace_ts=ps1[1] - ps1[0],
        gamma=gam[1],
        ace_ty=risk_t[1] - risk_t[0],
        crr_ts=_ratio(ps1[1], ps1[0]),
        crr_sy=_ratio(ys1[1], ys1[0]),
        crr_ty=_ratio(risk_t[1], risk_t[0]),
        observed=law,
        gammas=NonStrongGammas(gam[0], gam[1]),
    )


def evaluate_dgp(dgp: DgpBinaryU) -> TrueEffects:
    """
    True effects and the induced observed law. Randomization of T makes the
    arms' marginals the potential-outcome marginals, and gamma is the
    U-averaged effect of setting S.
    """
    s = np.asarray(dgp.s_given, dtype=float)
    y = np.asarray(dgp.y_given, dtype=float)
    if dgp.strong:
        return _strong_effects(dgp.weights, s, y)
    return _nonstrong_effects(dgp.weights, s, y)


def evaluate_typed(dgp: DgpTyped) -> TrueEffects:
    return _strong_effects(np.asarray(dgp.weights), np.asarray(dgp.s_given), np.asarray(dgp.y_given))


def classify_paradox(effects: TrueEffects, scale: Scale = Scale.DIFFERENCE) -> Paradox:
    if scale is Scale.DIFFERENCE:
        ts, sy, ty, pivot = effects.ace_ts, effects.gamma, effects.ace_ty, 0.0
    else:
        ts, sy, ty, pivot = effects.crr_ts, effects.crr_sy, effects.crr_ty, 1.0
        if ts is None or sy is None or ty is None:
            return Paradox.NONE
    signs = tuple(np.sign(v - pivot) for v in (ts, sy, ty))
    return {
        (1, 1, -1): Paradox.A,
        (1, -1, 1): Paradox.B,
        (-1, 1, 1): Paradox.C,
        (-1, -1, -1): Paradox.D,
    }.get(signs, Paradox.NONE)


def paradox_witness_search(law: ObservedLaw, gamma: float,
                           scale: Scale = Scale.DIFFERENCE) -> Optional[QTableStrong]:
    """
    Looks for a latent q-table that reproduces (law, gamma) exactly and shows
    paradox (a), by minimising ACE(T->Y) (or CRR(T->Y)) over the constraints.
    Args:
        law (ObservedLaw): Observed law with ACE(T->S) > 0.
        gamma (float): ACE(S->Y) > 0, or CRR(S->Y) > 1 on the relative-risk scale.
        scale (Scale): Effect scale.
    Returns:
        QTableStrong | None: The attaining table when the minimum is below 0 (or 1),
        None when the paradox is excluded.
    Raises:
        PremiseViolated: ACE(T->S) <= 0 or gamma not positive.
        InfeasibleInputs: No q-table reproduces (law, gamma).
        ZeroControlRisk: P(Y=1|T=0) = 0 on the relative-risk scale.
    """
    if ace_ts_from_law(law) <= 0.0:
        raise PremiseViolated(f"ACE(T->S) = {ace_ts_from_law(law):.6g} is not positive")
    if scale is Scale.DIFFERENCE:
        if gamma <= 0.0:
            raise PremiseViolated(f"gamma = {gamma} is not positive")
        sol = simplex_solve(build_strong_system(law, gamma).with_direction(Direction.MIN))
        if not sol.optimal:
            raise InfeasibleInputs(f"gamma={gamma} is inconsistent with the law")
        value, point = float(sol.value), sol.point
        pivot = 0.0
    else:
        if gamma <= 1.0:
            raise PremiseViolated(f"CRR(S->Y) = {gamma} does not exceed 1")
        if law.py1_control <= 0.0:
            raise ZeroControlRisk("P(Y=1|T=0) = 0, the causal relative risk is undefined")
        try:
            value, point = solve_fractional(build_crr_fractional(law, gamma, Direction.MIN))
        except DegenerateDenominator as e:
            raise ZeroControlRisk(str(e)) from e
        pivot = 1.0
    logger.info("Witness search: minimum %s on the %s scale", value, scale.value)
    if value < pivot - WITNESS_TOL:
        return QTableStrong.from_vector(point)
    return None


class ReducedWitness(NamedTuple):
    cells: np.ndarray
    ace_ty: float


def nonstrong_witness_search(py1_control: float, s1_treated: float,
                             gamma1: float) -> Optional[ReducedWitness]:
    """Paradox witness on the (Y10, Y11, S1) joint when gamma1 > 0 cannot exclude a negative ACE."""
    if gamma1 <= 0.0:
        raise PremiseViolated(f"gamma1 = {gamma1} is not positive")
    system = build_reduced_nonstrong_system(py1_control, s1_treated, gamma1)
    sol = simplex_solve(system.with_direction(Direction.MIN))
    if not sol.optimal:
        raise InfeasibleInputs(f"gamma1={gamma1} is inconsistent with s1={s1_treated}")
    if sol.value < -WITNESS_TOL:
        return ReducedWitness(np.asarray(sol.point, dtype=float), float(sol.value))
    return None


def lift_qtable_to_dgp(q: QTableStrong) -> DgpTyped:
    """Canonical DGP whose confounder is the 16-valued potential-outcome type itself."""
    s = np.zeros((16, 2))
    y = np.zeros((16, 2))
    for k in range(16):
        i, j = divmod(k, 4)
        s[k] = (i >> 1, i & 1)
        y[k] = (j >> 1, j & 1)
    return DgpTyped(q.vector.copy(), s, y)


def qtable_from_dgp(dgp: DgpBinaryU) -> QTableStrong:
    """Type distribution when S_{T=0}, S_{T=1}, Y_{S=0}, Y_{S=1} are drawn independently given U."""
    if not dgp.strong:
        raise ValueError("qtable_from_dgp needs a strong DGP")
    s = np.asarray(dgp.s_given, dtype=float)
    y = np.asarray(dgp.y_given, dtype=float)
    q = np.zeros((4, 4))
    for u, w in enumerate(dgp.weights):
        ps = [(1 - s[u, t], s[u, t]) for t in (0, 1)]
        py = [(1 - y[u, k], y[u, k]) for k in (0, 1)]
        q += w * np.outer(np.outer(ps[0], ps[1]).ravel(), np.outer(py[0], py[1]).ravel())
    return QTableStrong(q / q.sum())


def conditional_outcome_means(dgp: DgpBinaryU) -> np.ndarray:
    """E(Y | S=s, T=t) indexed [s][t]; NaN where P(S=s|T=t) = 0."""
    w = dgp.weights
    s = np.asarray(dgp.s_given, dtype=float)
    y = np.asarray(dgp.y_given, dtype=float)
    out = np.full((2, 2), np.nan)
    for ss in (0, 1):
        for t in (0, 1):
            p_s = s[:, t] if ss else 1 - s[:, t]
            ey = y[:, ss] if dgp.strong else y[:, ss, t]
            den = float(np.sum(w * p_s))
            if den > 0:
                out[ss, t] = float(np.sum(w * p_s * ey)) / den
    return out


class LegacyReport(NamedTuple):
    monotone_given_u: bool
    monotone_observed: bool


def legacy_criteria(dgp: DgpBinaryU) -> LegacyReport:
    """
    Two earlier sufficient conditions against the paradox: (i) E(Y|S,U) and
    P(S=1|T,U) nondecreasing for every u; (ii) E(Y|S,T) nondecreasing in S with
    E(Y|S=s,T=1) >= E(Y|S=s,T=0) for both s.
    """
    s = np.asarray(dgp.s_given, dtype=float)
    y = np.asarray(dgp.y_given, dtype=float)
    y_s = y if dgp.strong else y[:, :, 0]
    given_u = bool(np.all(y_s[:, 1] >= y_s[:, 0]) and np.all(s[:, 1] >= s[:, 0]))
    m = conditional_outcome_means(dgp)
    observed = bool(not np.any(np.isnan(m)) and np.all(m[1] >= m[0]) and np.all(m[:, 1] >= m[:, 0]))
    return LegacyReport(given_u, observed)


def random_dgp(rng: np.random.Generator, strong: bool = True) -> DgpBinaryU:
    p_u = float(rng.uniform())
    s = rng.uniform(size=(2, 2))
    y = rng.uniform(size=(2, 2) if strong else (2, 2, 2))
    y_table = tuple(map(tuple, y)) if strong else tuple(tuple(map(tuple, block)) for block in y)
    return DgpBinaryU(p_u, tuple(map(tuple, s)), y_table)


# ---------------------------------------------------------------------------
# built-in examples

@dataclass(frozen=True)
class ExampleEntry:
    name: str
    dgp: DgpBinaryU
    expected: Dict[str, float]
    verdict: Optional[Verdict] = None
    disputed: bool = False
    note: str = ""


def builtin_examples() -> Dict[str, ExampleEntry]:
    entries = [
        ExampleEntry("Example1",
                     DgpBinaryU(0.7, ((0.98, 0.79), (0.02, 0.99)), ((0.0, 0.98), (0.98, 0.99))),
                     {"ace_ts": 0.6220, "gamma": 0.3010, "ace_ty": -0.0491, "threshold": 0.3720},
                     Verdict.NOT_EXCLUDABLE),
        ExampleEntry("Example2",
                     DgpBinaryU(0.3, ((0.28, 0.77), (0.32, 0.65)), ((0.13, 0.87), (0.33, 0.52))),
                     {"ace_ts": 0.4420, "gamma": 0.5750, "ace_ty": 0.2726, "threshold": 0.4864},
                     Verdict.EXCLUDED),
        ExampleEntry("Example3-Table5",
                     DgpBinaryU(0.5, ((0.7, 0.5), (0.5, 0.9)), ((0.2, 0.8), (0.28, 0.08))),
                     {"ace_ts": 0.10, "gamma": 0.20, "ace_ty": -0.10, "threshold": 0.60},
                     Verdict.NOT_EXCLUDABLE),
        ExampleEntry("TableS1",
                     DgpBinaryU(0.5, ((0.4, 0.3), (0.1, 0.9)), ((0.1, 0.9), (0.1, 0.9))),
                     {"gamma": 0.8, "threshold": 0.625},
                     Verdict.EXCLUDED),
        ExampleEntry("TableS2",
                     DgpBinaryU(0.3, ((0.5, 0.9), (0.6, 0.8)), ((0.1, 0.8), (0.2, 0.9))),
                     {"gamma": 0.7, "threshold": 0.572},
                     Verdict.EXCLUDED),
        ExampleEntry("Example3-Table4",
                     DgpBinaryU(0.5, ((0.7, 0.5), (0.5, 0.9)), ((0.6, 0.4), (0.4, 0.64))),
                     {"gamma": 0.20, "ace_ty": 0.14},
                     disputed=True,
                     note="printed probabilities give gamma=0.02 and ACE(T->Y)=0.068"),
    ]
    return {e.name: e for e in entries}


class ExampleCheck(NamedTuple):
    example: str
    quantity: str
    expected: object
    actual: object
    status: str


def check_example(entry: ExampleEntry, tol: float = 1e-4) -> List[ExampleCheck]:
    """Evaluates a registry entry; disputed expectations are reported, never failed."""
    effects = evaluate_dgp(entry.dgp)
    actual = {"ace_ts": effects.ace_ts, "gamma": effects.gamma, "ace_ty": effects.ace_ty,
              "threshold": strong_threshold(effects.observed)}
    checks = []
    for quantity, expected in entry.expected.items():
        value = actual[quantity]
        if entry.disputed:
            status = "disputed"
        else:
            status = "pass" if abs(value - expected) <= tol else "fail"
        checks.append(ExampleCheck(entry.name, quantity, expected, value, status))
    if entry.verdict is not None:
        threshold = actual["threshold"]
        got = Verdict.EXCLUDED if effects.gamma > threshold else Verdict.NOT_EXCLUDABLE
        checks.append(ExampleCheck(entry.name, "verdict", entry.verdict.value, got.value,
                                   "pass" if got is entry.verdict else "fail"))
    return checks


# ---------------------------------------------------------------------------
# partition grid

@dataclass(frozen=True)
class PartitionConfig:
    p_u: float = 0.5
    s_effect_u0: float = 0.7
    s_effect_u1: float = 0.2
    baseline_s: Tuple[float, float] = (0.15, 0.15)
    baseline_y: Tuple[float, float] = (0.10, 0.10)
    delta_lo: float = -1.0
    delta_hi: float = 1.0
    resolution: int = 201

    def __post_init__(self):
        if self.resolution < 2 or not self.delta_lo < self.delta_hi:
            raise ValueError("partition grid needs resolution >= 2 and delta_lo < delta_hi")

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for k in ("baseline_s", "baseline_y"):
            if k in known:
                known[k] = tuple(known[k])
        return cls(**known)

    def dgp_at(self, delta0: float, delta1: float) -> DgpBinaryU:
        bs, by = self.baseline_s, self.baseline_y
        s = ((bs[0], bs[0] + self.s_effect_u0), (bs[1], bs[1] + self.s_effect_u1))
        y = ((by[0], by[0] + delta0), (by[1], by[1] + delta1))
        return DgpBinaryU(self.p_u, s, y)


@dataclass(frozen=True, eq=False)
class PartitionResult:
    frame: pd.DataFrame
    metadata: dict


def _grid_effects(cfg: PartitionConfig, d0: np.ndarray, d1: np.ndarray) -> dict:
    """Vectorised strong-DGP effects over arrays of (delta0, delta1)."""
    w = (1.0 - cfg.p_u, cfg.p_u)
    bs, by = cfg.baseline_s, cfg.baseline_y
    s0 = (bs[0], bs[1])
    s1 = (bs[0] + cfg.s_effect_u0, bs[1] + cfg.s_effect_u1)
    y0 = (np.full_like(d0, by[0]), np.full_like(d1, by[1]))
    y1 = (by[0] + d0, by[1] + d1)
    ace_ts = sum(w[u] * (s1[u] - s0[u]) for u in (0, 1))
    gamma = w[0] * d0 + w[1] * d1
    ace_ty = w[0] * (s1[0] - s0[0]) * d0 + w[1] * (s1[1] - s0[1]) * d1
    p00 = sum(w[u] * (1 - s0[u]) * (1 - y0[u]) for u in (0, 1))
    p11 = sum(w[u] * s0[u] * y1[u] for u in (0, 1))
    s0_treated = 1.0 - sum(w[u] * s1[u] for u in (0, 1))
    threshold = np.minimum(2.0 * p11 + p00, s0_treated + p11)
    in_domain = np.ones_like(d0, dtype=bool)
    for arr in (y1[0], y1[1]):
        in_domain &= (arr >= 0.0) & (arr <= 1.0)
    for v in (*s0, *s1, *by, cfg.p_u):
        in_domain &= 0.0 <= v <= 1.0
    return {"ace_ts": np.full_like(d0, ace_ts), "gamma": gamma, "ace_ty": ace_ty,
            "threshold": threshold, "in_domain": in_domain}


def region_labels(in_domain, ace_ts, gamma, ace_ty, threshold) -> np.ndarray:
    """
    Region label per grid point from mutually exclusive masks.
    Raises:
        NumericalBreakdown: A point is both above the exclusion threshold and
        shows a negative ACE(T->Y).
    """
    in_domain = np.asarray(in_domain, dtype=bool)
    ace_ts, gamma, ace_ty, threshold = (np.asarray(a, dtype=float) for a in (ace_ts, gamma, ace_ty, threshold))
    outside = in_domain & ((ace_ts <= 0.0) | (gamma <= 0.0))
    inside = in_domain & ~outside
    paradox = inside & (ace_ty < 0.0)
    excluded = inside & (gamma > threshold) & ~paradox
    # points on the contour may round either way
    both = paradox & (gamma > threshold + LABEL_TOL)
    if both.any():
        logger.error("%d grid points are excluded by the criterion yet show the paradox", int(both.sum()))
        raise NumericalBreakdown(f"{int(both.sum())} grid points are both ExcludedByCriterion and ParadoxRegion")
    labels = np.full(in_domain.shape, Region.NOT_EXCLUDABLE.value, dtype=object)
    for mask, region in ((~in_domain, Region.OUT_OF_DOMAIN), (outside, Region.OUTSIDE_TRIANGLE),
                         (paradox, Region.PARADOX), (excluded, Region.EXCLUDED)):
        labels[mask] = region.value
    return labels


def partition_grid(config: PartitionConfig = PartitionConfig()) -> PartitionResult:
    """
    Labels every (delta0, delta1) grid point with region_labels, so each point
    carries exactly one region and an excluded point showing the paradox is an error.
    """
    axis = np.linspace(config.delta_lo, config.delta_hi, config.resolution)
    d0, d1 = (g.ravel() for g in np.meshgrid(axis, axis, indexing="ij"))
    e = _grid_effects(config, d0, d1)
    labels = region_labels(e["in_domain"], e["ace_ts"], e["gamma"], e["ace_ty"], e["threshold"])
    threshold = np.where(e["in_domain"], e["threshold"], np.nan)
    frame = pd.DataFrame({"delta0": d0, "delta1": d1, "gamma": e["gamma"], "ace_ty": e["ace_ty"],
                          "region_label": labels, "threshold": threshold})

    valid = frame[e["in_domain"]]
    centroid = (float(valid["delta0"].mean()), float(valid["delta1"].mean())) if len(valid) else (0.0, 0.0)
    contour = strong_threshold(evaluate_dgp(config.dgp_at(*centroid)).observed)
    counts = {r.value: int((labels == r.value).sum()) for r in Region}
    metadata = {"config": asdict(config), "centroid": list(centroid),
                "contour_level": contour, "counts": counts}
    logger.info("Partition grid %dx%d: %s, contour level %.4f",
                config.resolution, config.resolution, counts, contour)
    return PartitionResult(frame, metadata)


def write_partition_csv(result: PartitionResult, path) -> Path:
    """Writes the grid CSV and a sidecar <name>.meta.json; returns the metadata path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    result.frame.to_csv(path, index=False)
    meta_path = path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(result.metadata, indent=2))
    logger.info("Wrote partition grid to %s", path)
    return meta_path

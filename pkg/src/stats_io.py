"""
stats_io.py

Trial-data ingestion, empirical laws and bootstrap uncertainty regions for the
bounds. Control-arm CSVs carry a header "s,y" and treated-arm CSVs a header "s";
every value is exactly "0" or "1".

Set SURRBOUND_WORKERS to run bootstrap replicates on several joblib workers.
"""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from closed_bounds import bounds_for_spec, nonstrong_bounds_for_spec
from errors import (AllReplicatesInfeasible, BadRange, DegenerateArm, EmptyFile,
                    InfeasibleInputs, MalformedRow, UsageError, ZeroControlRisk)
from law import (BoundsReport, GammaForm, GammaSpec, ObservedLaw, Scale,
                 gamma_feasible_range)
from lp_engine import crr_bounds

logger = logging.getLogger(__name__)

WORKERS = int(os.getenv("SURRBOUND_WORKERS", "1"))
SKIP_WARN_FRACTION = 0.5
# slack when checking a resampled law against a point gamma
FEAS_SLACK = 1e-12


@dataclass(frozen=True)
class ControlRecord:
    s: int
    y: int


@dataclass(frozen=True)
class TreatedRecord:
    s: int


class Model(Enum):
    STRONG = "strong"
    NONSTRONG = "nonstrong"


class GammaMode(Enum):
    FIXED = "fixed"
    RESAMPLED = "resampled"


@dataclass(frozen=True, eq=False)
class TrialCounts:
    """control[y][s] and treated[s] counts."""
    control: np.ndarray
    treated: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.control, dtype=np.int64).reshape(2, 2)
        t = np.asarray(self.treated, dtype=np.int64).reshape(2)
        object.__setattr__(self, "control", c)
        object.__setattr__(self, "treated", t)

    @property
    def n_control(self) -> int:
        return int(self.control.sum())

    @property
    def n_treated(self) -> int:
        return int(self.treated.sum())

    def law(self) -> ObservedLaw:
        if self.n_control == 0 or self.n_treated == 0:
            raise DegenerateArm(f"empty arm: {self.n_control} control rows, {self.n_treated} treated rows")
        c, n = self.control, self.n_control
        return ObservedLaw(c[0, 0] / n, c[1, 0] / n, c[0, 1] / n, c[1, 1] / n,
                           self.treated[1] / self.n_treated)


@dataclass(frozen=True, eq=False)
class ExternalStudy:
    """Counts from an external study randomising S: counts[s][y]."""
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64).reshape(2, 2))
        if (self.counts < 0).any():
            raise ValueError("external study counts must be non-negative")

    def gamma_hat(self, scale: Scale = Scale.DIFFERENCE, counts=None) -> Optional[float]:
        """Arm means difference (or ratio); None when an arm is empty or the ratio is undefined."""
        c = self.counts if counts is None else counts
        n0, n1 = c[0].sum(), c[1].sum()
        if n0 == 0 or n1 == 0:
            return None
        y0, y1 = c[0, 1] / n0, c[1, 1] / n1
        if scale is Scale.DIFFERENCE:
            return float(y1 - y0)
        return float(y1 / y0) if y0 > 0 and y1 > 0 else None


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    alpha: float = 0.05
    seed: int = 0
    gamma_mode: GammaMode = GammaMode.FIXED
    external: Optional[ExternalStudy] = field(default=None, compare=False)

    def __post_init__(self):
        if self.replicates < 1:
            raise UsageError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.alpha < 1.0:
            raise UsageError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.seed < 0:
            raise UsageError(f"seed must be unsigned, got {self.seed}")
        if self.gamma_mode is GammaMode.RESAMPLED and self.external is None:
            raise UsageError("resampled gamma needs external-study counts")


@dataclass(frozen=True, eq=False)
class UncertaintyRegion:
    lo: float
    hi: float
    sd_lower: float
    sd_upper: float
    replicates: int
    skipped: int
    point_lower: Optional[float] = None
    point_upper: Optional[float] = None
    lowers: np.ndarray = field(default=None, repr=False)
    uppers: np.ndarray = field(default=None, repr=False)

    @property
    def violations(self) -> List[str]:
        out = []
        if self.point_lower is not None and self.lo > self.point_lower:
            out.append("lower")
        if self.point_upper is not None and self.hi < self.point_upper:
            out.append("upper")
        return out

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "sd_lower": self.sd_lower, "sd_upper": self.sd_upper,
                "replicates": self.replicates, "skipped_replicates": self.skipped,
                "point_lower": self.point_lower, "point_upper": self.point_upper,
                "violations": self.violations}


# ---------------------------------------------------------------------------
# ingestion

def _read_rows(path: Union[str, Path], columns: Sequence[str]) -> List[Tuple[int, ...]]:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{path}: no such file")
    rows = []
    with path.open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: file is empty")
        if sorted(h.strip() for h in header) != sorted(columns):
            raise MalformedRow(str(path), 1, ",".join(header))
        order = [[h.strip() for h in header].index(c) for c in columns]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns) or any(v not in ("0", "1") for v in row):
                raise MalformedRow(str(path), line_no, ",".join(row))
            rows.append(tuple(int(row[k]) for k in order))
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    return rows


def read_control_csv(path) -> List[ControlRecord]:
    return [ControlRecord(s, y) for s, y in _read_rows(path, ("s", "y"))]


def read_treated_csv(path) -> List[TreatedRecord]:
    return [TreatedRecord(s) for (s,) in _read_rows(path, ("s",))]


def counts_from_records(control: Sequence[ControlRecord], treated: Sequence[TreatedRecord]) -> TrialCounts:
    c = np.zeros((2, 2), dtype=np.int64)
    for r in control:
        c[r.y, r.s] += 1
    t = np.zeros(2, dtype=np.int64)
    for r in treated:
        t[r.s] += 1
    return TrialCounts(c, t)


def ingest(control_csv, treated_csv) -> Tuple[ObservedLaw, TrialCounts]:
    """
    Reads both arms and returns the empirical law with the counts behind it.
    Args:
        control_csv (str | Path): CSV with header "s,y".
        treated_csv (str | Path): CSV with header "s".
    Returns:
        tuple[ObservedLaw, TrialCounts]: Empirical frequencies and counts.
    Raises:
        MalformedRow: A value other than "0"/"1", or a missing header, with its line number.
        EmptyFile: No data rows.
    """
    counts = counts_from_records(read_control_csv(control_csv), read_treated_csv(treated_csv))
    law = counts.law()
    logger.info("Ingested %d control and %d treated rows: %s", counts.n_control, counts.n_treated, law.to_dict())
    return law, counts


def sample_trial(law: ObservedLaw, n_control: int, n_treated: int,
                 rng: np.random.Generator) -> Tuple[List[ControlRecord], List[TreatedRecord]]:
    """Draws synthetic trial records from a law; control cell k has y = k & 1, s = k >> 1."""
    cells = np.clip(np.array(law.cells, dtype=float), 0.0, None)
    k = rng.choice(4, size=n_control, p=cells / cells.sum())
    control = [ControlRecord(int(v >> 1), int(v & 1)) for v in k]
    s = rng.random(n_treated) < law.s1_treated
    treated = [TreatedRecord(int(v)) for v in s]
    return control, treated


def write_records_csv(records: Sequence[Union[ControlRecord, TreatedRecord]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    control = bool(records) and isinstance(records[0], ControlRecord)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["s", "y"] if control else ["s"])
        for r in records:
            writer.writerow([r.s, r.y] if control else [r.s])
    return path


# ---------------------------------------------------------------------------
# bootstrap

def compute_bounds(law: ObservedLaw, gamma_spec: GammaSpec, model: Model = Model.STRONG) -> BoundsReport:
    """Bounds for one law under the chosen model and gamma knowledge."""
    if model is Model.NONSTRONG:
        return nonstrong_bounds_for_spec(law.py1_control, law.s1_treated, gamma_spec)
    if gamma_spec.scale is Scale.RELATIVE_RISK:
        if gamma_spec.form is not GammaForm.POINT:
            raise UsageError("relative-risk bounds need a point gamma")
        return crr_bounds(law, gamma_spec.lo)
    if gamma_spec.form is GammaForm.POINT:
        lo, hi = gamma_feasible_range(law)
        if not lo - FEAS_SLACK <= gamma_spec.lo <= hi + FEAS_SLACK:
            raise InfeasibleInputs(f"gamma={gamma_spec.lo} outside the compatible range [{lo}, {hi}]")
    return bounds_for_spec(law, gamma_spec)


def _replicate(r: int, seed: int, counts: TrialCounts, gamma_spec: GammaSpec, model: Model,
               external: Optional[ExternalStudy]) -> Optional[Tuple[float, float]]:
    rng = np.random.default_rng([seed, r])
    n_c, n_t = counts.n_control, counts.n_treated
    if n_c == 0 or n_t == 0:
        raise DegenerateArm(f"replicate {r} has an empty arm")
    control = rng.multinomial(n_c, counts.control.ravel() / n_c).reshape(2, 2)
    treated_s1 = rng.binomial(n_t, counts.treated[1] / n_t)
    law = TrialCounts(control, [n_t - treated_s1, treated_s1]).law()
    spec = gamma_spec
    if external is not None:
        n_e = int(external.counts.sum())
        resampled = rng.multinomial(n_e, external.counts.ravel() / n_e).reshape(2, 2)
        g = external.gamma_hat(gamma_spec.scale, resampled)
        if g is None:
            return None
        try:
            spec = GammaSpec.point(g, gamma_spec.scale)
        except BadRange:
            return None
    try:
        report = compute_bounds(law, spec, model)
    except (InfeasibleInputs, ZeroControlRisk):
        return None
    return report.lower, report.upper


def region_from_replicates(lowers: np.ndarray, uppers: np.ndarray, alpha: float) -> Tuple[float, float]:
    """Percentile-of-ends region with numpy's default linear (type 7) quantiles."""
    return (float(np.quantile(np.sort(lowers), alpha / 2.0)),
            float(np.quantile(np.sort(uppers), 1.0 - alpha / 2.0)))


def bootstrap_region(counts: TrialCounts, gamma_spec: GammaSpec, model: Model = Model.STRONG,
                     cfg: BootstrapConfig = BootstrapConfig(),
                     workers: Optional[int] = None, progress: bool = False) -> UncertaintyRegion:
    """
    Nonparametric bootstrap of both arms. Replicate r draws from a stream seeded
    by (seed, r), so the region does not depend on the worker count.
    Args:
        counts (TrialCounts): Observed counts of both arms.
        gamma_spec (GammaSpec): Gamma knowledge; replaced per replicate in resampled mode.
        model (Model): Strong or non-strong surrogate model.
        cfg (BootstrapConfig): Replicates, alpha, seed and gamma treatment.
        workers (int): joblib workers; defaults to SURRBOUND_WORKERS.
        progress (bool): Show a tqdm progress bar.
    Returns:
        UncertaintyRegion: Region, standard deviations and skip count.
    Raises:
        DegenerateArm: An arm has no rows.
        AllReplicatesInfeasible: Every replicate was infeasible.
    """
    point = counts.law()
    workers = WORKERS if workers is None else workers
    external = cfg.external if cfg.gamma_mode is GammaMode.RESAMPLED else None
    logger.info("Bootstrap: B=%d alpha=%s seed=%d model=%s gamma=%s workers=%d",
                cfg.replicates, cfg.alpha, cfg.seed, model.value, gamma_spec.to_dict(), workers)
    indices = range(cfg.replicates)
    if progress:
        indices = tqdm(indices, desc="bootstrap")
    job = delayed(_replicate)
    results = Parallel(n_jobs=workers)(job(r, cfg.seed, counts, gamma_spec, model, external) for r in indices)

    kept = [res for res in results if res is not None]
    skipped = cfg.replicates - len(kept)
    if not kept:
        raise AllReplicatesInfeasible(f"all {cfg.replicates} bootstrap replicates were infeasible")
    if skipped > SKIP_WARN_FRACTION * cfg.replicates:
        logger.warning("%d of %d bootstrap replicates skipped as infeasible", skipped, cfg.replicates)
    else:
        logger.debug("%d of %d bootstrap replicates skipped", skipped, cfg.replicates)
    lowers = np.array([lo for lo, _ in kept])
    uppers = np.array([hi for _, hi in kept])
    lo, hi = region_from_replicates(lowers, uppers, cfg.alpha)
    sd_lower = float(np.std(lowers, ddof=1)) if len(kept) > 1 else 0.0
    sd_upper = float(np.std(uppers, ddof=1)) if len(kept) > 1 else 0.0

    point_lower = point_upper = None
    try:
        point_spec = gamma_spec
        if external is not None:
            g = external.gamma_hat(gamma_spec.scale)
            point_spec = GammaSpec.point(g, gamma_spec.scale) if g is not None else None
        if point_spec is not None:
            report = compute_bounds(point, point_spec, model)
            point_lower, point_upper = report.lower, report.upper
    except (InfeasibleInputs, ZeroControlRisk, BadRange) as e:
        logger.warning("Point-estimate bounds unavailable: %s", e)

    region = UncertaintyRegion(lo, hi, sd_lower, sd_upper, cfg.replicates, skipped,
                               point_lower, point_upper, lowers, uppers)
    if region.violations:
        logger.warning("Uncertainty region [%s, %s] does not cover the point bounds at the %s end",
                       lo, hi, " and ".join(region.violations))
    return region

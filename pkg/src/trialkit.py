"""
trialkit.py

Command-line front end: bounds, exclusion criteria, bootstrap uncertainty
regions, symbolic derivation, paradox witnesses, the partition grid and the
built-in example registry.

Usage:
    python3 src/trialkit.py bounds --law '{"p00":0.0197,"p10":0.6723,"p01":0.0060,"p11":0.3020,"s1":0.93}' \
        --gamma 0.3010 --model strong --scale ace --format json
    python3 src/trialkit.py bootstrap --control control.csv --treated treated.csv --gamma 0.3 --B 1000 --seed 42
    python3 src/trialkit.py examples

Exit codes: 0 success, 2 usage error, 3 data error, 4 infeasible inputs in strict mode.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from closed_bounds import (bounds_for_spec, nonstrong_bounds_for_spec, nonstrong_criterion,
                           nonstrong_gamma_needed, strong_criterion, strong_gamma_needed)
from dgp_lab import (PartitionConfig, builtin_examples, check_example, lift_qtable_to_dgp,
                     nonstrong_witness_search, paradox_witness_search, partition_grid,
                     write_partition_csv)
from errors import DATA_EXIT, BadRange, NotAProbability, SurrboundError, UsageError, WrongScale
from law import (POS_INF, GammaForm, GammaSpec, ObservedLaw, Scale, ace_from_qtable_strong,
                 crr_from_qtable_strong, renormalize, validate_observed)
from lp_engine import crr_bounds
from stats_io import (BootstrapConfig, ExternalStudy, GammaMode, Model, TrialCounts,
                      bootstrap_region, ingest)
from symbolic import derive
from utils import TEMPLATES, configure_logger, format_table, load_json_arg, pretty_section

logger = logging.getLogger(__name__)

SCHEMA = "surrbound/1"
DEFAULT_LOG_PATH = "logs/trialkit.log"


# ---------------------------------------------------------------------------
# argument helpers

def law_from_args(args) -> Tuple[ObservedLaw, Optional[TrialCounts]]:
    counts = None
    if args.law is not None:
        raw = load_json_arg(args.law, "--law")
        if not isinstance(raw, dict):
            raise UsageError("--law: expected a JSON object with p00, p10, p01, p11, s1")
        try:
            law = ObservedLaw.from_dict(raw)
        except NotAProbability as e:
            raise UsageError(f"--law: {e}") from e
    elif args.control and args.treated:
        law, counts = ingest(args.control, args.treated)
    else:
        raise UsageError("give the observed law with --law or with both --control and --treated")
    if args.renormalize:
        law = renormalize(law)
    return validate_observed(law), counts


def gamma_spec_from_args(args, required: bool = True) -> Optional[GammaSpec]:
    scale = Scale(args.scale)
    try:
        if args.gamma_spec is not None:
            raw = load_json_arg(args.gamma_spec, "--gamma-spec")
            raw.setdefault("scale", scale.value)
            return GammaSpec.from_dict(raw)
        if args.gamma_sign:
            return GammaSpec.sign_positive(scale)
        if args.gamma is not None:
            return GammaSpec.point(args.gamma, scale)
        if args.gamma_lo is not None:
            hi = POS_INF if args.gamma_hi is None else args.gamma_hi
            return GammaSpec.interval(args.gamma_lo, hi, scale)
    except BadRange as e:
        flag = "--gamma" if args.gamma is not None else "--gamma-lo/--gamma-hi/--gamma-spec"
        raise UsageError(f"{flag}: {e}") from e
    except UsageError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise UsageError(f"--gamma-spec: {e}") from e
    if args.gamma_hi is not None:
        raise UsageError("--gamma-hi needs --gamma-lo")
    if required:
        raise UsageError("one of --gamma, --gamma-lo, --gamma-sign or --gamma-spec is required")
    return None


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    return value


def _base_report(command: str, **fields) -> dict:
    report = {"schema": SCHEMA, "command": command}
    report.update(fields)
    return report


# ---------------------------------------------------------------------------
# subcommands

def run_bounds(args) -> dict:
    law, _ = law_from_args(args)
    spec = gamma_spec_from_args(args)
    model = Model(args.model)
    logger.info("bounds: model=%s law=%s gamma=%s", model.value, law.to_dict(), spec.to_dict())
    if spec.scale is Scale.RELATIVE_RISK:
        if model is not Model.STRONG:
            raise WrongScale("--scale crr is only available with --model strong")
        if spec.form is not GammaForm.POINT:
            raise UsageError("--scale crr needs a point --gamma")
        report = crr_bounds(law, spec.lo)
    elif model is Model.STRONG:
        report = bounds_for_spec(law, spec, strict=args.strict_feasibility)
    else:
        report = nonstrong_bounds_for_spec(law.py1_control, law.s1_treated, spec,
                                           strict=args.strict_feasibility)
    logger.info("bounds: [%s, %s] verdict %s", report.lower, report.upper, report.criterion)
    return _base_report("bounds", model=model.value, law=law.to_dict(), gamma=spec.to_dict(),
                        **report.to_dict())


def _criterion_block(model: Model, law: ObservedLaw, spec: GammaSpec) -> dict:
    if model is Model.STRONG:
        if spec.scale is Scale.RELATIVE_RISK:
            if spec.form is not GammaForm.POINT:
                raise UsageError("--scale crr needs a point --gamma")
            report = crr_bounds(law, spec.lo)
            return {"verdict": report.criterion, "threshold": report.threshold, "lower": report.lower}
        verdict, threshold = strong_criterion(law, spec)
        needed = strong_gamma_needed(law)
    else:
        verdict, threshold = nonstrong_criterion(law.py1_control, law.s1_treated, spec)
        needed = nonstrong_gamma_needed(law.py1_control, law.s1_treated)
    return {"verdict": verdict, "threshold": threshold,
            "gamma_needed": needed.threshold, "attainable": needed.attainable}


def run_criteria(args) -> dict:
    law, _ = law_from_args(args)
    spec = gamma_spec_from_args(args)
    if args.model is not None:
        block = _criterion_block(Model(args.model), law, spec)
        logger.info("criteria: %s verdict %s", args.model, block["verdict"])
        return _base_report("criteria", model=args.model, law=law.to_dict(), gamma=spec.to_dict(), **block)
    verdicts = {m.value: _criterion_block(m, law, spec) for m in Model
                if not (m is Model.NONSTRONG and spec.scale is Scale.RELATIVE_RISK)}
    logger.info("criteria: %s", {k: v["verdict"] for k, v in verdicts.items()})
    return _base_report("criteria", law=law.to_dict(), gamma=spec.to_dict(), verdicts=verdicts)


def run_bootstrap(args) -> dict:
    law, counts = law_from_args(args)
    if counts is None:
        raise UsageError("bootstrap needs trial data: give --control and --treated")
    spec = gamma_spec_from_args(args)
    external = None
    if args.external_counts is not None:
        raw = load_json_arg(args.external_counts, "--external-counts")
        try:
            external = ExternalStudy(np.array(raw))
        except (TypeError, ValueError) as e:
            raise UsageError(f"--external-counts: expected a 2x2 table of counts ({e})") from e
    cfg = BootstrapConfig(args.B, args.alpha, args.seed,
                          GammaMode.RESAMPLED if external is not None else GammaMode.FIXED, external)
    region = bootstrap_region(counts, spec, Model(args.model), cfg, workers=args.workers)
    return _base_report("bootstrap", model=args.model, law=law.to_dict(), gamma=spec.to_dict(),
                        B=cfg.replicates, alpha=cfg.alpha, seed=cfg.seed,
                        lower=region.point_lower, upper=region.point_upper,
                        uncertainty_region=region.to_dict(), skipped_replicates=region.skipped)


def run_derive(args) -> dict:
    bound = derive(args.system, args.direction, n_samples=args.samples, seed=args.seed,
                   exact=args.exact or None, workers=args.workers)
    return _base_report("derive", system=args.system, direction=args.direction,
                        basis=list(bound.labels), count=len(bound.exprs),
                        expressions=bound.render(),
                        coefficients=[[float(c) for c in e.coeffs] for e in bound.exprs])


def run_witness(args) -> dict:
    law, _ = law_from_args(args)
    spec = gamma_spec_from_args(args)
    if spec.form is not GammaForm.POINT:
        raise UsageError("witness search needs a point --gamma")
    if args.model == Model.NONSTRONG.value:
        found = nonstrong_witness_search(law.py1_control, law.s1_treated, spec.lo)
        fields = {"found": found is not None,
                  "witness": None if found is None else found.cells,
                  "witness_ace_ty": None if found is None else found.ace_ty}
    else:
        q = paradox_witness_search(law, spec.lo, spec.scale)
        fields = {"found": q is not None, "witness": None if q is None else q.q}
        if q is not None:
            fields["witness_ace_ty"] = ace_from_qtable_strong(q)
            fields["witness_crr_ty"] = crr_from_qtable_strong(q)[0]
            fields["confounder_levels"] = int(np.count_nonzero(lift_qtable_to_dgp(q).weights))
    logger.info("witness: found=%s", fields["found"])
    return _base_report("witness", model=args.model, law=law.to_dict(), gamma=spec.to_dict(), **fields)


def run_partition(args) -> dict:
    raw = load_json_arg(args.config, "--config") if args.config else {}
    if not isinstance(raw, dict):
        raise UsageError("--config: expected a JSON object of PartitionConfig fields")
    if args.resolution is not None:
        raw["resolution"] = args.resolution
    try:
        config = PartitionConfig.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise UsageError(f"--config: {e}") from e
    result = partition_grid(config)
    meta_path = write_partition_csv(result, args.out)
    return _base_report("partition", out=args.out, metadata_path=str(meta_path), **result.metadata)


def run_examples(args) -> dict:
    rows = []
    for entry in builtin_examples().values():
        rows.extend(c._asdict() for c in check_example(entry))
    failed = sum(r["status"] == "fail" for r in rows)
    disputed = sum(r["status"] == "disputed" for r in rows)
    logger.info("examples: %d checks, %d failed, %d disputed", len(rows), failed, disputed)
    return _base_report("examples", checks=rows, failed=failed, disputed=disputed)


COMMANDS: Dict[str, Callable] = {
    "bounds": run_bounds,
    "criteria": run_criteria,
    "bootstrap": run_bootstrap,
    "derive": run_derive,
    "witness": run_witness,
    "partition": run_partition,
    "examples": run_examples,
}


# ---------------------------------------------------------------------------
# parser and output

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["table", "json"], default="table",
                        help="Human table or JSON report")
    common.add_argument("--log-path", default=DEFAULT_LOG_PATH, help="Path to the log file")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--renormalize", action="store_true",
                        help="Rescale the control cells to sum to one before validation")
    common.add_argument("--workers", type=int, default=None, help="joblib workers (default SURRBOUND_WORKERS)")

    law_args = argparse.ArgumentParser(add_help=False)
    law_args.add_argument("--law", help="Observed law as inline JSON or a JSON file")
    law_args.add_argument("--control", help="Control-arm CSV with header s,y")
    law_args.add_argument("--treated", help="Treated-arm CSV with header s")

    gamma_args = argparse.ArgumentParser(add_help=False)
    group = gamma_args.add_mutually_exclusive_group()
    group.add_argument("--gamma", type=float, help="Point value of the surrogate->outcome effect")
    group.add_argument("--gamma-lo", type=float, help="Guaranteed lower end of gamma")
    group.add_argument("--gamma-sign", action="store_true", help="Only gamma > 0 (or > 1 for crr) is known")
    group.add_argument("--gamma-spec", help="GammaSpec as inline JSON or a JSON file")
    gamma_args.add_argument("--gamma-hi", type=float, help="Upper end of gamma (default unbounded)")
    gamma_args.add_argument("--scale", choices=["ace", "crr"], default="ace")

    parser = argparse.ArgumentParser(description="Bounds and exclusion criteria for the surrogate paradox.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", parents=[common, law_args, gamma_args], help="Sharp bounds on ACE(T->Y) or CRR(T->Y)")
    p.add_argument("--model", choices=["strong", "nonstrong"], default="strong")
    p.add_argument("--strict-feasibility", action="store_true",
                   help="Fail with exit code 4 when no latent table reproduces the inputs")

    p = sub.add_parser("criteria", parents=[common, law_args, gamma_args], help="Exclusion verdicts")
    p.add_argument("--model", choices=["strong", "nonstrong"], default=None,
                   help="Report one model (default: both)")

    p = sub.add_parser("bootstrap", parents=[common, law_args, gamma_args], help="Bootstrap uncertainty region")
    p.add_argument("--model", choices=["strong", "nonstrong"], default="strong")
    p.add_argument("--B", type=int, default=1000, help="Bootstrap replicates")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--external-counts", help="2x2 counts [[s0y0, s0y1], [s1y0, s1y1]] of an external S study")

    p = sub.add_parser("derive", parents=[common], help="Re-derive closed-form bounds by dual vertex enumeration")
    p.add_argument("--system", choices=["strong", "nonstrong-reduced"], default="strong")
    p.add_argument("--direction", choices=["lower", "upper"], default="lower")
    p.add_argument("--samples", type=int, default=100_000, help="Samples used to prune redundant terms")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="Rational vertex arithmetic")

    p = sub.add_parser("witness", parents=[common, law_args, gamma_args], help="Paradox witness search")
    p.add_argument("--model", choices=["strong", "nonstrong"], default="strong")

    p = sub.add_parser("partition", parents=[common], help="Partition grid over (delta0, delta1)")
    p.add_argument("--config", help="PartitionConfig as inline JSON or a JSON file")
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--out", default="partition.csv")

    sub.add_parser("examples", parents=[common], help="Run the built-in example registry")
    return parser


def _flatten(report: dict, prefix: str = "") -> dict:
    rows = {}
    for k, v in report.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            rows.update(_flatten(v, key + "."))
        else:
            rows[key] = v
    return rows


def print_table(report: dict):
    command = report["command"]
    if command == "examples":
        body = "\n".join(f"{c['status']:<8} {c['example']:<16} {c['quantity']:<9} "
                         f"expected {c['expected']}  actual {c['actual']:.4f}"
                         if isinstance(c["actual"], float) else
                         f"{c['status']:<8} {c['example']:<16} {c['quantity']:<9} "
                         f"expected {c['expected']}  actual {c['actual']}"
                         for c in report["checks"])
        pretty_section("📋 Example registry", body)
        return
    if command == "derive":
        pretty_section(f"🧮 {report['direction']} bound, {report['system']} system "
                       f"({report['count']} terms)", "\n".join(report["expressions"]))
        return
    if command == "bounds":
        quantity = "CRR(T->Y)" if report["scale"] == "crr" else "ACE(T->Y)"
        lines = [TEMPLATES["bounds"].format(quantity=quantity, **report)]
        if report["active_lower_term"] is not None:
            lines.append(TEMPLATES["active"].format(**report))
        if report["verdict"] is not None:
            lines.append(TEMPLATES["verdict"].format(**report))
        pretty_section("📐 Bounds", "\n".join(lines))
    if command == "criteria":
        blocks = report["verdicts"] if "verdicts" in report else {report["model"]: report}
        lines = []
        for model, block in blocks.items():
            lines.append(f"{model} " + TEMPLATES["verdict"].format(**block))
            if block.get("gamma_needed") is not None:
                attainable = "attainable" if block["attainable"] else "not attainable"
                lines.append(TEMPLATES["gamma_needed"].format(model=model, threshold=block["gamma_needed"],
                                                              attainable=attainable))
        pretty_section("⚖️ Criteria", "\n".join(lines))
    if command == "bootstrap":
        region = report["uncertainty_region"]
        pretty_section("🎲 Bootstrap", TEMPLATES["region"].format(**region) + "\n"
                       + TEMPLATES["skipped"].format(**region))
    rows = {k: v for k, v in _flatten(report).items() if k not in ("schema", "command")}
    pretty_section(f"🔎 {command}", format_table(rows))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logger(args.log_path, level=getattr(logging, args.log_level))
    try:
        report = _jsonable(COMMANDS[args.command](args))
    except SurrboundError as e:
        logger.error("%s failed: %s", args.command, e)
        print(TEMPLATES["error"].format(error=e), file=sys.stderr)
        return e.exit_code

    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        print_table(report)
    if report.get("failed"):
        return DATA_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())

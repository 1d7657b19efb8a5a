"""
Runs the built-in example registry and records one row per checked quantity.

Usage:
    python evaluation/evaluate_examples.py \
        --log-path logs/eval/examples.log \
        --csv-out evaluation/data/examples.csv

The output CSV will have columns:
    example,quantity,expected,actual,status[pass|fail|disputed]
"""
import argparse
import csv
import logging
import os
import sys
from collections import Counter

# TODO - add source directory to path in a different way
SRC = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src"))
sys.path.insert(0, SRC)

from dgp_lab import builtin_examples, check_example
from utils import configure_logger, pretty_section


def main():
    parser = argparse.ArgumentParser(description="Check the built-in examples against their expected values.")
    parser.add_argument("--log-path", required=True, help="Path to write logs")
    parser.add_argument("--csv-out", required=True, help="Path to the output CSV")
    args = parser.parse_args()

    output_dir = os.path.dirname(args.csv_out)
    try:
        os.makedirs(output_dir or ".", exist_ok=True)
    except OSError as e:
        parser.error(f"Could not create output directory '{output_dir}': {e}")

    logger = logging.getLogger(__name__)
    configure_logger(args.log_path, level=logging.DEBUG)

    entries = builtin_examples()
    print(f"Checking {len(entries)} built-in examples\n")

    details = []
    for idx, (name, entry) in enumerate(entries.items(), start=1):
        print(f"Processing example {idx}/{len(entries)} ({name})")
        for check in check_example(entry):
            level = logging.WARNING if check.status == "fail" else logging.DEBUG
            logger.log(level, "%s %s: expected %s, actual %s -> %s",
                       check.example, check.quantity, check.expected, check.actual, check.status)
            details.append(check._asdict())

    statuses = Counter(d["status"] for d in details)
    summary = (
        f"Checked {len(details)} quantities over {len(entries)} examples\n\n"
        f"pass:     {statuses['pass']}\n"
        f"fail:     {statuses['fail']}\n"
        f"disputed: {statuses['disputed']}"
    )
    failed = [f"{d['example']}.{d['quantity']}" for d in details if d["status"] == "fail"]
    if failed:
        summary += "\n\nFailed: " + ", ".join(failed)

    with open(args.csv_out, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=details[0].keys())
        writer.writeheader()
        writer.writerows(details)

    logger.info("Example details written to %s", args.csv_out)
    logger.info(summary)

    pretty_section("📊 Example registry summary", summary)
    pretty_section("📜 Log files", f"Log path: {args.log_path}\nOutput details path: {args.csv_out}")
    sys.exit(1 if failed else 0)


if __name__ == '__main__':
    main()

import os
import json
import logging
import textwrap

from errors import UsageError

# Static templates for human-readable reports
TEMPLATES = {
    'bounds': "{model} bounds on {quantity}: [{lower:.4f}, {upper:.4f}]",
    'active': "active terms: lower {active_lower_term}, upper {active_upper_term}",
    'verdict': "verdict: {verdict} (threshold {threshold})",
    'gamma_needed': "{model}: exclusion needs gamma > {threshold:.4f} ({attainable})",
    'region': "uncertainty region: [{lo:.4f}, {hi:.4f}]  sd lower {sd_lower:.4f}, sd upper {sd_upper:.4f}",
    'skipped': "{skipped_replicates} of {replicates} replicates skipped as infeasible",
    'error': "error: {error}"
}

print_width = 70
logger = logging.getLogger(__name__)

def configure_logger(log_path: str, level: int = logging.INFO):
    """
    Configures the root logger to write to a specified file.
    Args:
        log_path (str): The path to the log file.
        level (int): The logging level (default: logging.INFO).
    """
    log_dir = os.path.dirname(log_path)
    if log_dir and not os.path.exists(log_dir):
        os.makedirs(log_dir, exist_ok=True)

    open(log_path, "a").close()

    logging.basicConfig(
        filename=log_path,
        filemode='w',
        level=level,
        format="%(asctime)s | %(levelname)8s | %(filename)36s:%(lineno)4d | %(message)s",
        force=True
    )

def load_json_arg(value: str, flag: str):
    """
    Parses a JSON flag value, given either inline or as a path to a file.
    Args:
        value (str): Inline JSON or a file path.
        flag (str): The flag name, used in error messages.
    Returns:
        The decoded JSON value.
    """
    try:
        if os.path.isfile(value):
            with open(value) as f:
                return json.load(f)
        return json.loads(value)
    except json.JSONDecodeError as e:
        logger.error(f"Could not parse {flag}: {e}")
        raise UsageError(f"{flag}: not valid JSON ({e})") from e

def format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)

def format_table(rows: dict) -> str:
    """Left-aligned key/value lines."""
    width = max((len(k) for k in rows), default=0)
    return "\n".join(f"{k:<{width}}  {format_value(v)}" for k, v in rows.items())

def pretty_section(title: str, body: str, wrap: bool = False):
    """
    Pretty prints a section with a title and body.
    Args:
        title (str): The title of the section.
        body (str): The body content of the section.
        wrap (bool): Whether to wrap the text to fit within the print width.
    """
    sep = "=" * print_width
    if wrap:
        body = textwrap.fill(body, width=print_width)
    print(f"\n{sep}\n{title}\n{sep}\n{body}")

"""Command-line front end: config, dispatch, reports."""

from .config import apply_overrides, load_config, load_schema, resolve_preset, validate_config
from .main import build_parser, main
from .report import REPORT_KINDS, Table, build_report, to_csv, to_svg, to_text, write_report

__all__ = [
    "REPORT_KINDS",
    "Table",
    "apply_overrides",
    "build_parser",
    "build_report",
    "load_config",
    "load_schema",
    "main",
    "resolve_preset",
    "to_csv",
    "to_svg",
    "to_text",
    "validate_config",
    "write_report",
]

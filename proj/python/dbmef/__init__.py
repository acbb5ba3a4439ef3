"""Confidence-gated diffusion re-ranking of classifier predictions.

Thin re-export of the compiled ``_core`` extension.
"""

import json

from ._core import *  # noqa: F401,F403
from ._core import EvaluationReport, parse_config_text as _parse_config_text

__version__ = "0.1.0"


def parse_config(text):
    """Validate a JSON configuration string and return it as a dict with defaults filled in."""
    return json.loads(_parse_config_text(text))


def report_dict(report: EvaluationReport):
    return json.loads(report.to_json())

# SPDX-License-Identifier: Apache-2.0
"""Python access to the structchem core: datasets, parsing, grading and the CLI."""

import json

from . import _core
from ._core import StructchemError, grade_answer

__all__ = [
    "StructchemError",
    "aggregate",
    "cli",
    "extract_answer",
    "format_generation",
    "grade_answer",
    "load_dataset",
    "parse_generation",
]


def load_dataset(path, field_map=None):
    """Load a problem file. field_map maps canonical names to source keys."""
    pairs = [f"{k}={v}" for k, v in (field_map or {}).items()]
    return json.loads(_core.load_dataset_json(str(path), pairs))


def parse_generation(text):
    return json.loads(_core.parse_generation_json(text))


def format_generation(formulae, reasoning):
    return _core.format_generation_json(json.dumps(formulae), json.dumps(reasoning))


def extract_answer(text):
    return json.loads(_core.extract_answer_json(text))


def aggregate(grades, by_dataset=True, by_method=True, by_mode=True):
    """Accuracy table from a list of grade dicts as stored in run records."""
    return json.loads(_core.aggregate_json(json.dumps(list(grades)), by_dataset, by_method, by_mode))


def cli(*args):
    """Run the command-line tool in-process. Returns (exit_code, stdout, stderr)."""
    return _core.cli([str(a) for a in args])

"""Python access to the dwim core and its dwim/v1 datasets."""

from ._dwim import (
    MASK_TOKEN,
    SCHEMA_VERSION,
    SchemaError,
    UsageError,
    flag_workflow,
    normalize_answer,
    render_sample,
    run_cli,
)
from .dataset import DatasetError, Example, load_dataset

__all__ = [
    "MASK_TOKEN",
    "SCHEMA_VERSION",
    "DatasetError",
    "Example",
    "SchemaError",
    "UsageError",
    "flag_workflow",
    "load_dataset",
    "normalize_answer",
    "render_sample",
    "run_cli",
]

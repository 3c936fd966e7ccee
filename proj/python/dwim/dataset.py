"""Reader for mask-sample datasets written by ``dwim build-dataset``."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import _dwim


class DatasetError(ValueError):
    """A record that cannot be used; the message starts with ``path:line``."""


@dataclass(frozen=True)
class Example:
    task_id: str
    variant: str
    prompt: str
    completion: str
    reward: int


def load_dataset(path: str | Path) -> list[Example]:
    """One example per non-blank line. Masked variants must carry exactly one
    mask token in the prompt; naive SFT samples carry none."""
    path = Path(path)
    examples = []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                json.loads(line)
                rendered = _dwim.render_sample(line)
            except (ValueError, RuntimeError) as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from e
            want = 0 if rendered["variant"] == "naive_sft" else 1
            found = rendered["prompt"].count(_dwim.MASK_TOKEN)
            if found != want:
                raise DatasetError(f"{path}:{lineno}: prompt has {found} mask tokens, expected {want}")
            examples.append(Example(**rendered))
    return examples

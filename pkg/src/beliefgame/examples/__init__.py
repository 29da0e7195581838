"""Bundled example games with golden value curves.

Each JSON file is a complete game description; each golden CSV holds the
known closed-form limit value on a uniform grid for regression testing.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

NAMES = (
    "reveal_none",
    "reveal_all",
    "reveal_partial",
    "reveal_partial_interior",
    "kink_at_stationary",
)


def available() -> tuple[str, ...]:
    return NAMES


def load_raw(name: str) -> dict:
    if name not in NAMES:
        raise KeyError(f"unknown example {name!r}; available: {NAMES}")
    text = resources.files(__package__).joinpath(f"{name}.json").read_text("utf-8")
    return json.loads(text)


def spec_path(name: str) -> str:
    """Filesystem path of the bundled description (for CLI round-trips)."""
    if name not in NAMES:
        raise KeyError(f"unknown example {name!r}; available: {NAMES}")
    return str(resources.files(__package__).joinpath(f"{name}.json"))


def golden_curve(name: str) -> tuple[np.ndarray, np.ndarray]:
    """(p, v) points of the known closed-form limit value."""
    text = resources.files(__package__).joinpath(f"golden/{name}_value.csv").read_text("utf-8")
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    arr = np.array([[float(a), float(b)] for a, b in rows])
    return arr[:, 0], arr[:, 1]

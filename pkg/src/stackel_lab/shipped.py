"""Loaders for the shipped JSON configurations (metrics, billiards, webs, geodesics)."""
from __future__ import annotations

import json
from importlib import resources

from .staeckel import StaeckelData, WorkingBox, staeckel_from_json



def names() -> list[str]:
    root = resources.files(__package__) / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def path(name: str):
    return resources.files(__package__) / "fixtures" / f"{name}.json"


def load(name: str) -> dict:
    p = path(name)
    if not p.is_file():
        raise KeyError(f"no shipped fixture {name!r}")
    return json.loads(p.read_text())


def metric(name: str) -> tuple[StaeckelData, WorkingBox]:
    """``(data, box)`` of ``metric_<name>.json``."""
    return staeckel_from_json(load(f"metric_{name}"))


def default_seed() -> int:
    return int(load("verify")["seed"])

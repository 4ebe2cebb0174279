"""Published reference tables, shipped as data files."""

import json
from importlib import resources


def _load(name: str) -> dict:
    return json.loads(resources.files(__package__).joinpath(name).read_text())


def table3_cells() -> dict:
    return _load("table3_cells.json")


def table1_regions() -> dict:
    return _load("table1_regions.json")


def table2_diagnostics() -> dict:
    return _load("table2_diagnostics.json")

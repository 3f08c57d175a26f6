"""Metrics reports: named scalar results plus the seed and config hash that
produced them.

Reports serialize to a flat text format, one ``key = value`` pair per line
with dotted keys for nesting, sorted by key.  Floats are written with repr
so a parse round-trip is exact; rewriting an unchanged report is therefore
byte-identical, which the reproducibility contract relies on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractViolation


@dataclass
class MetricsReport:
    values: dict = field(default_factory=dict)
    seed: int = 0
    config_hash: str = ""

    def update(self, other: dict) -> None:
        self.values.update(other)

    def to_text(self) -> str:
        rows = {"meta.seed": self.seed, "meta.config_hash": self.config_hash}
        rows.update(self.values)
        lines = []
        for key in sorted(rows):
            lines.append(f"{key} = {_format_value(rows[key])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        values: dict = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ContractViolation(f"malformed report line: {raw!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = _parse_value(val.strip())
        seed = int(values.pop("meta.seed", 0))
        config_hash = str(values.pop("meta.config_hash", ""))
        return cls(values=values, seed=seed, config_hash=config_hash)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "MetricsReport":
        return cls.from_text(Path(path).read_text())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_scores_csv(path, header: list[str], rows) -> None:
    """Optional per-pair score dump next to a report."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(list(row))

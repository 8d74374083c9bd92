"""CSV files for gain tables and sweeps, and the bundled measured tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model import Basis, GainTable, Intensity

TABLE_HEADER = ["basis", "mu_a", "mu_b", "Q", "E"]
SWEEP_HEADER = ["axis", "R", "R_clamped", "noise_cps"]


class TableFormatError(ValueError):
    pass


def _num(x: float) -> str:
    return "%.16e" % x


def format_table(table: GainTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for basis in (Basis.Z, Basis.X):
        for ia in Intensity:
            for ib in Intensity:
                w.writerow([basis.name, ia.label, ib.label, _num(table.Q[basis, ia, ib]), _num(table.E[basis, ia, ib])])
    return buf.getvalue()


def parse_table(text: str, source: str = "<table>") -> GainTable:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0]] != TABLE_HEADER:
        raise TableFormatError(f"{source}: header must be {','.join(TABLE_HEADER)}")
    Q = np.full((2, 3, 3), np.nan)
    E = np.full((2, 3, 3), np.nan)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise TableFormatError(f"{source}:{lineno}: expected 5 fields, got {len(row)}")
        try:
            b = Basis[row[0].strip()]
            ia = Intensity.from_label(row[1].strip())
            ib = Intensity.from_label(row[2].strip())
            q, e = float(row[3]), float(row[4])
        except (KeyError, ValueError) as exc:
            raise TableFormatError(f"{source}:{lineno}: {exc}") from None
        if not np.isnan(Q[b, ia, ib]):
            raise TableFormatError(f"{source}:{lineno}: duplicate cell {row[0]},{row[1]},{row[2]}")
        Q[b, ia, ib] = q
        E[b, ia, ib] = e
    if np.isnan(Q).any():
        raise TableFormatError(f"{source}: table is missing {int(np.isnan(Q).sum())} cells")
    try:
        return GainTable(Q, E)
    except ValueError as exc:
        raise TableFormatError(f"{source}: {exc}") from None


def read_table(path) -> GainTable:
    path = Path(path)
    return parse_table(path.read_text(), str(path))


def write_table(table: GainTable, path) -> None:
    Path(path).write_text(format_table(table))


def format_sweep(rows) -> str:
    """``rows`` of ``(axis_value, R, R_clamped, noise_cps)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([_num(float(v)) for v in row])
    return buf.getvalue()


def parse_sweep(text: str) -> list[tuple[float, float, float, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != SWEEP_HEADER:
        raise TableFormatError(f"sweep header must be {','.join(SWEEP_HEADER)}")
    return [tuple(float(x) for x in r) for r in rows[1:] if r]


@dataclass(frozen=True)
class Fixture:
    name: str
    file: str
    setting: str  # lab | deployed
    sweep: str  # loss | power
    loss_db: float
    launch_uw: float | None
    keyrate: float

    def table(self) -> GainTable:
        return parse_table(_data(self.file).read_text(), self.file)

    @property
    def launch_power(self) -> float | None:
        return None if self.launch_uw is None else self.launch_uw / 1e6


def _data(name: str):
    return resources.files("mdiqkd").joinpath("data", name)


def fixtures() -> dict[str, Fixture]:
    """Transcribed measured tables keyed by name, e.g. ``"lab_19dB"``."""
    manifest = json.loads(_data("manifest.json").read_text())
    return {f["name"]: Fixture(**f) for f in manifest["fixtures"]}


def fixture(name: str) -> Fixture:
    table = fixtures()
    if name not in table:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(sorted(table))}")
    return table[name]


def fixture_path(name: str) -> Path:
    return Path(str(_data(fixture(name).file)))

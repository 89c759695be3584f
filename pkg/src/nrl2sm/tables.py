"""NR MCS tables, calibrated EESM beta values and CQI quantization.

Table rows live in ``data/mcs_table{1,2}.csv`` and are validated when loaded.
Code rates are kept as exact fractions (x/1024 or x/2048) the way the
standard defines them.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Iterator, Mapping

from .errors import InvalidInputError, InvalidMcsError, LutFormatError

CSV_FIELDS = (
    "index",
    "modulation_order",
    "ecr_numerator",
    "ecr_denominator",
    "spectral_efficiency",
    "beta",
)
SE_TOLERANCE = 0.01
NUM_CQI = 16
SUBCARRIERS_PER_RB = 12


class McsTable(enum.IntEnum):
    TABLE1 = 1
    TABLE2 = 2

    @classmethod
    def parse(cls, value) -> "McsTable":
        """Accept ``McsTable``, ``1``/``2`` or names like ``"Table1"``."""
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "")
            for member in cls:
                if key in (f"table{member.value}", str(member.value)):
                    return member
            raise InvalidMcsError(f"unknown MCS table {value!r}")
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            raise InvalidMcsError(f"unknown MCS table {value!r}") from None

    @property
    def label(self) -> str:
        return f"Table{self.value}"

    @property
    def max_index(self) -> int:
        return 28 if self is McsTable.TABLE1 else 27

    @property
    def max_modulation_order(self) -> int:
        return 6 if self is McsTable.TABLE1 else 8


@dataclass(frozen=True)
class McsEntry:
    table_id: McsTable
    index: int
    modulation_order: int
    ecr: Fraction
    spectral_efficiency: float
    beta: float

    @property
    def code_rate(self) -> float:
        return float(self.ecr)

    @property
    def key(self) -> tuple[McsTable, int]:
        return (self.table_id, self.index)

    def __str__(self):
        return (
            f"{self.table_id.label} MCS{self.index} "
            f"(Qm={self.modulation_order}, R={float(self.ecr):.2f}, "
            f"SE={self.spectral_efficiency:.2f})"
        )


def _read_rows(text: str, source: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise LutFormatError(f"{source}: expected columns {CSV_FIELDS}, got {reader.fieldnames}")
    return list(reader)


def parse_table(text: str, table_id: McsTable, source: str = "<string>") -> tuple[McsEntry, ...]:
    """Parse and validate one MCS table file."""
    entries = []
    for row in _read_rows(text, source):
        try:
            entry = McsEntry(
                table_id=table_id,
                index=int(row["index"]),
                modulation_order=int(row["modulation_order"]),
                ecr=Fraction(int(row["ecr_numerator"]), int(row["ecr_denominator"])),
                spectral_efficiency=float(row["spectral_efficiency"]),
                beta=float(row["beta"]),
            )
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise LutFormatError(f"{source}: bad row {row}: {exc}") from None
        where = f"{source}: {table_id.label} MCS{entry.index}"
        if entry.index != len(entries):
            raise LutFormatError(f"{where}: indices must run 0,1,2,... without gaps")
        if entry.modulation_order not in (2, 4, 6, 8) or entry.modulation_order > table_id.max_modulation_order:
            raise LutFormatError(f"{where}: modulation order {entry.modulation_order} not allowed")
        if not 0 < entry.ecr < 1:
            raise LutFormatError(f"{where}: code rate {entry.ecr} outside (0, 1)")
        if abs(entry.spectral_efficiency - entry.modulation_order * float(entry.ecr)) > SE_TOLERANCE:
            raise LutFormatError(f"{where}: spectral efficiency inconsistent with Qm*R")
        if not entry.beta > 0:
            raise LutFormatError(f"{where}: beta must be positive")
        if entries and entry.beta < entries[-1].beta:
            raise LutFormatError(f"{where}: beta decreases with MCS index")
        entries.append(entry)
    if len(entries) != table_id.max_index + 1:
        raise LutFormatError(f"{source}: {table_id.label} needs {table_id.max_index + 1} rows, found {len(entries)}")
    return tuple(entries)


class McsTableSet(Mapping):
    """Immutable ``(table, index) -> McsEntry`` mapping."""

    def __init__(self, tables: Mapping[McsTable, tuple[McsEntry, ...]]):
        self._tables = {McsTable.parse(t): tuple(rows) for t, rows in tables.items()}

    @classmethod
    def load_default(cls) -> "McsTableSet":
        return default_tables()

    def table(self, table_id) -> tuple[McsEntry, ...]:
        try:
            return self._tables[McsTable.parse(table_id)]
        except KeyError:
            raise InvalidMcsError(f"table {table_id!r} not loaded") from None

    def lookup(self, table_id, index) -> McsEntry:
        rows = self.table(table_id)
        if isinstance(index, bool) or not isinstance(index, int) or not 0 <= index < len(rows):
            raise InvalidMcsError(
                f"MCS index {index!r} out of range 0..{len(rows) - 1} for {McsTable.parse(table_id).label}"
            )
        return rows[index]

    def __getitem__(self, key) -> McsEntry:
        table_id, index = key
        return self.lookup(table_id, index)

    def __iter__(self) -> Iterator[tuple[McsTable, int]]:
        for table_id, rows in self._tables.items():
            for e in rows:
                yield (table_id, e.index)

    def __len__(self):
        return sum(len(rows) for rows in self._tables.values())

    @property
    def table_ids(self) -> tuple[McsTable, ...]:
        return tuple(self._tables)


@lru_cache(maxsize=None)
def default_tables() -> McsTableSet:
    data = resources.files(__package__) / "data"
    loaded = {}
    for table_id in McsTable:
        name = f"mcs_table{table_id.value}.csv"
        loaded[table_id] = parse_table((data / name).read_text(encoding="utf-8"), table_id, name)
    return McsTableSet(loaded)


def mcs_lookup(table_id, index: int, tables: McsTableSet | None = None) -> McsEntry:
    return (tables or default_tables()).lookup(table_id, index)


def beta_lookup(table_id, index: int, tables: McsTableSet | None = None) -> float:
    return mcs_lookup(table_id, index, tables).beta


def min_ecr_same_modulation(table_id, index: int, tables: McsTableSet | None = None) -> Fraction:
    """Lowest code rate in the table among entries sharing this entry's modulation."""
    tables = tables or default_tables()
    qm = tables.lookup(table_id, index).modulation_order
    return min(e.ecr for e in tables.table(table_id) if e.modulation_order == qm)


def quantize_cqi(table_id, mcs_index: int, tables: McsTableSet | None = None) -> int:
    """Map an MCS to a 4-bit CQI by uniform quantization of spectral efficiency.

    The lowest MCS of the table maps to CQI 1 and the highest to CQI 15;
    CQI 0 is reserved for "out of range". Rounding is downwards, so the CQI
    never advertises more than the MCS supports.
    """
    tables = tables or default_tables()
    entry = tables.lookup(table_id, mcs_index)
    rows = tables.table(table_id)
    lo, hi = rows[0].spectral_efficiency, rows[-1].spectral_efficiency
    frac = (entry.spectral_efficiency - lo) / (hi - lo)
    return 1 + min(NUM_CQI - 2, math.floor(frac * (NUM_CQI - 2) + 1e-9))


def mcs_for_cqi(table_id, cqi: int, tables: McsTableSet | None = None) -> int:
    """gNB-side inverse of :func:`quantize_cqi` (lowest MCS reporting ``cqi``).

    CQI 0 and CQIs below every reported value map to MCS 0; CQIs that no MCS
    reports map to the highest MCS with a smaller CQI.
    """
    if not 0 <= cqi < NUM_CQI:
        raise InvalidInputError(f"CQI {cqi} outside 0..{NUM_CQI - 1}")
    tables = tables or default_tables()
    rows = tables.table(table_id)
    cqis = [quantize_cqi(table_id, e.index, tables) for e in rows]
    exact = [i for i, c in enumerate(cqis) if c == cqi]
    if exact:
        return exact[0]
    below = [i for i, c in enumerate(cqis) if c < cqi]
    return below[-1] if below else 0


def tbs_calculate(n_rbs: int, n_symbols: int, mcs: McsEntry, dmrs_symbols: int = 1) -> int:
    """Simplified transport block size in bits.

    ``N_RE = 12 * n_rbs * (n_symbols - dmrs_symbols)``; the TBS is
    ``N_RE * Qm * R`` floored to a whole byte, never below 24 bits.
    """
    data_symbols = n_symbols - dmrs_symbols
    if n_rbs <= 0 or data_symbols <= 0:
        raise InvalidInputError(
            f"empty allocation: {n_rbs} RBs, {n_symbols} symbols ({dmrs_symbols} DMRS)"
        )
    n_re = SUBCARRIERS_PER_RB * n_rbs * data_symbols
    raw = n_re * mcs.modulation_order * mcs.ecr
    return max(24, math.floor(raw / 8) * 8)


def symbols_for_payload(n_rbs: int, max_symbols: int, mcs: McsEntry, payload_bits: int,
                        dmrs_symbols: int = 1) -> int | None:
    """Fewest OFDM symbols (DMRS included) whose TBS carries ``payload_bits``; ``None`` if none does."""
    for n_sym in range(dmrs_symbols + 1, max_symbols + 1):
        if tbs_calculate(n_rbs, n_sym, mcs, dmrs_symbols) >= payload_bits:
            return n_sym
    return None


def coded_bits(n_rbs: int, n_symbols: int, mcs: McsEntry, dmrs_symbols: int = 1) -> int:
    """Coded bits carried by an allocation: ``N_RE * Qm``."""
    data_symbols = n_symbols - dmrs_symbols
    if n_rbs <= 0 or data_symbols <= 0:
        raise InvalidInputError("empty allocation")
    return SUBCARRIERS_PER_RB * n_rbs * data_symbols * mcs.modulation_order
